#pragma once

// Layered run configuration: built-in defaults <- JSON config file <- command-line overrides.
// Every knob is addressable by a dotted key such as "error_model.p" or "model.no_ar".

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "scanet/geometry.hpp"
#include "scanet/scene.hpp"

namespace scanet {

nlohmann::json default_config();

/// Reads a JSON document; throws IoError if unreadable, ConfigError if not a JSON object.
nlohmann::json load_config_file(const std::filesystem::path &path);

/// Recursively overlays `overlay` onto `base`; objects merge, everything else replaces.
void merge_config(nlohmann::json &base, const nlohmann::json &overlay);

/// Sets the value at a dotted key. Hyphens in key segments are read as underscores.
/// The text is parsed as JSON when possible; "a,b,c" becomes an array; otherwise a string.
void apply_override(nlohmann::json &cfg, const std::string &dotted_key, const std::string &text);

/// Throws ConfigError naming the first invalid knob.
void validate_config(const nlohmann::json &cfg);

/// 16 hex digits of FNV-1a over the compact dump of `j`.
std::string fnv1a_hex(const nlohmann::json &j);

/// Hash over the knobs a trained model depends on from the data side (world dims, image
/// size, camera, component box). Datasets and checkpoints both record it.
std::string interface_hash(const nlohmann::json &cfg);

Int3 world_dims_of(const nlohmann::json &cfg);
CameraConfig camera_of(const nlohmann::json &cfg);
Int3 component_box_of(const nlohmann::json &cfg);

/// SplitMix64 step: derives independent child seeds from a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

} // namespace scanet
