#pragma once

// Synthetic error-correction datasets: procedural manuals, labelled pose-error injection,
// on-disk layout, splits and statistics.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "scanet/geometry.hpp"
#include "scanet/scene.hpp"

namespace scanet {

enum class Status : int { Correct = 0, PositionError = 1, RotationError = 2, PosRotError = 3 };

inline constexpr int kStatusCount = 4;
const char *status_name(Status s);
Status status_from_index(int index);

/// Named shape from the built-in library. Throws ConfigError for unknown names.
VoxelGrid library_shape(const std::string &name);
/// Every shape name the library knows, sorted.
std::vector<std::string> library_shape_names();

struct ErrorModel {
  std::array<double, 4> p{0.35, 0.35, 0.05, 0.25}; // indexed by Status
  int max_offset = 2;

  /// Throws ConfigError unless p is a distribution (within 1e-9) and max_offset >= 1.
  void validate() const;
  static ErrorModel from_config(const nlohmann::json &cfg);
  nlohmann::json to_json() const;
};

struct GenConfig {
  Int3 world_dims{16, 16, 12};
  Int3 component_box{8, 8, 4};
  std::array<int, 2> steps{6, 10};
  std::array<int, 2> components_per_step{2, 5};
  std::vector<std::string> shapes;
  double placement_region = 0.5;
  int max_retries = 500;

  static GenConfig from_config(const nlohmann::json &cfg);
};

/// Deterministic in (cfg, seed). Throws GenerationError if a placement cannot be found.
Manual generate_manual(const GenConfig &cfg, std::uint64_t seed, const std::string &id = "0000");

/// Status implied by a (GT, corrupted) pose pair under the component's symmetry.
Status label_error(const Pose6D &gt, const Pose6D &corrupted, SymmetryGroup sym);

struct CorruptedStep {
  std::vector<Pose6D> poses;
  std::vector<Status> labels;
};

/// Noisy-oracle assembly of one step: per component draws a Status from the error model and
/// perturbs the GT pose accordingly. Labels are re-derived with label_error.
CorruptedStep corrupt_step(const AssemblyStep &step, const Int3 &world_dims,
                           const ErrorModel &model, std::mt19937_64 &rng);
CorruptedStep corrupt_step(const AssemblyStep &step, const Int3 &world_dims,
                           const ErrorModel &model, std::uint64_t seed);

struct Sample {
  std::string manual_id;
  int step_index = 0;
  int draw = 0;
  std::vector<int> component_ids;
  std::vector<Pose6D> corrupted_poses;
  std::vector<Status> labels;
  std::vector<Pose6D> correct_poses;

  std::string key() const; // manual/step/draw
  nlohmann::json to_json() const;
  static Sample from_json(const nlohmann::json &j);
};

/// Result of split_dataset: sample keys for train/val, manual ids for the setwise test.
struct DatasetSplits {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> setwise_test;
};

/// Takes `setwise_fraction` of the manuals (at least one) whole for the setwise test, then
/// splits the remaining samples by `train_fraction`. Throws InputError for < 3 manuals.
DatasetSplits split_dataset(const std::vector<std::string> &manual_ids,
                            const std::vector<Sample> &samples, std::uint64_t seed,
                            double setwise_fraction = 0.1, double train_fraction = 0.8);

/// In-memory dataset: manuals plus every corruption draw.
struct Dataset {
  std::filesystem::path root;
  nlohmann::json manifest;
  std::map<std::string, Manual> manuals;
  std::vector<Sample> samples; // manifest order
  DatasetSplits splits;

  const Manual &manual(const std::string &id) const;
  const Sample &sample(const std::string &key) const;
  std::vector<const Sample *> select(const std::vector<std::string> &keys) const;

  /// Loads manifest.json, manuals and samples. Throws IoError / DataError.
  static Dataset load(const std::filesystem::path &root);
  /// Rebuilds the key lookup after `samples` changes.
  void reindex();

private:
  std::map<std::string, std::size_t> index_;
};

/// Generates the full dataset in memory (manuals, draws, splits, manifest) without touching
/// the filesystem.
Dataset build_dataset_in_memory(const nlohmann::json &cfg, std::uint64_t seed);

/// Generates and writes root/manifest.json, root/config.json, root/manuals/<id>/manual.json and
/// root/manuals/<id>/steps/<k>/{gt.png, sample_<j>.json, sample_<j>/assembled.png,
/// sample_<j>/comp_<i>.png}. Images are skipped when dataset.write_images is false.
Dataset build_dataset(const nlohmann::json &cfg, std::uint64_t seed,
                      const std::filesystem::path &root);

struct DatasetStats {
  std::array<std::int64_t, 4> status_counts{};
  std::array<double, 4> status_proportions{};
  std::map<int, int> steps_histogram;      // steps per manual -> manual count
  std::map<int, int> components_histogram; // components per step -> step count
  int manuals = 0;
  int samples = 0;
  std::int64_t components = 0;

  nlohmann::json to_json() const;
};

DatasetStats dataset_stats(const Dataset &dataset);

/// Bar charts of the two histograms and the status proportions, side by side.
void write_stats_png(const DatasetStats &stats, const std::filesystem::path &path);

/// Relative path of a sample file under the dataset root.
std::filesystem::path sample_path(const Sample &s);

/// Writes `j` with 2-space indentation and a trailing newline. Throws IoError.
void write_json_file(const std::filesystem::path &path, const nlohmann::json &j);
/// Throws IoError if unreadable, DataError if not JSON.
nlohmann::json read_json_file(const std::filesystem::path &path);

} // namespace scanet
