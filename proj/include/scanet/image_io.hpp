#pragma once

#include <filesystem>

#include "scanet/scene.hpp"

namespace scanet {

/// Writes an 8-bit RGB PNG. Throws IoError with the path on failure.
void write_png(const std::filesystem::path &path, const RenderedImage &image);

/// Writes an 8-bit RGB PNG of arbitrary (width x height) from row-major RGB bytes.
void write_png(const std::filesystem::path &path, int width, int height,
               std::span<const std::uint8_t> rgb);

/// Reads a square 8-bit RGB PNG.
RenderedImage read_png(const std::filesystem::path &path);

} // namespace scanet
