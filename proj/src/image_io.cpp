#include "scanet/image_io.hpp"

#include <cstring>

#include <png.h>

#include "scanet/errors.hpp"

namespace scanet {

void write_png(const std::filesystem::path &path, int width, int height,
               std::span<const std::uint8_t> rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3) {
    throw InputError("pixel buffer does not match " + std::to_string(width) + "x" +
                     std::to_string(height) + " RGB");
  }
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, rgb.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write " + path.string() + ": " + msg);
  }
}

void write_png(const std::filesystem::path &path, const RenderedImage &image) {
  write_png(path, image.size, image.size, image.rgb);
}

RenderedImage read_png(const std::filesystem::path &path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("cannot read " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  if (image.width != image.height) {
    png_image_free(&image);
    throw IoError(path.string() + " is not square");
  }
  RenderedImage out;
  out.size = static_cast<int>(image.width);
  out.rgb.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.rgb.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot decode " + path.string() + ": " + msg);
  }
  return out;
}

} // namespace scanet
