#include <png.h>

#include <cstdio>
#include <memory>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "divan/error.hpp"
#include "divan/viz.hpp"

namespace divan {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open(const std::filesystem::path& path, const char* mode) {
  auto file = FilePtr{std::fopen(path.c_str(), mode)};
  if (!file) {
    throw Error("cannot open '" + path.string() + "'");
  }
  return file;
}

}  // namespace

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  if (image.rgb.size() != std::size_t{image.width} * image.height * 3) {
    throw Error("RGB buffer does not match " + std::to_string(image.width) + "x" + std::to_string(image.height));
  }
  auto file = open(path, "wb");
  auto* png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  auto* info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng failed writing '" + path.string() + "'");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (auto row = std::uint32_t{0}; row < image.height; ++row) {
    png_write_row(png, image.rgb.data() + std::size_t{row} * image.width * 3);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RgbImage read_png(const std::filesystem::path& path) {
  auto file = open(path, "rb");
  auto* png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  auto* info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("libpng init failed");
  }
  auto image = RgbImage{};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IntegrityError("'" + path.string() + "' is not a readable PNG");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  image.width = png_get_image_width(png, info);
  image.height = png_get_image_height(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_RGB || png_get_bit_depth(png, info) != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IntegrityError("'" + path.string() + "' is not an 8-bit RGB PNG");
  }
  image.rgb.resize(std::size_t{image.width} * image.height * 3);
  for (auto row = std::uint32_t{0}; row < image.height; ++row) {
    png_read_row(png, image.rgb.data() + std::size_t{row} * image.width * 3, nullptr);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void encode_image(const RenderedImage& image, const std::filesystem::path& stem, const nlohmann::json& extra) {
  auto png_path = stem;
  png_path += ".png";
  auto json_path = stem;
  json_path += ".json";
  write_png(png_path, RgbImage{image.spec.bins, image.spec.bins, image.raster()});
  auto sidecar = image_to_json(image);
  sidecar.update(extra);
  detail::write_text(json_path, sidecar.dump(2));
}

}  // namespace divan
