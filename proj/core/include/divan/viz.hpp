#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "divan/cpu_agg.hpp"
#include "divan/triple.hpp"

namespace divan {

struct PixelIntensity {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;

  friend bool operator==(const PixelIntensity&, const PixelIntensity&) = default;
};

// Blue below the expected value S, red above it, black at S; red saturates at 2S. Requires S > 0.
PixelIntensity intensity(double v, double s);

// 8-bit channel value, rounding half up.
std::uint8_t quantize(double channel);

struct ImageSpec {
  Triple triple;
  DimIndex z_dim = 0;
  DimIndex x_dim = 0;  // smaller of the remaining dims
  DimIndex y_dim = 0;
  std::uint32_t z_lo = 0;
  std::uint32_t z_hi = 0;  // exclusive
  std::uint32_t bins = 0;

  static ImageSpec make(const Triple& triple, DimIndex z_dim, std::uint32_t z_lo, std::uint32_t z_hi,
                        std::uint32_t bins);
  // Stable name derived from the spec, e.g. "t0-1-2_z1_0-32".
  std::string name() const;

  friend bool operator==(const ImageSpec&, const ImageSpec&) = default;
};

/// A B x B heatmap in bin coordinates: cell (x, y) lives at y * B + x, y-bin 0 being the bottom row
/// of the picture.
struct RenderedImage {
  ImageSpec spec;
  std::vector<double> cells;           // region totals per (x, y)
  std::vector<PixelIntensity> pixels;  // unquantized
  double expected = 0.0;               // S = region total / B^2
  double total = 0.0;
  double dataset_expected = 0.0;       // whole-cube total / B^2
  bool degenerate = false;             // region total <= 0: rendered black

  const PixelIntensity& at(std::uint32_t x, std::uint32_t y) const { return pixels[std::size_t{y} * spec.bins + x]; }
  // Top-to-bottom rows of 8-bit RGB, ready for encoding.
  std::vector<std::uint8_t> raster() const;
};

RenderedImage render(const AggregateCube& cube, const ImageSpec& spec);

// k images per z choice with z ranges [iB/k, (i+1)B/k); 3k images in z-dim order, then range order.
std::vector<RenderedImage> image_group(const AggregateCube& cube, std::uint32_t k);

nlohmann::json image_to_json(const RenderedImage& image);

// --- PNG ---------------------------------------------------------------------------------

struct RgbImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, top row first

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

void write_png(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_png(const std::filesystem::path& path);

// Writes <stem>.png and <stem>.json (sidecar, with `extra` merged in).
void encode_image(const RenderedImage& image, const std::filesystem::path& stem, const nlohmann::json& extra);

}  // namespace divan
