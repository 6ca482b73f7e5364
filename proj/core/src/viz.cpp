#include "divan/viz.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "divan/error.hpp"

namespace divan {

PixelIntensity intensity(double v, double s) {
  if (!(s > 0.0)) {
    throw Error("expected value must be positive");
  }
  if (v <= s) {
    return {0.0, 0.0, 1.0 - v / s};
  }
  return {std::min(1.0, v / s - 1.0), 0.0, 0.0};
}

std::uint8_t quantize(double channel) {
  const auto clamped = std::clamp(channel, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5));
}

ImageSpec ImageSpec::make(const Triple& triple, DimIndex z_dim, std::uint32_t z_lo, std::uint32_t z_hi,
                          std::uint32_t bins) {
  if (!triple.contains(z_dim)) {
    throw Error("z dim " + std::to_string(z_dim) + " is not in triple " + triple.to_string());
  }
  if (z_lo >= z_hi || z_hi > bins) {
    throw Error("bad z range [" + std::to_string(z_lo) + ", " + std::to_string(z_hi) + ") for B=" +
                std::to_string(bins));
  }
  auto spec = ImageSpec{triple, z_dim, 0, 0, z_lo, z_hi, bins};
  auto rest = std::vector<DimIndex>{};
  for (const auto d : triple.dims) {
    if (d != z_dim) {
      rest.push_back(d);
    }
  }
  spec.x_dim = rest[0];
  spec.y_dim = rest[1];
  return spec;
}

std::string ImageSpec::name() const {
  return "t" + std::to_string(triple[0]) + "-" + std::to_string(triple[1]) + "-" + std::to_string(triple[2]) + "_z" +
         std::to_string(z_dim) + "_" + std::to_string(z_lo) + "-" + std::to_string(z_hi);
}

std::vector<std::uint8_t> RenderedImage::raster() const {
  const auto bins = spec.bins;
  auto out = std::vector<std::uint8_t>{};
  out.reserve(std::size_t{bins} * bins * 3);
  for (auto row = std::uint32_t{0}; row < bins; ++row) {
    const auto y = bins - 1 - row;
    for (auto x = std::uint32_t{0}; x < bins; ++x) {
      const auto& p = at(x, y);
      out.push_back(quantize(p.r));
      out.push_back(quantize(p.g));
      out.push_back(quantize(p.b));
    }
  }
  return out;
}

RenderedImage render(const AggregateCube& cube, const ImageSpec& spec) {
  if (spec.triple != cube.triple || spec.bins != cube.bins) {
    throw Error("image spec " + spec.name() + " does not match cube " + cube.triple.to_string());
  }
  const auto bins = spec.bins;
  const auto ax = cube.triple.axis_of(spec.x_dim);
  const auto ay = cube.triple.axis_of(spec.y_dim);
  const auto az = cube.triple.axis_of(spec.z_dim);

  auto image = RenderedImage{};
  image.spec = spec;
  image.cells.assign(std::size_t{bins} * bins, 0.0);
  auto b = std::array<std::uint32_t, 3>{};
  for (auto z = spec.z_lo; z < spec.z_hi; ++z) {
    b[az] = z;
    for (auto y = std::uint32_t{0}; y < bins; ++y) {
      b[ay] = y;
      for (auto x = std::uint32_t{0}; x < bins; ++x) {
        b[ax] = x;
        image.cells[std::size_t{y} * bins + x] += cube.value(cube.index(b[0], b[1], b[2]));
      }
    }
  }
  for (const auto c : image.cells) {
    image.total += c;
  }
  const auto area = static_cast<double>(bins) * bins;
  image.expected = image.total / area;
  image.dataset_expected = cube.total() / area;
  image.degenerate = !(image.expected > 0.0);
  image.pixels.resize(image.cells.size());
  if (!image.degenerate) {
    std::transform(image.cells.begin(), image.cells.end(), image.pixels.begin(),
                   [&](double v) { return intensity(v, image.expected); });
  }
  return image;
}

std::vector<RenderedImage> image_group(const AggregateCube& cube, std::uint32_t k) {
  if (k == 0 || cube.bins % k != 0) {
    throw Error("partition count " + std::to_string(k) + " does not divide B=" + std::to_string(cube.bins));
  }
  const auto width = cube.bins / k;
  auto images = std::vector<RenderedImage>{};
  images.reserve(3 * k);
  for (const auto z : cube.triple.dims) {
    for (auto i = std::uint32_t{0}; i < k; ++i) {
      images.push_back(render(cube, ImageSpec::make(cube.triple, z, i * width, (i + 1) * width, cube.bins)));
    }
  }
  return images;
}

nlohmann::json image_to_json(const RenderedImage& image) {
  const auto& s = image.spec;
  return {{"name", s.name()},
          {"triple", s.triple.dims},
          {"x_dim", s.x_dim},
          {"y_dim", s.y_dim},
          {"z_dim", s.z_dim},
          {"z_range", {s.z_lo, s.z_hi}},
          {"bins", s.bins},
          {"expected", image.expected},
          {"total", image.total},
          {"dataset_expected", image.dataset_expected},
          {"degenerate", image.degenerate},
          {"orientation", "y-bin 0 at the bottom row"}};
}

}  // namespace divan
