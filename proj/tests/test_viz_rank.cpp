#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "divan/error.hpp"
#include "divan/rank.hpp"
#include "divan/viz.hpp"
#include "support.hpp"

namespace divan {
namespace {

using testing::random_table;
using testing::TempDir;

AggregateCube count_cube(const Triple& t, std::uint32_t bins) { return AggregateCube::zeros(t, bins, AggSpec::count()); }

TEST(Intensity, Examples) {
  EXPECT_EQ(intensity(5.0, 5.0), (PixelIntensity{0, 0, 0}));
  EXPECT_EQ(intensity(0.0, 5.0), (PixelIntensity{0, 0, 1}));
  EXPECT_EQ(intensity(10.0, 5.0), (PixelIntensity{1, 0, 0}));
  EXPECT_EQ(intensity(15.0, 5.0), (PixelIntensity{1, 0, 0}));
  EXPECT_EQ(intensity(2.5, 5.0), (PixelIntensity{0, 0, 0.5}));
  EXPECT_EQ(intensity(7.5, 5.0), (PixelIntensity{0.5, 0, 0}));
  EXPECT_THROW(intensity(1.0, 0.0), Error);
  EXPECT_THROW(intensity(1.0, -2.0), Error);
}

TEST(Intensity, MonotoneAndNeverGreen) {
  auto rng = std::mt19937_64{1};
  auto dist = std::uniform_real_distribution<double>{0.0, 40.0};
  auto values = std::vector<double>(1000);
  std::generate(values.begin(), values.end(), [&] { return dist(rng); });
  std::sort(values.begin(), values.end());
  auto previous = intensity(values[0], 10.0);
  for (const auto v : values) {
    const auto p = intensity(v, 10.0);
    EXPECT_GE(p.r, previous.r);
    EXPECT_LE(p.b, previous.b);
    EXPECT_EQ(p.g, 0.0);
    EXPECT_TRUE(p.r == 0.0 || p.b == 0.0);
    previous = p;
  }
}

TEST(Quantize, RoundsHalfUp) {
  EXPECT_EQ(quantize(0.0), 0);
  EXPECT_EQ(quantize(1.0), 255);
  EXPECT_EQ(quantize(0.5), 128);  // 127.5 -> 128
  EXPECT_EQ(quantize(1.5 / 255.0), 2);
  EXPECT_EQ(quantize(-1.0), 0);
  EXPECT_EQ(quantize(2.0), 255);
}

TEST(ImageSpec, AxesAndName) {
  const auto spec = ImageSpec::make(Triple::of(0, 1, 2), 1, 0, 8, 32);
  EXPECT_EQ(spec.x_dim, 0u);
  EXPECT_EQ(spec.y_dim, 2u);
  EXPECT_EQ(spec.name(), "t0-1-2_z1_0-8");
  EXPECT_THROW(ImageSpec::make(Triple::of(0, 1, 2), 3, 0, 8, 32), Error);
  EXPECT_THROW(ImageSpec::make(Triple::of(0, 1, 2), 0, 8, 8, 32), Error);
  EXPECT_THROW(ImageSpec::make(Triple::of(0, 1, 2), 0, 0, 33, 32), Error);
}

TEST(Render, ConstantCubeIsBlack) {
  auto cube = count_cube(Triple::of(0, 1, 2), 8);
  std::fill(cube.counts.begin(), cube.counts.end(), 7);
  for (const auto& image : image_group(cube, 2)) {
    EXPECT_FALSE(image.degenerate);
    for (const auto& p : image.pixels) {
      EXPECT_EQ(p, (PixelIntensity{0, 0, 0}));
    }
  }
}

TEST(Render, UniformDataIsNearlyBlack) {
  const auto table = random_table(400000, 3, 8, 2);
  const auto cube = aggregate_record_major(table, AggSpec::count(), enumerate_triples(3))[0];
  const auto image = render(cube, ImageSpec::make(cube.triple, 2, 0, 8, 8));
  for (const auto& p : image.pixels) {
    EXPECT_LT(p.r, 0.1);
    EXPECT_LT(p.b, 0.1);
  }
}

TEST(Render, DiagonalIsRedOffDiagonalBlue) {
  auto table = random_table(20000, 3, 16, 3);
  table.columns[1] = table.columns[0];  // bin(y) = bin(x)
  const auto cube = aggregate_record_major(table, AggSpec::count(), enumerate_triples(3))[0];
  const auto image = render(cube, ImageSpec::make(cube.triple, 2, 0, 16, 16));
  for (auto y = std::uint32_t{0}; y < 16; ++y) {
    for (auto x = std::uint32_t{0}; x < 16; ++x) {
      if (x == y) {
        EXPECT_EQ(image.at(x, y), (PixelIntensity{1, 0, 0}));
      } else {
        EXPECT_EQ(image.at(x, y), (PixelIntensity{0, 0, 1}));
      }
    }
  }
}

TEST(Render, FullRangeIsTheMarginal) {
  const auto table = random_table(5000, 3, 8, 4);
  const auto cube = aggregate_record_major(table, AggSpec::count(), enumerate_triples(3))[0];
  for (const auto z : cube.triple.dims) {
    const auto image = render(cube, ImageSpec::make(cube.triple, z, 0, 8, 8));
    const auto marginal = marginalize(cube, cube.triple.axis_of(z));
    // marginalize keeps the remaining axes in triple order, i.e. (x, y) with x the smaller id.
    for (auto x = std::uint32_t{0}; x < 8; ++x) {
      for (auto y = std::uint32_t{0}; y < 8; ++y) {
        ASSERT_EQ(image.cells[y * 8 + x], marginal[x * 8 + y]);
      }
    }
    EXPECT_EQ(image.total, 5000.0);
    EXPECT_EQ(image.expected, 5000.0 / 64);
    EXPECT_EQ(image.dataset_expected, image.expected);
  }
}

TEST(Render, PartitionsAddUp) {
  const auto table = random_table(5000, 3, 8, 5);
  const auto cube = aggregate_record_major(table, AggSpec::sum(0, ValueType::float64), enumerate_triples(3))[0];
  const auto parts = image_group(cube, 4);
  ASSERT_EQ(parts.size(), 12u);
  const auto full = image_group(cube, 1);
  ASSERT_EQ(full.size(), 3u);
  for (auto z = std::size_t{0}; z < 3; ++z) {
    EXPECT_EQ(full[z].spec.z_lo, 0u);
    EXPECT_EQ(full[z].spec.z_hi, 8u);
    for (auto cell = std::size_t{0}; cell < 64; ++cell) {
      auto sum = 0.0;
      for (auto i = std::size_t{0}; i < 4; ++i) {
        EXPECT_EQ(parts[z * 4 + i].spec.z_dim, full[z].spec.z_dim);
        EXPECT_EQ(parts[z * 4 + i].spec.z_lo, i * 2);
        sum += parts[z * 4 + i].cells[cell];
      }
      EXPECT_NEAR(sum, full[z].cells[cell], 1e-9 * std::max(1.0, full[z].cells[cell]));
    }
  }
  EXPECT_THROW(image_group(cube, 3), Error);
  EXPECT_THROW(image_group(cube, 0), Error);
}

TEST(Render, EmptyRegionIsDegenerate) {
  auto cube = count_cube(Triple::of(0, 1, 2), 4);
  cube.counts[cube.index(1, 1, 3)] = 9;
  const auto empty = render(cube, ImageSpec::make(cube.triple, 2, 0, 2, 4));
  EXPECT_TRUE(empty.degenerate);
  for (const auto& p : empty.pixels) {
    EXPECT_EQ(p, (PixelIntensity{0, 0, 0}));
  }
  EXPECT_EQ(score(empty), 0.0);
  const auto full = render(cube, ImageSpec::make(cube.triple, 2, 0, 4, 4));
  EXPECT_FALSE(full.degenerate);
  EXPECT_THROW(render(cube, ImageSpec::make(Triple::of(0, 1, 3), 3, 0, 4, 4)), Error);
}

TEST(Raster, BottomRowIsYZero) {
  auto cube = count_cube(Triple::of(0, 1, 2), 4);
  // Everything in y-bin 0, x-bin 2.
  for (auto z = std::uint32_t{0}; z < 4; ++z) {
    cube.counts[cube.index(2, 0, z)] = 1;
  }
  const auto image = render(cube, ImageSpec::make(cube.triple, 2, 0, 4, 4));
  const auto raster = image.raster();
  ASSERT_EQ(raster.size(), 4u * 4 * 3);
  const auto pixel = [&](std::size_t row, std::size_t col) { return &raster[(row * 4 + col) * 3]; };
  EXPECT_EQ(pixel(3, 2)[0], 255);  // bottom row, red
  EXPECT_EQ(pixel(0, 2)[2], 255);  // top row, blue
  EXPECT_EQ(pixel(3, 1)[2], 255);
}

TEST(Png, RoundTripAndSidecar) {
  const auto dir = TempDir{"png"};
  const auto table = random_table(3000, 3, 32, 6);
  const auto cube = aggregate_record_major(table, AggSpec::count(), enumerate_triples(3))[0];
  const auto image = render(cube, ImageSpec::make(cube.triple, 1, 8, 16, 32));
  encode_image(image, dir / "img", {{"bounds", {"a.json"}}});
  const auto decoded = read_png(dir / "img.png");
  EXPECT_EQ(decoded.width, 32u);
  EXPECT_EQ(decoded.height, 32u);
  EXPECT_EQ(decoded.rgb, image.raster());
  auto sidecar = nlohmann::json{};
  std::ifstream{dir / "img.json"} >> sidecar;
  EXPECT_EQ(sidecar["name"], "t0-1-2_z1_8-16");
  EXPECT_EQ(sidecar["z_range"], (nlohmann::json{8, 16}));
  EXPECT_EQ(sidecar["z_dim"], 1);
  EXPECT_EQ(sidecar["x_dim"], 0);
  EXPECT_EQ(sidecar["y_dim"], 2);
  EXPECT_EQ(sidecar["total"], image.total);
  EXPECT_EQ(sidecar["bounds"][0], "a.json");

  auto odd = RgbImage{3, 2, {}};
  for (auto i = 0; i < 18; ++i) {
    odd.rgb.push_back(static_cast<std::uint8_t>(i * 13));
  }
  write_png(dir / "odd.png", odd);
  EXPECT_EQ(read_png(dir / "odd.png"), odd);
  EXPECT_THROW(write_png(dir / "bad.png", RgbImage{2, 2, {1, 2, 3}}), Error);
  std::ofstream{dir / "junk.png"} << "not a png";
  EXPECT_THROW(read_png(dir / "junk.png"), Error);
}

// --- ranking -------------------------------------------------------------------------------

ScoredImage scored(std::string id, Triple t, DimIndex z, std::uint32_t z_lo, double s, bool degenerate = false) {
  const auto spec = ImageSpec::make(t, z, z_lo, z_lo + 1, 8);
  return ScoredImage{std::move(id), t, spec.x_dim, spec.y_dim, z, z_lo, s, degenerate};
}

TEST(Score, MeanRed) {
  auto cube = count_cube(Triple::of(0, 1, 2), 2);
  // Cells (x,y): (0,0)=4, others 0 -> S=1, one red pixel saturated.
  cube.counts[cube.index(0, 0, 0)] = 4;
  EXPECT_DOUBLE_EQ(score(render(cube, ImageSpec::make(cube.triple, 2, 0, 2, 2))), 0.25);
  // All-blue or all-black scores 0.
  std::fill(cube.counts.begin(), cube.counts.end(), 3);
  EXPECT_EQ(score(render(cube, ImageSpec::make(cube.triple, 2, 0, 2, 2))), 0.0);
  const auto table = random_table(2000, 3, 8, 7);
  const auto real = aggregate_record_major(table, AggSpec::count(), enumerate_triples(3))[0];
  for (const auto& image : image_group(real, 2)) {
    const auto s = score(image);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Groups, KeyedByUnorderedAxes) {
  const auto images = std::vector<ScoredImage>{
      scored("a", Triple::of(0, 1, 2), 2, 0, 0.5), scored("b", Triple::of(0, 1, 3), 3, 0, 0.25),
      scored("c", Triple::of(0, 1, 2), 0, 0, 0.1), scored("d", Triple::of(0, 1, 2), 1, 0, 0.9, true)};
  const auto groups = group_by_axes(images);
  ASSERT_EQ(groups.size(), 3u);
  EXPECT_EQ(groups[0].key, (std::array<DimIndex, 2>{0, 1}));
  EXPECT_EQ(groups[0].members, (std::vector<std::size_t>{0, 1}));
  EXPECT_DOUBLE_EQ(groups[0].score, 0.75);
  EXPECT_EQ(groups[1].key, (std::array<DimIndex, 2>{0, 2}));
  EXPECT_EQ(groups[1].score, 0.0);  // degenerate member excluded
  EXPECT_EQ(groups[2].key, (std::array<DimIndex, 2>{1, 2}));
}

TEST(Groups, CensusForSixteenDims) {
  auto images = std::vector<ScoredImage>{};
  for (const auto& t : enumerate_triples(16)) {
    for (const auto z : t.dims) {
      for (auto i = std::uint32_t{0}; i < 4; ++i) {
        images.push_back(scored("x", t, z, i, 0.1));
      }
    }
  }
  EXPECT_EQ(images.size(), 6720u);
  EXPECT_EQ(group_by_axes(images).size(), 120u);  // C(16,2) axis pairs
  EXPECT_LE(select(images, 3, 5).size(), 15u);
  const auto one = select(images, 1, 1000);
  EXPECT_EQ(one.size(), 120u);
  auto seen = std::set<std::array<DimIndex, 2>>{};
  for (const auto& e : one) {
    EXPECT_TRUE(seen.insert(images[e.image].axes()).second);
  }
}

TEST(Select, OrdersAndBreaksTies) {
  const auto images = std::vector<ScoredImage>{
      scored("a", Triple::of(0, 1, 3), 3, 0, 0.5), scored("b", Triple::of(0, 1, 2), 2, 0, 0.5),
      scored("c", Triple::of(0, 2, 3), 3, 0, 0.6), scored("d", Triple::of(0, 2, 3), 3, 1, 0.1),
      scored("e", Triple::of(1, 2, 3), 3, 0, 0.2)};
  const auto out = select(images, 2, 2);
  ASSERT_EQ(out.size(), 4u);
  // Group (0,1) scores 1.0 > (0,2) 0.7 > (1,2) 0.2; a/b tie resolves by triple.
  EXPECT_EQ(images[out[0].image].id, "b");
  EXPECT_EQ(images[out[1].image].id, "a");
  EXPECT_EQ(images[out[2].image].id, "c");
  EXPECT_EQ(images[out[3].image].id, "d");
  EXPECT_EQ(out[2].group, 1u);
  EXPECT_THROW(select(images, 0, 1), Error);

  const auto bottom = select(images, 1, 1, true);
  ASSERT_EQ(bottom.size(), 1u);
  EXPECT_EQ(images[bottom[0].image].id, "e");
}

TEST(Select, EqualGroupScoresOrderByKey) {
  const auto images = std::vector<ScoredImage>{scored("late", Triple::of(1, 2, 3), 3, 0, 0.4),
                                               scored("early", Triple::of(0, 1, 3), 3, 0, 0.4)};
  const auto out = select(images, 1, 2);
  EXPECT_EQ(images[out[0].image].id, "early");
  EXPECT_EQ(images[out[1].image].id, "late");
}

TEST(Select, InvariantUnderInputOrder) {
  auto images = std::vector<ScoredImage>{};
  auto rng = std::mt19937_64{8};
  auto coarse = std::uniform_int_distribution<int>{0, 4};
  for (const auto& t : enumerate_triples(6)) {
    for (const auto z : t.dims) {
      for (auto i = std::uint32_t{0}; i < 2; ++i) {
        images.push_back(scored(t.to_string() + std::to_string(z) + std::to_string(i), t, z, i, coarse(rng) / 4.0));
      }
    }
  }
  const auto ids = [](const std::vector<ScoredImage>& list, const std::vector<RankedEntry>& out) {
    auto v = std::vector<std::string>{};
    for (const auto& e : out) {
      v.push_back(list[e.image].id);
    }
    return v;
  };
  const auto reference = ids(images, diversity_penalty(select(images, 4, 6), images));
  for (auto trial = 0; trial < 5; ++trial) {
    std::shuffle(images.begin(), images.end(), rng);
    EXPECT_EQ(ids(images, diversity_penalty(select(images, 4, 6), images)), reference);
  }
}

TEST(DiversityPenalty, FactorOneIsIdentity) {
  auto images = std::vector<ScoredImage>{};
  for (const auto& t : enumerate_triples(5)) {
    for (const auto z : t.dims) {
      images.push_back(scored("i", t, z, 0, (t[0] + t[1] * 3 + t[2] * 7 + z) % 11 / 10.0));
    }
  }
  const auto selected = select(images, 3, 10);
  const auto same = diversity_penalty(selected, images, 1.0);
  ASSERT_EQ(same.size(), selected.size());
  for (auto i = std::size_t{0}; i < same.size(); ++i) {
    EXPECT_EQ(same[i].image, selected[i].image);
    EXPECT_EQ(same[i].effective_score, images[same[i].image].score);
  }
}

TEST(DiversityPenalty, DemotesSecondZ) {
  // One (0,1) group with z in {2,3}.
  const auto images = std::vector<ScoredImage>{
      scored("A", Triple::of(0, 1, 2), 2, 0, 0.9), scored("B", Triple::of(0, 1, 3), 3, 0, 0.8),
      scored("C", Triple::of(0, 1, 2), 2, 1, 0.6), scored("D", Triple::of(0, 1, 3), 3, 1, 0.5)};
  const auto selected = select(images, 4, 1);
  ASSERT_EQ(selected.size(), 4u);
  EXPECT_EQ(images[selected[1].image].id, "B");
  const auto out = diversity_penalty(selected, images, 0.5);
  auto order = std::string{};
  for (const auto& e : out) {
    order += images[e.image].id;
  }
  EXPECT_EQ(order, "ACBD");
  EXPECT_DOUBLE_EQ(out[2].effective_score, 0.4);
  EXPECT_DOUBLE_EQ(out[3].effective_score, 0.25);
}

}  // namespace
}  // namespace divan
