#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "divan/binning.hpp"
#include "divan/error.hpp"
#include "divan/synthetic.hpp"
#include "support.hpp"

namespace divan {
namespace {

using testing::integer_dataset;

std::vector<RowId> all_rows(const Dataset& dataset) {
  auto rows = std::vector<RowId>(dataset.row_count());
  std::iota(rows.begin(), rows.end(), RowId{0});
  return rows;
}

// Histogram binning written straight from the three-pass description, with the table size a parameter.
std::vector<BinIndex> reference_approx(const std::vector<std::uint32_t>& ranks, std::size_t total, std::uint32_t bins) {
  auto idx_bits = 0u;
  while ((std::size_t{1} << idx_bits) < total) {
    ++idx_bits;
  }
  const auto shift = idx_bits > 20 ? idx_bits - 20 : 0u;
  auto buckets = std::vector<std::uint64_t>(std::size_t{1} << std::min(idx_bits, 20u), 0);
  for (const auto r : ranks) {
    buckets[r >> shift] += 1;
  }
  const auto per_bin = (ranks.size() + bins - 1) / bins;
  auto seen = std::uint64_t{0};
  for (auto& b : buckets) {
    const auto count = b;
    b = seen / per_bin;
    seen += count;
  }
  auto out = std::vector<BinIndex>{};
  for (const auto r : ranks) {
    out.push_back(static_cast<BinIndex>(buckets[r >> shift]));
  }
  return out;
}

std::vector<std::uint32_t> ranks_for(const Dataset& dataset, DimensionId dim, const std::vector<RowId>& rows) {
  auto out = std::vector<std::uint32_t>{};
  for (const auto r : rows) {
    out.push_back(dataset.sorted_index(dim).ranks[r]);
  }
  return out;
}

Dataset uniform(std::size_t rows, std::uint64_t seed) {
  auto dataset = make_uniform_dataset(rows, 1, seed);
  preprocess(dataset, 1);
  return dataset;
}

TEST(BinExact, OneTuplePerBin) {
  auto values = std::vector<std::int64_t>(100);
  std::iota(values.rbegin(), values.rend(), 0);
  auto dataset = integer_dataset({values});
  const auto binned = bin_exact(dataset, 0, all_rows(dataset), 100);
  for (auto row = 0; row < 100; ++row) {
    EXPECT_EQ(binned.values[row], values[row]);
  }
}

TEST(BinExact, RepeatedValueSpansBins) {
  auto dataset = integer_dataset({{1, 1, 1, 1, 2, 2, 3, 4}});
  EXPECT_EQ(bin_exact(dataset, 0, all_rows(dataset), 4).values, (std::vector<BinIndex>{0, 0, 1, 1, 2, 2, 3, 3}));
  auto same = integer_dataset({{5, 5, 5, 5, 5, 5, 5, 5}});
  EXPECT_EQ(bin_exact(same, 0, all_rows(same), 4).values, (std::vector<BinIndex>{0, 0, 1, 1, 2, 2, 3, 3}));
}

TEST(BinExact, PopulationsAreCeilingExceptLast) {
  auto rng = std::mt19937_64{5};
  auto draw = std::uniform_int_distribution<std::int64_t>{0, 50};
  for (const auto [n, bins] : {std::pair{1000, 7}, std::pair{1003, 32}, std::pair{4096, 128}}) {
    auto values = std::vector<std::int64_t>(n);
    for (auto& v : values) {
      v = draw(rng);
    }
    auto dataset = integer_dataset({values});
    const auto binned = bin_exact(dataset, 0, all_rows(dataset), bins);
    auto population = std::vector<int>(bins, 0);
    for (const auto b : binned.values) {
      ++population[b];
    }
    const auto per_bin = (n + bins - 1) / bins;
    auto remaining = n;
    for (auto b = 0; b < bins; ++b) {
      EXPECT_EQ(population[b], std::min(per_bin, remaining)) << "n=" << n << " B=" << bins << " bin " << b;
      remaining -= population[b];
    }
  }
}

TEST(BinExact, MoreBinsThanTuplesThrows) {
  auto dataset = integer_dataset({{1, 2, 3}});
  EXPECT_THROW(bin_exact(dataset, 0, all_rows(dataset), 4), Error);
  EXPECT_THROW(bin_exact(dataset, 0, all_rows(dataset), 1), Error);
}

TEST(BinExact, SubsetUsesSubsetOrder) {
  auto dataset = integer_dataset({{9, 1, 8, 2, 7, 3}});
  const auto rows = std::vector<RowId>{0, 2, 4};
  EXPECT_EQ(bin_exact(dataset, 0, rows, 3).values, (std::vector<BinIndex>{2, 1, 0}));
}

TEST(Histogram, Geometry) {
  EXPECT_EQ(histogram_geometry(1000).idx_bits, 10u);
  EXPECT_EQ(histogram_geometry(1000).shift, 0u);
  EXPECT_EQ(histogram_geometry(1000).size, 1024u);
  EXPECT_EQ(histogram_geometry(std::size_t{1} << 20).shift, 0u);
  EXPECT_EQ(histogram_geometry((std::size_t{1} << 20) + 1).shift, 1u);
  EXPECT_EQ(histogram_geometry(std::size_t{100'000'000}).size, kHistogramSize);
  EXPECT_EQ(histogram_geometry(std::size_t{100'000'000}).shift, 7u);
}

TEST(BinApprox, TuplesPerBinIsCeiling) {
  // One rank per bucket: bin = position / ceil(1000 / 128) = position / 8.
  auto ranks = std::vector<std::uint32_t>(1000);
  std::iota(ranks.begin(), ranks.end(), 0u);
  const auto binned = bin_approx(ranks, 1000, 128);
  for (auto p = 0u; p < 1000; ++p) {
    ASSERT_EQ(binned.values[p], p / 8);
  }
}

TEST(BinApprox, MatchesExactWhenBucketsHoldOneRank) {
  const auto dataset = uniform(1024, 9);
  const auto rows = all_rows(dataset);
  for (const auto bins : {2u, 32u, 128u, 1000u}) {
    const auto exact = bin_exact(dataset, 0, rows, bins);
    const auto approx = bin_approx(ranks_for(dataset, 0, rows), dataset.row_count(), bins);
    EXPECT_EQ(approx.values, exact.values) << "B=" << bins;
  }
}

TEST(BinApprox, MatchesReferencePasses) {
  const auto dataset = uniform(3'000'000, 4);
  auto rows = std::vector<RowId>{};
  for (auto r = RowId{0}; r < dataset.row_count(); r += 3) {
    rows.push_back(r);
  }
  const auto ranks = ranks_for(dataset, 0, rows);
  EXPECT_EQ(bin_approx(ranks, dataset.row_count(), 128).values, reference_approx(ranks, dataset.row_count(), 128));
}

TEST(BinApprox, EveryOtherTupleStaysNearTarget) {
  const auto dataset = uniform(200'000, 21);
  auto rows = std::vector<RowId>{};
  for (auto r = RowId{0}; r < dataset.row_count(); r += 2) {
    rows.push_back(r);
  }
  const auto ranks = ranks_for(dataset, 0, rows);
  const auto binned = bin_approx(ranks, dataset.row_count(), 128);
  const auto geometry = histogram_geometry(dataset.row_count());
  auto occupancy = std::vector<std::uint32_t>(geometry.size, 0);
  for (const auto r : ranks) {
    ++occupancy[r >> geometry.shift];
  }
  const auto max_bucket = *std::max_element(occupancy.begin(), occupancy.end());
  auto population = std::vector<std::int64_t>(128, 0);
  for (const auto b : binned.values) {
    ++population[b];
  }
  const auto per_bin = std::int64_t{(100'000 + 127) / 128};
  ASSERT_EQ(per_bin, 782);
  for (auto b = 0; b < 127; ++b) {
    EXPECT_LE(std::abs(population[b] - per_bin), max_bucket) << "bin " << b;
  }
}

TEST(BinApprox, PopulationBoundAndMonotone) {
  const auto dataset = uniform(1 << 21, 8);
  auto rng = std::mt19937_64{2};
  auto coin = std::bernoulli_distribution{0.3};
  auto rows = std::vector<RowId>{};
  for (auto r = RowId{0}; r < dataset.row_count(); ++r) {
    if (coin(rng)) {
      rows.push_back(r);
    }
  }
  const auto ranks = ranks_for(dataset, 0, rows);
  const auto binned = bin_approx(ranks, dataset.row_count(), 64);
  const auto geometry = histogram_geometry(dataset.row_count());
  auto occupancy = std::vector<std::uint32_t>(geometry.size, 0);
  for (const auto r : ranks) {
    ++occupancy[r >> geometry.shift];
  }
  const auto max_bucket = *std::max_element(occupancy.begin(), occupancy.end());
  auto population = std::vector<std::size_t>(64, 0);
  for (const auto b : binned.values) {
    ++population[b];
  }
  const auto per_bin = (rows.size() + 63) / 64;
  for (const auto p : population) {
    EXPECT_LE(p, per_bin + max_bucket);
  }
  auto by_rank = std::vector<std::pair<std::uint32_t, BinIndex>>{};
  for (auto i = std::size_t{0}; i < rows.size(); ++i) {
    by_rank.emplace_back(ranks[i], binned.values[i]);
  }
  std::sort(by_rank.begin(), by_rank.end());
  for (auto i = std::size_t{1}; i < by_rank.size(); ++i) {
    ASSERT_LE(by_rank[i - 1].second, by_rank[i].second);
  }
}

TEST(BinApprox, SmallSubsetSignalsFallback) {
  const auto total = std::size_t{1} << 20;
  EXPECT_TRUE(approx_binning_applicable(128, total));
  EXPECT_FALSE(approx_binning_applicable(127, total));
  auto ranks = std::vector<std::uint32_t>(127);
  std::iota(ranks.begin(), ranks.end(), 0u);
  EXPECT_THROW(bin_approx(ranks, total, 4), SubsetTooSmall);
}

TEST(BinDimension, AutomaticFallsBackToExact) {
  const auto dataset = uniform(1 << 16, 12);
  auto rows = std::vector<RowId>{};
  for (auto r = RowId{0}; r < 7; ++r) {  // 7 < 2^16 / 2^13
    rows.push_back(r * 1000);
  }
  EXPECT_THROW(bin_dimension(dataset, 0, rows, 2, BinningMode::approximate), SubsetTooSmall);
  EXPECT_EQ(bin_dimension(dataset, 0, rows, 2).values, bin_exact(dataset, 0, rows, 2).values);
}

TEST(Boundaries, HandExample) {
  auto dataset = integer_dataset({{9, 1, 2, 1}});
  const auto rows = all_rows(dataset);
  const auto binned = bin_exact(dataset, 0, rows, 2);
  const auto bounds = bin_boundaries(dataset, 0, rows, binned);
  ASSERT_EQ(bounds.ranges.size(), 2u);
  EXPECT_EQ(std::get<std::int64_t>(bounds.ranges[0]->min[0]), 1);
  EXPECT_EQ(std::get<std::int64_t>(bounds.ranges[0]->max[0]), 1);
  EXPECT_EQ(std::get<std::int64_t>(bounds.ranges[1]->min[0]), 2);
  EXPECT_EQ(std::get<std::int64_t>(bounds.ranges[1]->max[0]), 9);
  const auto json = boundaries_to_json(bounds, dataset);
  EXPECT_EQ(json["ranges"][1]["lo"], 2);
  EXPECT_EQ(json["ranges"][1]["hi"], 9);
}

TEST(Boundaries, EmptyBinIsMarked) {
  auto dataset = integer_dataset({{1, 2, 3, 4}});
  const auto rows = all_rows(dataset);
  const auto binned = BinnedColumn{0, 3, {0, 0, 2, 2}};
  const auto bounds = bin_boundaries(dataset, 0, rows, binned);
  EXPECT_TRUE(bounds.ranges[0].has_value());
  EXPECT_FALSE(bounds.ranges[1].has_value());
  EXPECT_EQ(boundaries_to_json(bounds, dataset)["ranges"][1]["empty"], true);
}

TEST(Boundaries, ZeroTipBandReportsZeroRange) {
  auto dataset = make_taxi_dataset(20000, 17);
  preprocess(dataset, 1);
  const auto tip = *dataset.find_dimension("tip_amount");
  const auto rows = all_rows(dataset);
  for (const auto mode : {BinningMode::exact, BinningMode::approximate}) {
    const auto binned = bin_dimension(dataset, tip, rows, 32, mode);
    const auto bounds = bin_boundaries(dataset, tip, rows, binned);
    // About 30% zeros fill bins 0..8 of 32 entirely.
    for (auto b = 0; b < 9; ++b) {
      ASSERT_TRUE(bounds.ranges[b].has_value());
      EXPECT_EQ(std::get<double>(bounds.ranges[b]->min[0]), 0.0) << "bin " << b;
      EXPECT_EQ(std::get<double>(bounds.ranges[b]->max[0]), 0.0) << "bin " << b;
    }
  }
}

TEST(Boundaries, OrderConsistent) {
  auto rng = std::mt19937_64{6};
  auto draw = std::uniform_int_distribution<std::int64_t>{0, 30};
  auto values = std::vector<std::int64_t>(5000);
  for (auto& v : values) {
    v = draw(rng);
  }
  auto dataset = integer_dataset({values});
  const auto rows = all_rows(dataset);
  const auto bounds = bin_boundaries(dataset, 0, rows, bin_exact(dataset, 0, rows, 64));
  auto last_max = std::int64_t{-1};
  for (const auto& range : bounds.ranges) {
    if (range) {
      EXPECT_LE(last_max, std::get<std::int64_t>(range->min[0]));
      last_max = std::get<std::int64_t>(range->max[0]);
    }
  }
}

TEST(Boundaries, CompositeReportsBothComponents) {
  auto dataset = integer_dataset({{0, 0, 1, 1}, {5, 3, 9, 2}});
  const auto dim = dataset.add_composite(0, 1);
  preprocess(dataset, 1);
  const auto rows = all_rows(dataset);
  const auto bounds = bin_boundaries(dataset, dim, rows, bin_exact(dataset, dim, rows, 2));
  ASSERT_EQ(bounds.ranges[0]->min.size(), 2u);
  EXPECT_EQ(std::get<std::int64_t>(bounds.ranges[0]->min[1]), 3);
  EXPECT_EQ(std::get<std::int64_t>(bounds.ranges[1]->max[1]), 9);
}

TEST(Insert, BucketLookupEdges) {
  // Values 10, 20, ..., 80 at ranks 0..7; new rows: 5 (below all) and 30 (equal to a first value).
  auto dataset = integer_dataset({{10, 20, 30, 40, 50, 60, 70, 80, 5, 30}});
  preprocess(dataset, 1);
  const auto base = std::vector<RowId>{0, 1, 2, 3, 4, 5, 6, 7};
  const auto tracked = bin_approx_tracked(dataset, 0, base, 4);
  // With the new rows present the ranks shift, so bucket bins come from the tracked column.
  const auto inserted = absorb_insert(dataset, 0, std::vector<RowId>{8, 9}, tracked.bounds);
  EXPECT_EQ(inserted[0], tracked.bounds.bucket_bins.front());
  const auto slot_of_30 = std::find_if(tracked.bounds.first_values.begin(), tracked.bounds.first_values.end(),
                                       [](const DimKey& k) { return std::get<std::int64_t>(k[0]) == 30; });
  ASSERT_NE(slot_of_30, tracked.bounds.first_values.end());
  EXPECT_EQ(inserted[1], tracked.bounds.bucket_bins[slot_of_30 - tracked.bounds.first_values.begin()]);
}

TEST(Insert, FirstValuesNondecreasing) {
  const auto dataset = uniform(50000, 31);
  const auto tracked = bin_approx_tracked(dataset, 0, all_rows(dataset), 32);
  for (auto i = std::size_t{1}; i < tracked.bounds.first_values.size(); ++i) {
    EXPECT_LE(dataset.compare_keys(0, tracked.bounds.first_values[i - 1], tracked.bounds.first_values[i]), 0);
  }
}

TEST(Insert, WithinOneBinOfExactRecompute) {
  const auto dataset = uniform(1'000'100, 41);
  auto base = std::vector<RowId>(1'000'000);
  std::iota(base.begin(), base.end(), RowId{0});
  auto late = std::vector<RowId>(100);
  std::iota(late.begin(), late.end(), RowId{1'000'000});
  const auto tracked = bin_approx_tracked(dataset, 0, base, 128);
  const auto inserted = absorb_insert(dataset, 0, late, tracked.bounds);

  auto everything = base;
  everything.insert(everything.end(), late.begin(), late.end());
  const auto exact = bin_exact(dataset, 0, everything, 128);
  for (auto i = std::size_t{0}; i < late.size(); ++i) {
    const auto expected = exact.values[base.size() + i];
    EXPECT_LE(std::abs(int{inserted[i]} - int{expected}), 1) << "insert " << i;
  }
}

TEST(Insert, MissingBoundsThrow) {
  auto dataset = integer_dataset({{1, 2}});
  preprocess(dataset, 1);
  EXPECT_THROW(absorb_insert(dataset, 0, std::vector<RowId>{0}, BucketBounds{}), Error);
}

}  // namespace
}  // namespace divan
