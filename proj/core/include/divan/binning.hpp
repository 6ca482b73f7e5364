#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "divan/dataset.hpp"

namespace divan {

using BinIndex = std::uint16_t;

inline constexpr std::uint32_t kMaxBins = 65535;
inline constexpr unsigned kHistogramBits = 20;
inline constexpr std::size_t kHistogramSize = std::size_t{1} << kHistogramBits;  // 1,048,576 buckets
// The histogram path is only used for subsets holding at least 1/2^13 of the preprocessed rows.
inline constexpr unsigned kApproxThresholdBits = 13;

struct BinnedColumn {
  DimensionId dim = 0;
  std::uint32_t bins = 0;
  // One entry per analyzed tuple, in the order the tuples were supplied; every value < bins.
  std::vector<BinIndex> values;
};

struct HistogramGeometry {
  unsigned idx_bits = 0;  // ceil(log2(total_num_tuples))
  unsigned shift = 0;     // max(0, idx_bits - 20)
  std::size_t size = 0;   // 2^min(idx_bits, 20)
};

HistogramGeometry histogram_geometry(std::size_t total_num_tuples);

// Bucket populations for a subset of ranks (first histogram pass).
std::vector<std::uint32_t> rank_histogram(std::span<const std::uint32_t> ranks, std::size_t total_num_tuples);

bool approx_binning_applicable(std::size_t num_tuples, std::size_t total_num_tuples);

/// Equidepth bins from the exact sort order of the subset: the tuple at sorted position p
/// gets bin p / ceil(n / bins). Ties are ordered by row id, so one value may span bins.
BinnedColumn bin_exact(const Dataset& dataset, DimensionId dim, std::span<const RowId> rows, std::uint32_t bins);

/// Approximate equidepth bins from preprocessed ranks through a 2^20-bucket histogram.
/// `ranks` holds the sorted-index entries of the analyzed subset. Throws SubsetTooSmall
/// when the subset is below the 2^-13 threshold.
BinnedColumn bin_approx(std::span<const std::uint32_t> ranks, std::size_t total_num_tuples, std::uint32_t bins,
                        DimensionId dim = 0);

// Per nonempty histogram bucket: the key of its first tuple in sort order and the bin it maps to.
struct BucketBounds {
  DimensionId dim = 0;
  std::uint32_t bins = 0;
  std::vector<std::uint32_t> buckets;
  std::vector<DimKey> first_values;
  std::vector<BinIndex> bucket_bins;
};

struct TrackedBinning {
  BinnedColumn column;
  BucketBounds bounds;
};

// bin_approx over dataset rows that also records bucket bounds for later inserts.
TrackedBinning bin_approx_tracked(const Dataset& dataset, DimensionId dim, std::span<const RowId> rows,
                                  std::uint32_t bins);

enum class BinningMode { automatic, exact, approximate };

// automatic: histogram path when the subset is large enough and the dataset is preprocessed, exact otherwise.
BinnedColumn bin_dimension(const Dataset& dataset, DimensionId dim, std::span<const RowId> rows, std::uint32_t bins,
                           BinningMode mode = BinningMode::automatic);

struct BinRange {
  DimKey min;
  DimKey max;
};

struct BinBoundaries {
  DimensionId dim = 0;
  std::vector<std::optional<BinRange>> ranges;  // nullopt marks an empty bin
};

BinBoundaries bin_boundaries(const Dataset& dataset, DimensionId dim, std::span<const RowId> rows,
                             const BinnedColumn& binned);

nlohmann::json boundaries_to_json(const BinBoundaries& boundaries, const Dataset& dataset);

/// Bins for rows that were not part of the last histogram pass: each row takes the bin of the
/// rightmost bucket whose first value is <= the row's key (bucket 0 if it is below all of them).
std::vector<BinIndex> absorb_insert(const Dataset& dataset, DimensionId dim, std::span<const RowId> new_rows,
                                    const BucketBounds& bounds);

}  // namespace divan
