#include "divan/binning.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "divan/error.hpp"

namespace divan {

namespace {

void check_bin_count(std::uint32_t bins, std::size_t num_tuples) {
  if (bins < 2 || bins > kMaxBins) {
    throw Error("bin count must be in [2, " + std::to_string(kMaxBins) + "], got " + std::to_string(bins));
  }
  if (num_tuples == 0) {
    throw Error("cannot bin an empty subset");
  }
  if (bins > num_tuples) {
    throw Error("more bins (" + std::to_string(bins) + ") than tuples (" + std::to_string(num_tuples) + ")");
  }
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// Pass two: replace each bucket population by the bin of its first tuple.
void prefix_to_bins(std::vector<std::uint32_t>& histogram, std::size_t num_tuples, std::uint32_t bins) {
  const auto tuples_per_bin = ceil_div(num_tuples, bins);
  auto seen = std::size_t{0};
  for (auto& bucket : histogram) {
    const auto in_bucket = bucket;
    bucket = static_cast<std::uint32_t>(seen / tuples_per_bin);
    seen += in_bucket;
  }
}

}  // namespace

HistogramGeometry histogram_geometry(std::size_t total_num_tuples) {
  auto geometry = HistogramGeometry{};
  geometry.idx_bits = total_num_tuples <= 1 ? 0 : static_cast<unsigned>(std::bit_width(total_num_tuples - 1));
  geometry.shift = geometry.idx_bits > kHistogramBits ? geometry.idx_bits - kHistogramBits : 0;
  geometry.size = std::size_t{1} << std::min(geometry.idx_bits, kHistogramBits);
  return geometry;
}

std::vector<std::uint32_t> rank_histogram(std::span<const std::uint32_t> ranks, std::size_t total_num_tuples) {
  const auto geometry = histogram_geometry(total_num_tuples);
  auto histogram = std::vector<std::uint32_t>(geometry.size, 0);
  for (const auto rank : ranks) {
    if (rank >= total_num_tuples) {
      throw Error("rank " + std::to_string(rank) + " out of range for " + std::to_string(total_num_tuples) +
                  " tuples");
    }
    ++histogram[rank >> geometry.shift];
  }
  return histogram;
}

bool approx_binning_applicable(std::size_t num_tuples, std::size_t total_num_tuples) {
  return (static_cast<unsigned __int128>(num_tuples) << kApproxThresholdBits) >= total_num_tuples;
}

BinnedColumn bin_exact(const Dataset& dataset, DimensionId dim, std::span<const RowId> rows, std::uint32_t bins) {
  check_bin_count(bins, rows.size());
  auto order = std::vector<RowId>(rows.begin(), rows.end());
  auto slots = std::vector<std::size_t>(rows.size());
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  if (dataset.preprocessed()) {
    // The stable ranks already encode (value, row id) order.
    const auto& ranks = dataset.sorted_index(dim).ranks;
    std::sort(slots.begin(), slots.end(), [&](std::size_t a, std::size_t b) { return ranks[order[a]] < ranks[order[b]]; });
  } else {
    std::sort(slots.begin(), slots.end(), [&](std::size_t a, std::size_t b) {
      const auto cmp = dataset.compare(dim, order[a], order[b]);
      return cmp != 0 ? cmp < 0 : order[a] < order[b];
    });
  }
  const auto tuples_per_bin = ceil_div(rows.size(), bins);
  auto out = BinnedColumn{dim, bins, std::vector<BinIndex>(rows.size())};
  for (auto p = std::size_t{0}; p < slots.size(); ++p) {
    out.values[slots[p]] = static_cast<BinIndex>(p / tuples_per_bin);
  }
  return out;
}

BinnedColumn bin_approx(std::span<const std::uint32_t> ranks, std::size_t total_num_tuples, std::uint32_t bins,
                        DimensionId dim) {
  const auto num_tuples = ranks.size();
  check_bin_count(bins, num_tuples);
  if (num_tuples > total_num_tuples) {
    throw Error("subset is larger than the preprocessed dataset");
  }
  if (!approx_binning_applicable(num_tuples, total_num_tuples)) {
    throw SubsetTooSmall("subset of " + std::to_string(num_tuples) + " tuples is below 1/2^" +
                         std::to_string(kApproxThresholdBits) + " of " + std::to_string(total_num_tuples) +
                         "; bin it exactly");
  }
  const auto shift = histogram_geometry(total_num_tuples).shift;
  auto histogram = rank_histogram(ranks, total_num_tuples);
  prefix_to_bins(histogram, num_tuples, bins);

  auto out = BinnedColumn{dim, bins, std::vector<BinIndex>(num_tuples)};
  for (auto i = std::size_t{0}; i < num_tuples; ++i) {
    out.values[i] = static_cast<BinIndex>(histogram[ranks[i] >> shift]);
  }
  return out;
}

TrackedBinning bin_approx_tracked(const Dataset& dataset, DimensionId dim, std::span<const RowId> rows,
                                  std::uint32_t bins) {
  const auto& index = dataset.sorted_index(dim);
  auto ranks = std::vector<std::uint32_t>{};
  ranks.reserve(rows.size());
  for (const auto row : rows) {
    ranks.push_back(index.ranks[row]);
  }
  const auto total = dataset.row_count();
  auto result = TrackedBinning{bin_approx(ranks, total, bins, dim), BucketBounds{dim, bins, {}, {}, {}}};

  // The first tuple of a bucket in sort order is its minimum rank.
  const auto geometry = histogram_geometry(total);
  constexpr auto kNone = std::numeric_limits<std::uint32_t>::max();
  auto first_rank = std::vector<std::uint32_t>(geometry.size, kNone);
  auto first_slot = std::vector<std::uint32_t>(geometry.size, 0);
  for (auto i = std::size_t{0}; i < rows.size(); ++i) {
    const auto bucket = ranks[i] >> geometry.shift;
    if (ranks[i] < first_rank[bucket]) {
      first_rank[bucket] = ranks[i];
      first_slot[bucket] = static_cast<std::uint32_t>(i);
    }
  }
  auto& bounds = result.bounds;
  for (auto bucket = std::size_t{0}; bucket < geometry.size; ++bucket) {
    if (first_rank[bucket] == kNone) {
      continue;
    }
    const auto slot = first_slot[bucket];
    bounds.buckets.push_back(static_cast<std::uint32_t>(bucket));
    bounds.bucket_bins.push_back(result.column.values[slot]);
    bounds.first_values.push_back(dataset.key(dim, rows[slot]));
  }
  return result;
}

BinnedColumn bin_dimension(const Dataset& dataset, DimensionId dim, std::span<const RowId> rows, std::uint32_t bins,
                           BinningMode mode) {
  const auto use_histogram = [&] {
    switch (mode) {
      case BinningMode::exact:
        return false;
      case BinningMode::approximate:
        return true;
      case BinningMode::automatic:
        return dataset.preprocessed() && approx_binning_applicable(rows.size(), dataset.row_count());
    }
    return false;
  }();
  if (!use_histogram) {
    return bin_exact(dataset, dim, rows, bins);
  }
  const auto& index = dataset.sorted_index(dim);
  auto ranks = std::vector<std::uint32_t>{};
  ranks.reserve(rows.size());
  for (const auto row : rows) {
    ranks.push_back(index.ranks[row]);
  }
  return bin_approx(ranks, dataset.row_count(), bins, dim);
}

BinBoundaries bin_boundaries(const Dataset& dataset, DimensionId dim, std::span<const RowId> rows,
                             const BinnedColumn& binned) {
  if (binned.values.size() != rows.size()) {
    throw Error("binned column and row subset differ in length");
  }
  constexpr auto kUnset = std::numeric_limits<std::size_t>::max();
  auto min_slot = std::vector<std::size_t>(binned.bins, kUnset);
  auto max_slot = std::vector<std::size_t>(binned.bins, kUnset);
  for (auto i = std::size_t{0}; i < rows.size(); ++i) {
    const auto bin = binned.values[i];
    if (bin >= binned.bins) {
      throw Error("bin value " + std::to_string(bin) + " out of range");
    }
    if (min_slot[bin] == kUnset) {
      min_slot[bin] = max_slot[bin] = i;
      continue;
    }
    if (dataset.compare(dim, rows[i], rows[min_slot[bin]]) < 0) {
      min_slot[bin] = i;
    }
    if (dataset.compare(dim, rows[i], rows[max_slot[bin]]) > 0) {
      max_slot[bin] = i;
    }
  }
  auto out = BinBoundaries{dim, std::vector<std::optional<BinRange>>(binned.bins)};
  for (auto bin = std::size_t{0}; bin < binned.bins; ++bin) {
    if (min_slot[bin] != kUnset) {
      out.ranges[bin] = BinRange{dataset.key(dim, rows[min_slot[bin]]), dataset.key(dim, rows[max_slot[bin]])};
    }
  }
  return out;
}

nlohmann::json boundaries_to_json(const BinBoundaries& boundaries, const Dataset& dataset) {
  const auto& spec = dataset.dimension(boundaries.dim);
  auto sources = nlohmann::json::array();
  for (const auto column : spec.sources) {
    sources.push_back(dataset.column(column).schema().name);
  }
  auto ranges = nlohmann::json::array();
  for (auto bin = std::size_t{0}; bin < boundaries.ranges.size(); ++bin) {
    const auto& range = boundaries.ranges[bin];
    if (!range) {
      ranges.push_back({{"bin", bin}, {"empty", true}});
    } else {
      ranges.push_back({{"bin", bin}, {"empty", false}, {"lo", key_to_json(range->min)}, {"hi", key_to_json(range->max)}});
    }
  }
  return {{"dim", boundaries.dim}, {"name", spec.name}, {"sources", sources},
          {"bins", boundaries.ranges.size()}, {"ranges", ranges}};
}

std::vector<BinIndex> absorb_insert(const Dataset& dataset, DimensionId dim, std::span<const RowId> new_rows,
                                    const BucketBounds& bounds) {
  if (bounds.buckets.empty() || bounds.first_values.size() != bounds.buckets.size() ||
      bounds.bucket_bins.size() != bounds.buckets.size()) {
    throw Error("no saved bucket bounds for dimension " + std::to_string(dim));
  }
  if (bounds.dim != dim) {
    throw Error("bucket bounds belong to dimension " + std::to_string(bounds.dim));
  }
  auto out = std::vector<BinIndex>{};
  out.reserve(new_rows.size());
  for (const auto row : new_rows) {
    const auto key = dataset.key(dim, row);
    // Rightmost bucket whose first value is <= key.
    const auto it = std::upper_bound(bounds.first_values.begin(), bounds.first_values.end(), key,
                                     [&](const DimKey& v, const DimKey& first) {
                                       return dataset.compare_keys(dim, v, first) < 0;
                                     });
    const auto slot = it == bounds.first_values.begin()
                          ? std::size_t{0}
                          : static_cast<std::size_t>(it - bounds.first_values.begin()) - 1;
    out.push_back(bounds.bucket_bins[slot]);
  }
  return out;
}

}  // namespace divan
