#include "divan/cpu_agg.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <limits>

#include "divan/error.hpp"
#include "divan/thread_pool.hpp"

namespace divan {

std::size_t AggSpec::element_bytes() const {
  return function == AggFunction::count ? std::size_t{4} : value_bytes(value_type);
}

void AggSpec::validate() const {
  if (function == AggFunction::sum && !value_column) {
    throw Error("SUM needs a value column");
  }
}

void BinnedTable::validate(const AggSpec& spec) const {
  spec.validate();
  if (bins == 0) {
    throw Error("binned table has no bin count");
  }
  const auto n = rows();
  for (auto d = std::size_t{0}; d < columns.size(); ++d) {
    const auto& column = columns[d];
    if (column.size() != n) {
      throw Error("binned column " + std::to_string(d) + " has " + std::to_string(column.size()) + " rows, expected " +
                  std::to_string(n));
    }
    const auto max = std::max_element(column.begin(), column.end());
    if (max != column.end() && *max >= bins) {
      throw Error("bin value " + std::to_string(*max) + " in column " + std::to_string(d) + " is >= B=" +
                  std::to_string(bins));
    }
  }
  if (spec.function == AggFunction::sum && values.size() != n) {
    throw Error("SUM needs one value per row");
  }
}

AggregateCube AggregateCube::zeros(const Triple& triple, std::uint32_t bins, const AggSpec& spec) {
  auto cube = AggregateCube{triple, bins, spec.function, spec.value_type, {}, {}};
  if (cube.is_count()) {
    cube.counts.assign(cube.size(), 0);
  } else {
    cube.sums.assign(cube.size(), 0.0);
  }
  return cube;
}

double AggregateCube::total() const {
  if (is_count()) {
    auto sum = std::int64_t{0};
    for (const auto c : counts) {
      sum += c;
    }
    return static_cast<double>(sum);
  }
  auto sum = 0.0;
  for (const auto s : sums) {
    sum += s;
  }
  return sum;
}

namespace {

void check_triples(const BinnedTable& table, std::span<const Triple> triples) {
  for (const auto& t : triples) {
    if (t.dims[2] >= table.dims() || !(t.dims[0] < t.dims[1] && t.dims[1] < t.dims[2])) {
      throw Error("triple " + t.to_string() + " is not a sorted triple over " + std::to_string(table.dims()) +
                  " dimensions");
    }
  }
}

// Scans all rows once, updating the cells whose first-axis bin lies in [lo, hi).
template <bool kCount>
void scan_slab(const BinnedTable& table, AggregateCube& cube, std::uint32_t lo, std::uint32_t hi) {
  const auto& c0 = table.columns[cube.triple.dims[0]];
  const auto& c1 = table.columns[cube.triple.dims[1]];
  const auto& c2 = table.columns[cube.triple.dims[2]];
  const auto bins = std::size_t{cube.bins};
  const auto n = table.rows();
  const auto full = lo == 0 && hi == cube.bins;
  for (auto r = std::size_t{0}; r < n; ++r) {
    const auto b0 = c0[r];
    if (!full && (b0 < lo || b0 >= hi)) {
      continue;
    }
    const auto cell = (b0 * bins + c1[r]) * bins + c2[r];
    if constexpr (kCount) {
      ++cube.counts[cell];
    } else {
      cube.sums[cell] += table.values[r];
    }
  }
}

}  // namespace

std::vector<AggregateCube> aggregate_record_major(const BinnedTable& table, const AggSpec& spec,
                                                  std::span<const Triple> triples) {
  table.validate(spec);
  check_triples(table, triples);
  auto cubes = std::vector<AggregateCube>{};
  cubes.reserve(triples.size());
  for (const auto& t : triples) {
    cubes.push_back(AggregateCube::zeros(t, table.bins, spec));
  }
  const auto bins = std::size_t{table.bins};
  const auto count = spec.function == AggFunction::count;
  for (auto r = std::size_t{0}; r < table.rows(); ++r) {
    for (auto& cube : cubes) {
      const auto& d = cube.triple.dims;
      const auto cell = (table.columns[d[0]][r] * bins + table.columns[d[1]][r]) * bins + table.columns[d[2]][r];
      if (count) {
        ++cube.counts[cell];
      } else {
        cube.sums[cell] += table.values[r];
      }
    }
  }
  return cubes;
}

std::vector<AggregateCube> aggregate_scan_major(const BinnedTable& table, const AggSpec& spec,
                                                std::span<const Triple> triples, std::uint32_t partitions,
                                                std::size_t threads) {
  if (partitions == 0 || (partitions & (partitions - 1)) != 0) {
    throw Error("partition count must be a power of two, got " + std::to_string(partitions));
  }
  if (table.bins % partitions != 0) {
    throw Error("partition count " + std::to_string(partitions) + " does not divide B=" + std::to_string(table.bins));
  }
  table.validate(spec);
  check_triples(table, triples);
  auto cubes = std::vector<AggregateCube>{};
  cubes.reserve(triples.size());
  for (const auto& t : triples) {
    cubes.push_back(AggregateCube::zeros(t, table.bins, spec));
  }
  const auto slab_width = table.bins / partitions;
  const auto count = spec.function == AggFunction::count;
  parallel_for(triples.size() * partitions, threads, [&](std::size_t task) {
    auto& cube = cubes[task / partitions];
    const auto slab = static_cast<std::uint32_t>(task % partitions);
    const auto lo = slab * slab_width;
    if (count) {
      scan_slab<true>(table, cube, lo, lo + slab_width);
    } else {
      scan_slab<false>(table, cube, lo, lo + slab_width);
    }
  });
  return cubes;
}

std::uint32_t autotune_partitions(const BinnedTable& table, const AggSpec& spec, const Triple& probe,
                                  std::span<const std::uint32_t> candidates) {
  auto best = std::uint32_t{1};
  auto best_time = std::chrono::steady_clock::duration::max();
  const auto single = std::array<Triple, 1>{probe};
  for (const auto partitions : candidates) {
    if (!std::has_single_bit(partitions) || table.bins % partitions != 0) {
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    aggregate_scan_major(table, spec, single, partitions, 1);
    const auto elapsed = std::chrono::steady_clock::now() - start;
    if (elapsed < best_time) {
      best_time = elapsed;
      best = partitions;
    }
  }
  return best;
}

std::vector<double> marginalize(const AggregateCube& cube, std::size_t axis) {
  if (axis > 2) {
    throw Error("axis must be 0, 1 or 2");
  }
  const auto bins = std::size_t{cube.bins};
  auto out = std::vector<double>(bins * bins, 0.0);
  for (auto b0 = std::size_t{0}; b0 < bins; ++b0) {
    for (auto b1 = std::size_t{0}; b1 < bins; ++b1) {
      for (auto b2 = std::size_t{0}; b2 < bins; ++b2) {
        const auto v = cube.value((b0 * bins + b1) * bins + b2);
        switch (axis) {
          case 0:
            out[b1 * bins + b2] += v;
            break;
          case 1:
            out[b0 * bins + b2] += v;
            break;
          default:
            out[b0 * bins + b1] += v;
            break;
        }
      }
    }
  }
  return out;
}

}  // namespace divan
