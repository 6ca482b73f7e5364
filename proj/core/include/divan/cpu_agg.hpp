#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "divan/binning.hpp"
#include "divan/dataset.hpp"
#include "divan/triple.hpp"

namespace divan {

enum class AggFunction { count, sum };

struct AggSpec {
  AggFunction function = AggFunction::count;
  std::optional<ColumnId> value_column;
  ValueType value_type = ValueType::int32;

  static AggSpec count() { return AggSpec{}; }
  static AggSpec sum(ColumnId column, ValueType type) { return AggSpec{AggFunction::sum, column, type}; }

  // Width of one aggregate cell on the wire and in the DPU memory model.
  std::size_t element_bytes() const;
  void validate() const;
};

/// The analyzed tuples after binning: one bin column per selected dimension, all sharing one
/// row order, plus the aggregated values for SUM.
struct BinnedTable {
  std::uint32_t bins = 0;
  std::vector<std::vector<BinIndex>> columns;
  std::vector<double> values;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
  std::uint32_t dims() const { return static_cast<std::uint32_t>(columns.size()); }

  // Throws when columns differ in length, a bin is >= bins, or SUM values are missing.
  void validate(const AggSpec& spec) const;
};

/// Dense B^3 aggregate for one triple. Cell (b0,b1,b2) lives at ((b0*B)+b1)*B+b2 where bK is
/// the bin of triple.dims[K]. COUNT cells are 64-bit; SUM cells accumulate in double.
struct AggregateCube {
  Triple triple;
  std::uint32_t bins = 0;
  AggFunction function = AggFunction::count;
  ValueType value_type = ValueType::int32;
  std::vector<std::int64_t> counts;
  std::vector<double> sums;

  static AggregateCube zeros(const Triple& triple, std::uint32_t bins, const AggSpec& spec);

  bool is_count() const { return function == AggFunction::count; }
  std::size_t size() const { return std::size_t{bins} * bins * bins; }
  std::size_t index(std::uint32_t b0, std::uint32_t b1, std::uint32_t b2) const {
    return (std::size_t{b0} * bins + b1) * bins + b2;
  }
  double value(std::size_t cell) const { return is_count() ? static_cast<double>(counts[cell]) : sums[cell]; }
  double total() const;

  friend bool operator==(const AggregateCube&, const AggregateCube&) = default;
};

// Reference loop order: every record updates every triple's cube.
std::vector<AggregateCube> aggregate_record_major(const BinnedTable& table, const AggSpec& spec,
                                                  std::span<const Triple> triples);

/// Aggregation-major loop order: one task per (triple, slab) where a slab is a contiguous
/// 1/partitions range of the first axis. Each task scans the input once in row order and
/// owns its output range, so results are identical for any partition or thread count.
std::vector<AggregateCube> aggregate_scan_major(const BinnedTable& table, const AggSpec& spec,
                                                std::span<const Triple> triples, std::uint32_t partitions = 1,
                                                std::size_t threads = 0);

// Times one triple with each usable candidate partition count and returns the fastest (1 if none fits).
std::uint32_t autotune_partitions(const BinnedTable& table, const AggSpec& spec, const Triple& probe,
                                  std::span<const std::uint32_t> candidates);

// Collapses a cube over one axis: the (other two axes) 2D table, row-major in remaining axis order.
std::vector<double> marginalize(const AggregateCube& cube, std::size_t axis);

// --- cube files ---------------------------------------------------------------------------

// One file per triple: "DVCB", u32 version, u32 d0, d1, d2, u32 bins, u8 element code, 3 pad bytes,
// then B^3 little-endian cells. Element codes: 1 count int32, 2 count int64, 3 sum float32, 4 sum float64.
// COUNT cubes are written as int32 whenever every cell fits.
void write_cube(const AggregateCube& cube, const std::filesystem::path& path);
AggregateCube read_cube(const std::filesystem::path& path);

struct CubeSetInfo {
  std::uint32_t bins = 0;
  std::vector<DimensionId> dim_ids;  // dataset dimension id of each positional index
  std::vector<std::string> dim_names;
  std::string agg = "count";
  std::string backend = "cpu";
  std::filesystem::path binned_dir;
};

struct CubeSet {
  CubeSetInfo info;
  std::vector<AggregateCube> cubes;
};

void write_cube_dir(const std::filesystem::path& dir, const CubeSetInfo& info, std::span<const AggregateCube> cubes);
CubeSet read_cube_dir(const std::filesystem::path& dir);

}  // namespace divan
