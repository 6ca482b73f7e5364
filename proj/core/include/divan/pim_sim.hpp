#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "divan/cpu_agg.hpp"
#include "divan/pim_plan.hpp"

namespace divan {

enum class PimMode { sync, async };

const char* to_string(PimMode mode);
PimMode pim_mode_from_string(const std::string& text);

struct PimConfig {
  std::uint32_t dpu_count = 2048;
  std::size_t mram_bytes = std::size_t{64} << 20;
  std::size_t wram_bytes = std::size_t{64} << 10;
  std::uint32_t dpu_threads = 24;
  std::size_t host_buffer_bytes = std::size_t{320} << 10;
  std::size_t wram_batch_bytes = std::size_t{32} << 10;
  PimMode mode = PimMode::sync;
  // Route and account for tuples without running DPU programs or keeping cubes.
  bool route_only = false;
  std::size_t host_threads = 0;  // 0 = hardware concurrency

  MemoryModel memory() const { return MemoryModel{mram_bytes, host_buffer_bytes}; }
  void validate() const;
};

/// Host-to-DPU tuple record, version 1: N bin values (1 byte each when B <= 256, else 2 bytes
/// little-endian), then the value (int32, float32 or float64 at the AggSpec width; COUNT sends a
/// 4-byte 1), zero padding up to a multiple of 8 bytes.
struct TupleFormat {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t dims = 0;
  std::uint32_t bin_bytes = 1;
  std::uint32_t value_bytes = 4;
  ValueType value_type = ValueType::int32;
  std::uint32_t record_bytes = 8;

  static TupleFormat make(std::uint32_t dims, std::uint32_t bins, const AggSpec& spec);

  void encode(const BinnedTable& table, std::size_t row, std::byte* out) const;
  BinIndex bin(const std::byte* record, std::uint32_t dim) const;
  double value(const std::byte* record) const;
};

/// One simulated DPU. Local cubes hold, per assigned triple, the B x B slice at the DPU's bin of the
/// common dim, indexed (u * B) + v over the triple's two other dims in ascending order.
struct DpuState {
  std::uint32_t id = 0;
  DpuSlot slot;
  DimIndex common_dim = 0;
  std::uint32_t bins = 0;
  AggFunction function = AggFunction::count;
  std::vector<Triple> triples;
  std::vector<std::int64_t> counts;  // |triples| * B^2 when COUNT
  std::vector<double> sums;          // |triples| * B^2 when SUM
  std::vector<std::uint32_t> inbox;  // row ids of the tuples in the current host buffer

  std::uint64_t tuples_received = 0;
  std::uint64_t bytes_in = 0;
  std::uint64_t bytes_out = 0;
  std::uint64_t wram_batches = 0;

  void allocate();
};

struct IterationStats {
  std::uint32_t iteration = 0;
  std::uint32_t groups = 0;
  std::uint32_t replication = 1;
  std::uint64_t host_batches = 0;
  std::uint64_t deliveries = 0;  // sum of per-DPU tuple counts; equals groups * rows
  std::vector<std::uint64_t> dpu_tuples;  // per DPU id
  std::vector<std::uint64_t> dpu_wram_batches;
  std::size_t max_footprint_bytes = 0;

  // max / min tuple count over the DPUs in use; infinity if one of them got nothing.
  double balance_ratio() const;
  friend bool operator==(const IterationStats&, const IterationStats&) = default;
};

struct RunStats {
  std::uint32_t dpu_count = 0;
  PimMode mode = PimMode::sync;
  std::uint32_t record_bytes = 0;
  std::uint64_t rows = 0;
  std::vector<IterationStats> iterations;
  std::uint64_t bytes_host_to_dpu = 0;  // tuple records plus triple lists
  std::uint64_t bytes_dpu_to_host = 0;  // aggregate readback at the declared element width
  std::uint64_t cells_merged = 0;       // cells added while folding replicas

  double max_balance_ratio() const;
  friend bool operator==(const RunStats&, const RunStats&) = default;
};

nlohmann::json stats_to_json(const RunStats& stats);

/// Fills one group's host buffers (indexed by DPU id) from rows [cursor, end) of the table: a row
/// goes to slot (group, its common-dim bin), replicas round-robin by arrival. Stops after the row
/// that fills a buffer. Returns the new cursor. `stripe` holds one arrival counter per bin.
std::size_t host_route(const BinnedTable& table, std::size_t cursor, std::uint32_t group, DimIndex common_dim,
                       const DpuAssignment& assignment, std::size_t buffer_tuples,
                       std::span<std::vector<std::uint32_t>> buffers, std::span<std::uint64_t> stripe);

/// Processes the inbox in WRAM-sized batches: each batch is copied (encoded) into a staging area, then
/// each logical worker applies the batch to its contiguous share of the triple list.
void dpu_execute(DpuState& state, const BinnedTable& table, const TupleFormat& format, const PimConfig& config);

/// Cellwise sum of replica slices; all replicas must have the same shape.
DpuState merge_replicas(std::span<const DpuState* const> replicas);

struct PimResult {
  std::vector<AggregateCube> cubes;  // lexicographic triple order; empty when route_only
  RunStats stats;
};

PimResult run_pim(const BinnedTable& table, const AggSpec& spec, const std::vector<GroupPlan>& plan,
                  const PimConfig& config);

// Plans with dpu_dist over the table's dims and runs.
PimResult run_pim(const BinnedTable& table, const AggSpec& spec, const PimConfig& config);

}  // namespace divan
