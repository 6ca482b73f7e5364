#include "divan/pim_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <future>
#include <limits>
#include <map>

#include <nlohmann/json.hpp>

#include "divan/error.hpp"
#include "divan/thread_pool.hpp"

namespace divan {

const char* to_string(PimMode mode) { return mode == PimMode::sync ? "sync" : "async"; }

PimMode pim_mode_from_string(const std::string& text) {
  if (text == "sync") {
    return PimMode::sync;
  }
  if (text == "async") {
    return PimMode::async;
  }
  throw Error("unknown PIM mode '" + text + "' (expected sync or async)");
}

void PimConfig::validate() const {
  if (dpu_threads == 0) {
    throw Error("a DPU needs at least one thread");
  }
  if (wram_batch_bytes == 0 || wram_batch_bytes > wram_bytes) {
    throw Error("WRAM batch of " + std::to_string(wram_batch_bytes) + " B does not fit " +
                std::to_string(wram_bytes) + " B of WRAM");
  }
  if (host_buffer_bytes == 0 || host_buffer_bytes > mram_bytes) {
    throw Error("host buffer of " + std::to_string(host_buffer_bytes) + " B does not fit MRAM");
  }
}

TupleFormat TupleFormat::make(std::uint32_t dims, std::uint32_t bins, const AggSpec& spec) {
  auto format = TupleFormat{};
  format.dims = dims;
  format.bin_bytes = bins <= 256 ? 1 : 2;
  format.value_type = spec.function == AggFunction::count ? ValueType::int32 : spec.value_type;
  format.value_bytes = static_cast<std::uint32_t>(divan::value_bytes(format.value_type));
  const auto raw = dims * format.bin_bytes + format.value_bytes;
  format.record_bytes = (raw + 7) / 8 * 8;
  return format;
}

void TupleFormat::encode(const BinnedTable& table, std::size_t row, std::byte* out) const {
  std::memset(out, 0, record_bytes);
  for (auto d = std::uint32_t{0}; d < dims; ++d) {
    const auto bin = table.columns[d][row];
    if (bin_bytes == 1) {
      out[d] = static_cast<std::byte>(bin);
    } else {
      std::memcpy(out + 2 * d, &bin, 2);
    }
  }
  auto* value_at = out + dims * bin_bytes;
  const auto v = table.values.empty() ? 1.0 : table.values[row];
  switch (value_type) {
    case ValueType::int32: {
      const auto x = static_cast<std::int32_t>(std::llround(v));
      std::memcpy(value_at, &x, sizeof(x));
      break;
    }
    case ValueType::float32: {
      const auto x = static_cast<float>(v);
      std::memcpy(value_at, &x, sizeof(x));
      break;
    }
    case ValueType::float64:
      std::memcpy(value_at, &v, sizeof(v));
      break;
  }
}

BinIndex TupleFormat::bin(const std::byte* record, std::uint32_t dim) const {
  if (bin_bytes == 1) {
    return static_cast<BinIndex>(record[dim]);
  }
  auto bin = BinIndex{};
  std::memcpy(&bin, record + 2 * dim, 2);
  return bin;
}

double TupleFormat::value(const std::byte* record) const {
  const auto* value_at = record + dims * bin_bytes;
  switch (value_type) {
    case ValueType::int32: {
      auto x = std::int32_t{};
      std::memcpy(&x, value_at, sizeof(x));
      return x;
    }
    case ValueType::float32: {
      auto x = float{};
      std::memcpy(&x, value_at, sizeof(x));
      return x;
    }
    case ValueType::float64: {
      auto x = double{};
      std::memcpy(&x, value_at, sizeof(x));
      return x;
    }
  }
  return 0.0;
}

void DpuState::allocate() {
  const auto cells = triples.size() * bins * bins;
  if (function == AggFunction::count) {
    counts.assign(cells, 0);
  } else {
    sums.assign(cells, 0.0);
  }
}

double IterationStats::balance_ratio() const {
  if (dpu_tuples.empty()) {
    return 1.0;
  }
  const auto [min, max] = std::minmax_element(dpu_tuples.begin(), dpu_tuples.end());
  if (*min == 0) {
    return *max == 0 ? 1.0 : std::numeric_limits<double>::infinity();
  }
  return static_cast<double>(*max) / static_cast<double>(*min);
}

double RunStats::max_balance_ratio() const {
  auto ratio = 1.0;
  for (const auto& it : iterations) {
    ratio = std::max(ratio, it.balance_ratio());
  }
  return ratio;
}

nlohmann::json stats_to_json(const RunStats& stats) {
  auto iterations = nlohmann::json::array();
  for (const auto& it : stats.iterations) {
    const auto [min, max] = std::minmax_element(it.dpu_tuples.begin(), it.dpu_tuples.end());
    iterations.push_back({{"iteration", it.iteration},
                          {"groups", it.groups},
                          {"replication", it.replication},
                          {"host_batches", it.host_batches},
                          {"deliveries", it.deliveries},
                          {"min_dpu_tuples", it.dpu_tuples.empty() ? 0 : *min},
                          {"max_dpu_tuples", it.dpu_tuples.empty() ? 0 : *max},
                          {"balance_ratio", it.balance_ratio()},
                          {"max_footprint_bytes", it.max_footprint_bytes},
                          {"dpu_tuples", it.dpu_tuples},
                          {"dpu_wram_batches", it.dpu_wram_batches}});
  }
  return {{"tuple_format_version", TupleFormat::kVersion},
          {"dpu_count", stats.dpu_count},
          {"mode", to_string(stats.mode)},
          {"record_bytes", stats.record_bytes},
          {"rows", stats.rows},
          {"bytes_host_to_dpu", stats.bytes_host_to_dpu},
          {"bytes_dpu_to_host", stats.bytes_dpu_to_host},
          {"cells_merged", stats.cells_merged},
          {"max_balance_ratio", stats.max_balance_ratio()},
          {"iterations", iterations}};
}

std::size_t host_route(const BinnedTable& table, std::size_t cursor, std::uint32_t group, DimIndex common_dim,
                       const DpuAssignment& assignment, std::size_t buffer_tuples,
                       std::span<std::vector<std::uint32_t>> buffers, std::span<std::uint64_t> stripe) {
  const auto& column = table.columns.at(common_dim);
  const auto rows = table.rows();
  while (cursor < rows) {
    const auto bin = column[cursor];
    if (bin >= assignment.bins) {
      throw Error("row " + std::to_string(cursor) + " has bin " + std::to_string(bin) + " >= B=" +
                  std::to_string(assignment.bins));
    }
    const auto replica = static_cast<std::uint32_t>(stripe[bin]++ % assignment.replication);
    auto& buffer = buffers[assignment.dpu_id(group, bin, replica)];
    buffer.push_back(static_cast<std::uint32_t>(cursor));
    ++cursor;
    if (buffer.size() >= buffer_tuples) {
      break;
    }
  }
  return cursor;
}

namespace {

// The two non-common dims of a triple, in ascending order.
std::array<DimIndex, 2> other_dims(const Triple& t, DimIndex common) {
  auto out = std::array<DimIndex, 2>{};
  auto k = 0;
  for (const auto d : t.dims) {
    if (d != common) {
      out[k++] = d;
    }
  }
  return out;
}

std::size_t tuples_per_wram_batch(const TupleFormat& format, const PimConfig& config) {
  return std::max<std::size_t>(1, config.wram_batch_bytes / format.record_bytes);
}

}  // namespace

void dpu_execute(DpuState& state, const BinnedTable& table, const TupleFormat& format, const PimConfig& config) {
  const auto per_batch = tuples_per_wram_batch(format, config);
  const auto bins = std::size_t{state.bins};
  const auto slice = bins * bins;
  const auto triple_count = state.triples.size();
  auto axes = std::vector<std::array<DimIndex, 2>>{};
  axes.reserve(triple_count);
  for (const auto& t : state.triples) {
    axes.push_back(other_dims(t, state.common_dim));
  }
  auto staging = std::vector<std::byte>(per_batch * format.record_bytes);
  const auto workers = std::size_t{config.dpu_threads};
  const auto count = state.function == AggFunction::count;

  for (auto start = std::size_t{0}; start < state.inbox.size(); start += per_batch) {
    const auto batch = std::min(per_batch, state.inbox.size() - start);
    // Phase 1: one block copy MRAM -> WRAM.
    for (auto i = std::size_t{0}; i < batch; ++i) {
      format.encode(table, state.inbox[start + i], staging.data() + i * format.record_bytes);
    }
    ++state.wram_batches;
    // Phase 2: worker w owns triples [w*T/W, (w+1)*T/W).
    for (auto w = std::size_t{0}; w < workers; ++w) {
      const auto lo = w * triple_count / workers;
      const auto hi = (w + 1) * triple_count / workers;
      for (auto i = std::size_t{0}; i < batch; ++i) {
        const auto* record = staging.data() + i * format.record_bytes;
        if (format.bin(record, state.common_dim) != state.slot.bin) {
          throw Error("simulator invariant violated: DPU " + std::to_string(state.id) + " (bin " +
                      std::to_string(state.slot.bin) + ") received a tuple with bin " +
                      std::to_string(format.bin(record, state.common_dim)));
        }
        const auto value = count ? 0.0 : format.value(record);
        for (auto t = lo; t < hi; ++t) {
          const auto cell = t * slice + format.bin(record, axes[t][0]) * bins + format.bin(record, axes[t][1]);
          if (count) {
            ++state.counts[cell];
          } else {
            state.sums[cell] += value;
          }
        }
      }
    }
  }
  state.inbox.clear();
}

DpuState merge_replicas(std::span<const DpuState* const> replicas) {
  if (replicas.empty()) {
    throw Error("no replicas to merge");
  }
  auto merged = *replicas.front();
  merged.slot.replica = 0;
  for (const auto* other : replicas.subspan(1)) {
    if (other->triples != merged.triples || other->bins != merged.bins || other->function != merged.function ||
        other->counts.size() != merged.counts.size() || other->sums.size() != merged.sums.size()) {
      throw Error("replica shape mismatch for DPU " + std::to_string(other->id));
    }
    for (auto i = std::size_t{0}; i < merged.counts.size(); ++i) {
      merged.counts[i] += other->counts[i];
    }
    for (auto i = std::size_t{0}; i < merged.sums.size(); ++i) {
      merged.sums[i] += other->sums[i];
    }
    merged.tuples_received += other->tuples_received;
  }
  return merged;
}

namespace {

class IterationRunner {
 public:
  IterationRunner(const BinnedTable& table, const AggSpec& spec, const GroupPlan& plan, const PimConfig& config,
                  const TupleFormat& format, RunStats& stats)
      : table_(table),
        spec_(spec),
        plan_(plan),
        config_(config),
        format_(format),
        stats_(stats),
        assignment_(assign_dpus(plan, table.bins, config.dpu_count, spec.element_bytes(), config.memory())) {}

  // Runs the iteration and returns the DPU states with their local slices.
  std::vector<DpuState> run() {
    init_dpus();
    const auto groups = assignment_.groups;
    buffers_.assign(dpus_.size(), {});
    cursors_.assign(groups, 0);
    stripes_.assign(groups, std::vector<std::uint64_t>(table_.bins, 0));
    auto iteration = IterationStats{};
    iteration.iteration = plan_.iteration;
    iteration.groups = groups;
    iteration.replication = assignment_.replication;
    iteration.max_footprint_bytes = assignment_.max_footprint();

    if (config_.mode == PimMode::sync) {
      while (route_batch()) {
        ++iteration.host_batches;
        transfer();
        execute_all();
      }
    } else {
      // Host fills batch k+1 while the DPUs work on batch k.
      auto in_flight = std::future<void>{};
      auto have_batch = route_batch();
      while (have_batch) {
        ++iteration.host_batches;
        if (in_flight.valid()) {
          in_flight.get();
        }
        transfer();
        in_flight = std::async(std::launch::async, [this] { execute_all(); });
        have_batch = route_batch();
      }
      if (in_flight.valid()) {
        in_flight.get();
      }
    }

    for (const auto& dpu : dpus_) {
      iteration.dpu_tuples.push_back(dpu.tuples_received);
      iteration.dpu_wram_batches.push_back(dpu.wram_batches);
      iteration.deliveries += dpu.tuples_received;
    }
    for (auto& dpu : dpus_) {
      dpu.bytes_out = dpu.triples.size() * table_.bins * table_.bins * spec_.element_bytes();
      stats_.bytes_dpu_to_host += dpu.bytes_out;
    }
    stats_.iterations.push_back(std::move(iteration));
    return std::move(dpus_);
  }

  const DpuAssignment& assignment() const { return assignment_; }

 private:
  void init_dpus() {
    dpus_.resize(assignment_.slots.size());
    for (auto id = std::uint32_t{0}; id < dpus_.size(); ++id) {
      auto& dpu = dpus_[id];
      dpu.id = id;
      dpu.slot = assignment_.slots[id];
      dpu.common_dim = plan_.common_dims[dpu.slot.group];
      dpu.bins = table_.bins;
      dpu.function = spec_.function;
      dpu.triples = plan_.groups[dpu.slot.group];
      if (!config_.route_only) {
        dpu.allocate();
      }
      // Triple list upload: three u32 dims per triple.
      stats_.bytes_host_to_dpu += dpu.triples.size() * 3 * sizeof(std::uint32_t);
    }
  }

  // One host batch: every unfinished group routes until one of its buffers fills.
  bool route_batch() {
    const auto rows = table_.rows();
    const auto pending = std::any_of(cursors_.begin(), cursors_.end(), [&](std::size_t c) { return c < rows; });
    if (!pending) {
      return false;
    }
    const auto buffer_tuples = std::max<std::size_t>(1, config_.host_buffer_bytes / format_.record_bytes);
    parallel_for(assignment_.groups, config_.host_threads, [&](std::size_t g) {
      cursors_[g] = host_route(table_, cursors_[g], static_cast<std::uint32_t>(g), plan_.common_dims[g], assignment_,
                               buffer_tuples, buffers_, stripes_[g]);
    });
    return true;
  }

  void transfer() {
    for (auto id = std::size_t{0}; id < dpus_.size(); ++id) {
      auto& dpu = dpus_[id];
      const auto tuples = buffers_[id].size();
      dpu.tuples_received += tuples;
      dpu.bytes_in += tuples * format_.record_bytes;
      stats_.bytes_host_to_dpu += tuples * format_.record_bytes;
      dpu.inbox.swap(buffers_[id]);
      buffers_[id].clear();
    }
  }

  void execute_all() {
    const auto per_batch = tuples_per_wram_batch(format_, config_);
    parallel_for(dpus_.size(), config_.host_threads, [&](std::size_t id) {
      auto& dpu = dpus_[id];
      if (config_.route_only) {
        dpu.wram_batches += (dpu.inbox.size() + per_batch - 1) / per_batch;
        dpu.inbox.clear();
      } else {
        dpu_execute(dpu, table_, format_, config_);
      }
    });
  }

  const BinnedTable& table_;
  const AggSpec& spec_;
  const GroupPlan& plan_;
  const PimConfig& config_;
  const TupleFormat& format_;
  RunStats& stats_;
  DpuAssignment assignment_;
  std::vector<DpuState> dpus_;
  std::vector<std::vector<std::uint32_t>> buffers_;
  std::vector<std::size_t> cursors_;
  std::vector<std::vector<std::uint64_t>> stripes_;
};

// Writes one (group, bin) slice set into the full cubes.
void scatter(const DpuState& dpu, std::vector<AggregateCube>& cubes, const std::map<Triple, std::size_t>& index) {
  const auto bins = std::size_t{dpu.bins};
  const auto slice = bins * bins;
  for (auto t = std::size_t{0}; t < dpu.triples.size(); ++t) {
    auto& cube = cubes[index.at(dpu.triples[t])];
    const auto common_axis = cube.triple.axis_of(dpu.common_dim);
    for (auto u = std::uint32_t{0}; u < bins; ++u) {
      for (auto v = std::uint32_t{0}; v < bins; ++v) {
        auto b = std::array<std::uint32_t, 3>{};
        b[common_axis] = dpu.slot.bin;
        b[common_axis == 0 ? 1 : 0] = u;
        b[common_axis == 2 ? 1 : 2] = v;
        const auto cell = cube.index(b[0], b[1], b[2]);
        const auto local = t * slice + u * bins + v;
        if (cube.is_count()) {
          cube.counts[cell] += dpu.counts[local];
        } else {
          cube.sums[cell] += dpu.sums[local];
        }
      }
    }
  }
}

}  // namespace

PimResult run_pim(const BinnedTable& table, const AggSpec& spec, const std::vector<GroupPlan>& plan,
                  const PimConfig& config) {
  config.validate();
  table.validate(spec);
  const auto format = TupleFormat::make(table.dims(), table.bins, spec);
  if (format.record_bytes > config.host_buffer_bytes) {
    throw Error("a " + std::to_string(format.record_bytes) + " B tuple does not fit the host buffer");
  }

  auto result = PimResult{};
  result.stats.dpu_count = config.dpu_count;
  result.stats.mode = config.mode;
  result.stats.record_bytes = format.record_bytes;
  result.stats.rows = table.rows();

  // Reject bad plans before allocating any cube.
  for (const auto& iteration : plan) {
    for (const auto& group : iteration.groups) {
      for (const auto& t : group) {
        if (t.dims[2] >= table.dims()) {
          throw Error("plan triple " + t.to_string() + " exceeds the table's " + std::to_string(table.dims()) +
                      " dims");
        }
      }
    }
    assign_dpus(iteration, table.bins, config.dpu_count, spec.element_bytes(), config.memory());
  }

  const auto triples = enumerate_triples(table.dims());
  auto index = std::map<Triple, std::size_t>{};
  if (!config.route_only) {
    for (auto i = std::size_t{0}; i < triples.size(); ++i) {
      index.emplace(triples[i], i);
      result.cubes.push_back(AggregateCube::zeros(triples[i], table.bins, spec));
    }
  }

  for (const auto& iteration : plan) {
    auto runner = IterationRunner{table, spec, iteration, config, format, result.stats};
    auto dpus = runner.run();
    if (config.route_only) {
      continue;
    }
    const auto& assignment = runner.assignment();
    const auto base = assignment.groups * assignment.bins;
    for (auto id = std::uint32_t{0}; id < base; ++id) {
      if (assignment.replication == 1) {
        scatter(dpus[id], result.cubes, index);
        continue;
      }
      auto replicas = std::vector<const DpuState*>{};
      for (auto r = std::uint32_t{0}; r < assignment.replication; ++r) {
        replicas.push_back(&dpus[r * base + id]);
      }
      const auto merged = merge_replicas(replicas);
      result.stats.cells_merged += (assignment.replication - 1) * (merged.counts.size() + merged.sums.size());
      scatter(merged, result.cubes, index);
    }
  }
  return result;
}

PimResult run_pim(const BinnedTable& table, const AggSpec& spec, const PimConfig& config) {
  return run_pim(table, spec, dpu_dist(table.dims(), table.bins, config.dpu_count), config);
}

}  // namespace divan
