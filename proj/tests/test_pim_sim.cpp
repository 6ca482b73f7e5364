#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "divan/error.hpp"
#include "divan/pim_sim.hpp"
#include "support.hpp"

namespace divan {
namespace {

using testing::oracle_cube;
using testing::random_table;

PimConfig small_config(std::uint32_t dpus, PimMode mode = PimMode::sync) {
  auto config = PimConfig{};
  config.dpu_count = dpus;
  config.mode = mode;
  config.host_buffer_bytes = 4096;
  config.wram_batch_bytes = 256;
  config.dpu_threads = 3;
  config.host_threads = 2;
  return config;
}

void expect_matches_oracle(const PimResult& result, const BinnedTable& table, bool count, double rel = 0.0) {
  const auto triples = enumerate_triples(table.dims());
  ASSERT_EQ(result.cubes.size(), triples.size());
  for (auto i = std::size_t{0}; i < triples.size(); ++i) {
    ASSERT_EQ(result.cubes[i].triple, triples[i]);
    const auto expected = oracle_cube(table, triples[i], count);
    for (auto cell = std::size_t{0}; cell < expected.size(); ++cell) {
      const auto got = result.cubes[i].value(cell);
      if (rel == 0.0) {
        ASSERT_EQ(got, expected[cell]) << triples[i].to_string() << " cell " << cell;
      } else {
        ASSERT_NEAR(got, expected[cell], rel * std::max(1.0, std::abs(expected[cell])))
            << triples[i].to_string() << " cell " << cell;
      }
    }
  }
}

TEST(TupleFormat, Layout) {
  const auto count = TupleFormat::make(5, 32, AggSpec::count());
  EXPECT_EQ(count.bin_bytes, 1u);
  EXPECT_EQ(count.value_bytes, 4u);
  EXPECT_EQ(count.record_bytes, 16u);  // 5 + 4 -> 16
  const auto wide = TupleFormat::make(3, 300, AggSpec::sum(0, ValueType::float64));
  EXPECT_EQ(wide.bin_bytes, 2u);
  EXPECT_EQ(wide.record_bytes, 16u);  // 6 + 8 -> 16
  EXPECT_EQ(TupleFormat::make(4, 256, AggSpec::count()).record_bytes, 8u);
}

TEST(TupleFormat, RoundTrip) {
  for (const auto bins : {16u, 1024u}) {
    for (const auto type : {ValueType::int32, ValueType::float32, ValueType::float64}) {
      auto table = random_table(50, 4, bins, bins + static_cast<int>(type));
      const auto spec = AggSpec::sum(0, type);
      const auto format = TupleFormat::make(4, bins, spec);
      auto record = std::vector<std::byte>(format.record_bytes, std::byte{0xff});
      for (auto r = std::size_t{0}; r < table.rows(); ++r) {
        format.encode(table, r, record.data());
        for (auto d = std::uint32_t{0}; d < 4; ++d) {
          ASSERT_EQ(format.bin(record.data(), d), table.columns[d][r]);
        }
        const auto v = table.values[r];
        const auto expected = type == ValueType::int32     ? std::round(v)
                              : type == ValueType::float32 ? static_cast<double>(static_cast<float>(v))
                                                           : v;
        ASSERT_EQ(format.value(record.data()), expected);
        for (auto b = 4 * format.bin_bytes + format.value_bytes; b < format.record_bytes; ++b) {
          ASSERT_EQ(record[b], std::byte{0}) << "padding byte " << b;
        }
      }
    }
  }
}

TEST(HostRoute, DeliversToCommonDimBin) {
  const auto table = random_table(3000, 5, 8, 11);
  const auto plan = dpu_dist(5, 8, 80);
  ASSERT_EQ(plan.size(), 1u);
  const auto assignment = assign_dpus(plan[0], 8, 80, 4);
  ASSERT_EQ(assignment.replication, 2u);
  auto buffers = std::vector<std::vector<std::uint32_t>>(assignment.dpus_used());
  for (auto g = std::uint32_t{0}; g < assignment.groups; ++g) {
    auto stripe = std::vector<std::uint64_t>(8, 0);
    auto cursor = std::size_t{0};
    while (cursor < table.rows()) {
      cursor = host_route(table, cursor, g, plan[0].common_dims[g], assignment, 1000000, buffers, stripe);
    }
  }
  auto total = std::size_t{0};
  for (auto id = std::uint32_t{0}; id < buffers.size(); ++id) {
    const auto slot = assignment.slots[id];
    const auto common = plan[0].common_dims[slot.group];
    for (const auto row : buffers[id]) {
      ASSERT_EQ(table.columns[common][row], slot.bin);
    }
    total += buffers[id].size();
  }
  // Every row reaches exactly one DPU per group.
  EXPECT_EQ(total, assignment.groups * table.rows());
}

TEST(HostRoute, StopsWhenABufferFills) {
  const auto table = random_table(1000, 3, 4, 12);
  const auto plan = dpu_dist(3, 4, 4);
  const auto assignment = assign_dpus(plan[0], 4, 4, 4);
  auto buffers = std::vector<std::vector<std::uint32_t>>(assignment.dpus_used());
  auto stripe = std::vector<std::uint64_t>(4, 0);
  const auto cursor = host_route(table, 0, 0, plan[0].common_dims[0], assignment, 5, buffers, stripe);
  EXPECT_LT(cursor, table.rows());
  auto fullest = std::size_t{0};
  for (const auto& b : buffers) {
    fullest = std::max(fullest, b.size());
  }
  EXPECT_EQ(fullest, 5u);
}

TEST(HostRoute, ReplicasShareRoundRobin) {
  auto table = BinnedTable{};
  table.bins = 2;
  table.columns = {std::vector<BinIndex>(9, 1), std::vector<BinIndex>(9, 0), std::vector<BinIndex>(9, 0)};
  const auto plan = dpu_dist(3, 2, 6);
  const auto assignment = assign_dpus(plan[0], 2, 6, 4);
  ASSERT_EQ(assignment.replication, 3u);
  auto buffers = std::vector<std::vector<std::uint32_t>>(assignment.dpus_used());
  auto stripe = std::vector<std::uint64_t>(2, 0);
  host_route(table, 0, 0, 0, assignment, 100, buffers, stripe);
  for (auto r = std::uint32_t{0}; r < 3; ++r) {
    EXPECT_EQ(buffers[assignment.dpu_id(0, 1, r)].size(), 3u);
    EXPECT_EQ(buffers[assignment.dpu_id(0, 0, r)].size(), 0u);
  }
}

TEST(HostRoute, RejectsOutOfRangeBin) {
  auto table = random_table(10, 3, 4, 13);
  table.columns[0][4] = 7;
  const auto plan = dpu_dist(3, 4, 4);
  const auto assignment = assign_dpus(plan[0], 4, 4, 4);
  auto buffers = std::vector<std::vector<std::uint32_t>>(assignment.dpus_used());
  auto stripe = std::vector<std::uint64_t>(4, 0);
  EXPECT_THROW(host_route(table, 0, 0, 0, assignment, 100, buffers, stripe), Error);
}

DpuState make_dpu(const BinnedTable& table, DimIndex common, BinIndex bin, std::vector<Triple> triples,
                  AggFunction function = AggFunction::count) {
  auto dpu = DpuState{};
  dpu.slot = DpuSlot{0, bin, 0};
  dpu.common_dim = common;
  dpu.bins = table.bins;
  dpu.function = function;
  dpu.triples = std::move(triples);
  dpu.allocate();
  for (auto r = std::size_t{0}; r < table.rows(); ++r) {
    if (table.columns[common][r] == bin) {
      dpu.inbox.push_back(static_cast<std::uint32_t>(r));
    }
  }
  return dpu;
}

TEST(DpuExecute, MatchesOracleSlice) {
  const auto table = random_table(4000, 5, 8, 14);
  const auto triples = std::vector<Triple>{Triple::of(0, 2, 4), Triple::of(1, 2, 3), Triple::of(2, 3, 4)};
  const auto format = TupleFormat::make(5, 8, AggSpec::count());
  auto dpu = make_dpu(table, 2, 5, triples);
  const auto received = dpu.inbox.size();
  dpu_execute(dpu, table, format, small_config(8));
  EXPECT_TRUE(dpu.inbox.empty());
  const auto per_batch = 256 / format.record_bytes;
  EXPECT_EQ(dpu.wram_batches, (received + per_batch - 1) / per_batch);
  for (auto t = std::size_t{0}; t < triples.size(); ++t) {
    const auto oracle = oracle_cube(table, triples[t], true);
    const auto axis = triples[t].axis_of(2);
    for (auto u = std::uint32_t{0}; u < 8; ++u) {
      for (auto v = std::uint32_t{0}; v < 8; ++v) {
        auto b = std::array<std::uint32_t, 3>{};
        b[axis] = 5;
        b[axis == 0 ? 1 : 0] = u;
        b[axis == 2 ? 1 : 2] = v;
        ASSERT_EQ(dpu.counts[t * 64 + u * 8 + v], oracle[(b[0] * 8 + b[1]) * 8 + b[2]]);
      }
    }
  }
}

TEST(DpuExecute, SmallInputIsOneBatch) {
  const auto table = random_table(40, 3, 4, 15);
  auto dpu = make_dpu(table, 0, 1, {Triple::of(0, 1, 2)});
  ASSERT_FALSE(dpu.inbox.empty());
  auto config = small_config(4);
  config.wram_batch_bytes = 64 << 10;
  dpu_execute(dpu, table, TupleFormat::make(3, 4, AggSpec::count()), config);
  EXPECT_EQ(dpu.wram_batches, 1u);
}

TEST(DpuExecute, RejectsForeignBin) {
  const auto table = random_table(200, 3, 4, 16);
  auto dpu = make_dpu(table, 0, 1, {Triple::of(0, 1, 2)});
  dpu.slot.bin = 2;
  EXPECT_THROW(dpu_execute(dpu, table, TupleFormat::make(3, 4, AggSpec::count()), small_config(4)), Error);
}

TEST(MergeReplicas, Identity) {
  const auto table = random_table(500, 3, 4, 17);
  auto dpu = make_dpu(table, 0, 1, {Triple::of(0, 1, 2)});
  dpu_execute(dpu, table, TupleFormat::make(3, 4, AggSpec::count()), small_config(4));
  const auto* one = &dpu;
  const auto merged = merge_replicas(std::span<const DpuState* const>{&one, 1});
  EXPECT_EQ(merged.counts, dpu.counts);
  EXPECT_THROW(merge_replicas({}), Error);
}

TEST(MergeReplicas, SumsCellwise) {
  const auto table = random_table(500, 3, 4, 18);
  auto a = make_dpu(table, 0, 1, {Triple::of(0, 1, 2)});
  auto b = a;
  b.slot.replica = 1;
  const auto half = a.inbox.size() / 2;
  a.inbox.resize(half);
  b.inbox.erase(b.inbox.begin(), b.inbox.begin() + static_cast<std::ptrdiff_t>(half));
  auto whole = make_dpu(table, 0, 1, {Triple::of(0, 1, 2)});
  const auto format = TupleFormat::make(3, 4, AggSpec::count());
  for (auto* d : {&a, &b, &whole}) {
    dpu_execute(*d, table, format, small_config(4));
  }
  const auto replicas = std::vector<const DpuState*>{&a, &b};
  const auto merged = merge_replicas(replicas);
  EXPECT_EQ(merged.counts, whole.counts);
  EXPECT_EQ(merged.slot.replica, 0u);
}

TEST(MergeReplicas, RejectsShapeMismatch) {
  const auto table = random_table(50, 4, 4, 19);
  const auto a = make_dpu(table, 0, 1, {Triple::of(0, 1, 2)});
  const auto b = make_dpu(table, 0, 1, {Triple::of(0, 1, 3)});
  const auto replicas = std::vector<const DpuState*>{&a, &b};
  EXPECT_THROW(merge_replicas(replicas), Error);
}

struct RunCase {
  std::uint32_t dims;
  std::uint32_t bins;
  std::uint32_t dpus;
  std::uint32_t replication;
};

class RunPim : public ::testing::TestWithParam<RunCase> {};

TEST_P(RunPim, MatchesOracle) {
  const auto c = GetParam();
  const auto table = random_table(6000, c.dims, c.bins, c.dims * 100 + c.dpus, true);
  const auto plan = dpu_dist(c.dims, c.bins, c.dpus);
  EXPECT_EQ(assign_dpus(plan.front(), c.bins, c.dpus, 4).replication, c.replication);
  for (const auto mode : {PimMode::sync, PimMode::async}) {
    SCOPED_TRACE(to_string(mode));
    const auto config = small_config(c.dpus, mode);
    const auto counts = run_pim(table, AggSpec::count(), config);
    expect_matches_oracle(counts, table, true);
    for (const auto& it : counts.stats.iterations) {
      EXPECT_EQ(it.deliveries, std::uint64_t{it.groups} * table.rows());
    }
    expect_matches_oracle(run_pim(table, AggSpec::sum(0, ValueType::float64), config), table, false, 1e-9);
    expect_matches_oracle(run_pim(table, AggSpec::sum(0, ValueType::float32), config), table, false, 1e-6);
  }
}

INSTANTIATE_TEST_SUITE_P(Configs, RunPim,
                         ::testing::Values(RunCase{5, 4, 20, 1}, RunCase{5, 4, 40, 2}, RunCase{5, 4, 80, 4},
                                           RunCase{6, 8, 48, 1}, RunCase{7, 4, 16, 1}, RunCase{9, 2, 8, 1}));

TEST(RunPim, SumsEqualCpu) {
  const auto table = random_table(5000, 6, 8, 20);
  const auto spec = AggSpec::sum(0, ValueType::float64);
  const auto cpu = aggregate_record_major(table, spec, enumerate_triples(6));
  const auto pim = run_pim(table, spec, small_config(96));
  ASSERT_EQ(pim.cubes.size(), cpu.size());
  for (auto i = std::size_t{0}; i < cpu.size(); ++i) {
    for (auto cell = std::size_t{0}; cell < cpu[i].size(); ++cell) {
      ASSERT_NEAR(pim.cubes[i].sums[cell], cpu[i].sums[cell], 1e-6 * std::max(1.0, std::abs(cpu[i].sums[cell])));
    }
  }
}

TEST(RunPim, StatsAreDeterministic) {
  const auto table = random_table(8000, 6, 8, 21);
  const auto a = run_pim(table, AggSpec::count(), small_config(96));
  const auto b = run_pim(table, AggSpec::count(), small_config(96));
  const auto async = run_pim(table, AggSpec::count(), small_config(96, PimMode::async));
  EXPECT_EQ(a.stats, b.stats);
  auto async_stats = async.stats;
  async_stats.mode = PimMode::sync;
  EXPECT_EQ(async_stats, a.stats);
  EXPECT_EQ(a.cubes, async.cubes);
  const auto json = stats_to_json(a.stats);
  EXPECT_EQ(json["tuple_format_version"], 1);
  EXPECT_EQ(json["rows"], 8000);
  EXPECT_EQ(json["iterations"].size(), a.stats.iterations.size());
}

TEST(RunPim, RouteOnlyKeepsAccounting) {
  const auto table = random_table(8000, 6, 8, 22);
  auto config = small_config(96);
  const auto full = run_pim(table, AggSpec::count(), config);
  config.route_only = true;
  const auto routed = run_pim(table, AggSpec::count(), config);
  EXPECT_TRUE(routed.cubes.empty());
  EXPECT_EQ(routed.stats.bytes_host_to_dpu, full.stats.bytes_host_to_dpu);
  EXPECT_EQ(routed.stats.bytes_dpu_to_host, full.stats.bytes_dpu_to_host);
  ASSERT_EQ(routed.stats.iterations.size(), full.stats.iterations.size());
  for (auto i = std::size_t{0}; i < full.stats.iterations.size(); ++i) {
    EXPECT_EQ(routed.stats.iterations[i].dpu_tuples, full.stats.iterations[i].dpu_tuples);
    EXPECT_EQ(routed.stats.iterations[i].dpu_wram_batches, full.stats.iterations[i].dpu_wram_batches);
  }
}

TEST(RunPim, ReadbackIndependentOfRows) {
  auto config = small_config(96);
  config.route_only = true;
  const auto small = run_pim(random_table(1000, 6, 8, 23), AggSpec::count(), config);
  const auto large = run_pim(random_table(50000, 6, 8, 24), AggSpec::count(), config);
  EXPECT_EQ(small.stats.bytes_dpu_to_host, large.stats.bytes_dpu_to_host);
  // 20 triples, B^2 cells each per bin slot, times B slots, 4-byte counts.
  EXPECT_EQ(small.stats.bytes_dpu_to_host, 20u * 8 * 8 * 8 * 4 * 2);  // F = 2
  EXPECT_LT(small.stats.bytes_host_to_dpu, large.stats.bytes_host_to_dpu);
}

TEST(RunPim, BalancedOnUniformData) {
  const auto table = random_table(200000, 6, 8, 25);
  auto config = small_config(96);
  config.route_only = true;
  const auto result = run_pim(table, AggSpec::count(), config);
  EXPECT_LE(result.stats.max_balance_ratio(), 1.05);
}

TEST(RunPim, RejectsOversizedPlan) {
  const auto table = random_table(10, 6, 256, 26);
  auto config = small_config(1536);
  config.mram_bytes = std::size_t{1} << 20;
  config.host_buffer_bytes = 320 << 10;
  EXPECT_THROW(run_pim(table, AggSpec::count(), config), PlanRejected);
}

TEST(RunPim, RejectsBadConfig) {
  const auto table = random_table(10, 3, 4, 27);
  auto config = small_config(4);
  config.dpu_threads = 0;
  EXPECT_THROW(run_pim(table, AggSpec::count(), config), Error);
  config = small_config(4);
  config.wram_batch_bytes = config.wram_bytes + 1;
  EXPECT_THROW(run_pim(table, AggSpec::count(), config), Error);
  EXPECT_EQ(pim_mode_from_string("async"), PimMode::async);
  EXPECT_THROW(pim_mode_from_string("eventual"), Error);
}

}  // namespace
}  // namespace divan
