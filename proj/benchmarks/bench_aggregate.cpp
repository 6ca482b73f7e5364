#include <benchmark/benchmark.h>

#include <random>

#include "divan/cpu_agg.hpp"
#include "divan/pim_sim.hpp"

namespace divan {
namespace {

BinnedTable make_table(std::size_t rows, std::uint32_t dims, std::uint32_t bins) {
  auto rng = std::mt19937_64{7};
  auto bin = std::uniform_int_distribution<std::uint32_t>{0, bins - 1};
  auto table = BinnedTable{};
  table.bins = bins;
  table.columns.assign(dims, std::vector<BinIndex>(rows));
  table.values.resize(rows);
  for (auto r = std::size_t{0}; r < rows; ++r) {
    for (auto& column : table.columns) {
      column[r] = static_cast<BinIndex>(bin(rng));
    }
    table.values[r] = static_cast<double>(r % 1000);
  }
  return table;
}

// One B=128 triple, P partitions of the first axis.
void BM_ScanMajorPartitions(benchmark::State& state) {
  const auto table = make_table(1'000'000, 3, 128);
  const auto triples = enumerate_triples(3);
  const auto p = static_cast<std::uint32_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(aggregate_scan_major(table, AggSpec::count(), triples, p, 1));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(table.rows()));
}
BENCHMARK(BM_ScanMajorPartitions)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_RecordMajor(benchmark::State& state) {
  const auto table = make_table(200'000, static_cast<std::uint32_t>(state.range(0)), 32);
  const auto triples = enumerate_triples(table.dims());
  for (auto _ : state) {
    benchmark::DoNotOptimize(aggregate_record_major(table, AggSpec::count(), triples));
  }
  state.counters["triples"] = static_cast<double>(triples.size());
}
BENCHMARK(BM_RecordMajor)->Arg(5)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_PimSim(benchmark::State& state) {
  const auto table = make_table(200'000, 8, 32);
  auto config = PimConfig{};
  config.dpu_count = 256;
  config.mode = state.range(0) == 0 ? PimMode::sync : PimMode::async;
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_pim(table, AggSpec::count(), config));
  }
}
BENCHMARK(BM_PimSim)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace divan
