#include <benchmark/benchmark.h>

#include <numeric>

#include "divan/binning.hpp"
#include "divan/synthetic.hpp"

namespace divan {
namespace {

const Dataset& dataset() {
  static const auto d = [] {
    auto out = make_uniform_dataset(std::size_t{1} << 21, 1, 3);
    preprocess(out, 0);
    return out;
  }();
  return d;
}

std::vector<RowId> every_other() {
  auto rows = std::vector<RowId>{};
  for (auto r = RowId{0}; r < dataset().row_count(); r += 2) {
    rows.push_back(r);
  }
  return rows;
}

void BM_BinExact(benchmark::State& state) {
  const auto rows = every_other();
  for (auto _ : state) {
    benchmark::DoNotOptimize(bin_exact(dataset(), 0, rows, 128));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows.size()));
}
BENCHMARK(BM_BinExact)->Unit(benchmark::kMillisecond);

void BM_BinApprox(benchmark::State& state) {
  const auto rows = every_other();
  for (auto _ : state) {
    benchmark::DoNotOptimize(bin_dimension(dataset(), 0, rows, 128, BinningMode::approximate));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows.size()));
}
BENCHMARK(BM_BinApprox)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace divan
