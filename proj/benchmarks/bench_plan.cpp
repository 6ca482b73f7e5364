#include <benchmark/benchmark.h>

#include "divan/pim_plan.hpp"

namespace divan {
namespace {

void BM_DpuDist(benchmark::State& state) {
  const auto n = static_cast<std::uint32_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(dpu_dist(n, 128, 2048));
  }
}
BENCHMARK(BM_DpuDist)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_AssignDpus(benchmark::State& state) {
  const auto plan = dpu_dist(32, 128, 4096);
  for (auto _ : state) {
    benchmark::DoNotOptimize(assign_dpus(plan.front(), 128, 4096, 4));
  }
}
BENCHMARK(BM_AssignDpus)->Unit(benchmark::kMicrosecond);

}  // namespace
}  // namespace divan
