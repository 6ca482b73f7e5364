#include "divan/pim_plan.hpp"

#include <algorithm>
#include <limits>

#include <nlohmann/json.hpp>

#include "divan/error.hpp"

namespace divan {

namespace {

Triple sorted(const ShiftTriple& t) { return Triple::of(t[0], t[1], t[2]); }

Triple shifted(const Triple& t, std::uint32_t s, std::uint32_t n) { return sorted(shift(t.dims, s, n)); }

// Group 0 without the N >= 4 guard; split() needs it for R in 1..3.
std::vector<Triple> group0_unchecked(std::uint32_t n) {
  auto group = std::vector<Triple>{};
  for (auto a = DimIndex{1}; a + 2 <= n; ++a) {
    for (auto b = a + 1; b + 1 <= n; ++b) {
      if (n % 3 == 0 && a == n / 3 && b == 2 * (n / 3)) {
        continue;
      }
      const auto candidate = Triple{{0, a, b}};
      if (candidate < shifted(candidate, n - a, n) && candidate < shifted(candidate, n - b, n)) {
        group.push_back(candidate);
      }
    }
  }
  return group;
}

std::vector<std::vector<Triple>> even_dist_3d_unchecked(std::uint32_t n) {
  const auto base = group0_unchecked(n);
  auto groups = std::vector<std::vector<Triple>>(n);
  for (auto i = std::uint32_t{0}; i < n; ++i) {
    for (const auto& t : base) {
      groups[i].push_back(shifted(t, i, n));
    }
    if (n % 3 == 0 && i < n / 3) {
      groups[i].push_back(shifted(Triple{{0, n / 3, 2 * (n / 3)}}, i, n));
    }
  }
  return groups;
}

Triple translate(const Triple& t, std::uint32_t offset) {
  return Triple{{t.dims[0] + offset, t.dims[1] + offset, t.dims[2] + offset}};
}

}  // namespace

ShiftTriple shift(const ShiftTriple& t, std::uint32_t s, std::uint32_t n) {
  return {(t[0] + s) % n, (t[1] + s) % n, (t[2] + s) % n};
}

std::vector<Triple> group0(std::uint32_t n) {
  if (n < 4) {
    throw Error("group 0 needs at least 4 dimensions, got " + std::to_string(n));
  }
  return group0_unchecked(n);
}

std::vector<std::vector<Triple>> even_dist_3d(std::uint32_t n) {
  if (n < 4) {
    throw Error("even 3D distribution needs at least 4 dimensions, got " + std::to_string(n));
  }
  return even_dist_3d_unchecked(n);
}

std::vector<std::vector<DimPair>> even_dist_2d(std::uint32_t n, bool front) {
  if (n < 2) {
    throw Error("even 2D distribution needs at least 2 indexes, got " + std::to_string(n));
  }
  const auto base = static_cast<std::uint32_t>(choose(n, 2) / n);
  auto groups = std::vector<std::vector<DimPair>>(n);
  for (auto i = std::uint32_t{0}; i < n; ++i) {
    auto count = base;
    if (n % 2 == 0 && ((front && i < n / 2) || (!front && i >= n / 2))) {
      ++count;
    }
    for (auto j = std::uint32_t{1}; j <= count; ++j) {
      groups[i].push_back({i, (i + j) % n});
    }
  }
  return groups;
}

std::vector<std::vector<Triple>> split(std::uint32_t n, std::uint32_t r) {
  if (r < 1) {
    throw Error("split needs at least one group");
  }
  if (r >= n) {
    return even_dist_3d_unchecked(n);
  }
  auto groups = even_dist_3d_unchecked(r);
  for (auto dim = DimIndex{0}; dim < r; ++dim) {
    for (auto i = r; i + 1 < n; ++i) {
      for (auto j = i + 1; j < n; ++j) {
        groups[dim].push_back(Triple{{dim, i, j}});
      }
    }
  }
  if (r >= 2) {
    const auto front = even_dist_2d(r, true);
    const auto back = even_dist_2d(r, false);
    auto curr = 0u;
    for (auto dim = r; dim < n; ++dim, ++curr) {
      const auto& pairs = curr % 2 == 0 ? back : front;
      for (auto i = std::uint32_t{0}; i < r; ++i) {
        for (const auto& p : pairs[i]) {
          groups[i].push_back(Triple::of(p[0], p[1], dim));
        }
      }
    }
  }
  return groups;
}

std::size_t GroupPlan::triple_count() const {
  auto total = std::size_t{0};
  for (const auto& g : groups) {
    total += g.size();
  }
  return total;
}

std::vector<GroupPlan> dpu_dist(std::uint32_t n, std::uint32_t bins, std::uint32_t dpus, std::uint32_t offset) {
  if (bins == 0 || dpus < bins) {
    throw Error("need at least B=" + std::to_string(bins) + " DPUs, got " + std::to_string(dpus));
  }
  if (n < 3) {
    throw Error("need at least 3 dimensions, got " + std::to_string(n));
  }
  auto iterations = std::vector<GroupPlan>{};
  // Each level handles the triples touching the first R of the remaining dims, then recurses on the rest.
  while (true) {
    const auto r = dpus / bins;
    auto plan = GroupPlan{static_cast<std::uint32_t>(iterations.size()), offset, r, {}, {}};
    auto groups = split(n, r);
    for (auto g = std::uint32_t{0}; g < groups.size(); ++g) {
      if (groups[g].empty()) {
        continue;
      }
      for (auto& t : groups[g]) {
        t = translate(t, offset);
      }
      plan.groups.push_back(std::move(groups[g]));
      plan.common_dims.push_back(g + offset);
    }
    iterations.push_back(std::move(plan));
    if (n <= r || n - r <= 2) {
      break;
    }
    n -= r;
    offset += r;
  }
  return iterations;
}

std::size_t DpuAssignment::max_footprint() const {
  return footprint_bytes.empty() ? 0 : *std::max_element(footprint_bytes.begin(), footprint_bytes.end());
}

DpuAssignment assign_dpus(const GroupPlan& plan, std::uint32_t bins, std::uint32_t dpus, std::size_t element_bytes,
                          const MemoryModel& memory) {
  const auto groups = static_cast<std::uint32_t>(plan.groups.size());
  const auto base = std::uint64_t{groups} * bins;
  if (groups == 0 || base > dpus) {
    throw PlanRejected("iteration " + std::to_string(plan.iteration) + " needs " + std::to_string(base) +
                       " DPUs, only " + std::to_string(dpus) + " available");
  }
  auto out = DpuAssignment{};
  out.iteration = plan.iteration;
  out.bins = bins;
  out.groups = groups;
  out.replication = static_cast<std::uint32_t>(dpus / base);
  out.dpus_total = dpus;
  out.element_bytes = element_bytes;

  const auto slice_bytes = std::size_t{bins} * bins * element_bytes;
  for (auto g = std::uint32_t{0}; g < groups; ++g) {
    out.footprint_bytes.push_back(plan.groups[g].size() * slice_bytes);
  }
  const auto budget = memory.mram_bytes - std::min(memory.mram_bytes, memory.host_buffer_bytes);
  for (auto g = std::uint32_t{0}; g < groups; ++g) {
    if (out.footprint_bytes[g] > budget) {
      throw PlanRejected("iteration " + std::to_string(plan.iteration) + " group " + std::to_string(g) + ": " +
                         std::to_string(plan.groups[g].size()) + " triples x " + std::to_string(bins) + "^2 x " +
                         std::to_string(element_bytes) + " B = " + std::to_string(out.footprint_bytes[g]) +
                         " B of aggregates plus a " + std::to_string(memory.host_buffer_bytes) +
                         " B buffer exceed the " + std::to_string(memory.mram_bytes) + " B MRAM");
    }
  }

  out.slots.reserve(out.replication * base);
  for (auto replica = std::uint32_t{0}; replica < out.replication; ++replica) {
    for (auto g = std::uint32_t{0}; g < groups; ++g) {
      for (auto b = std::uint32_t{0}; b < bins; ++b) {
        out.slots.push_back(DpuSlot{g, b, replica});
      }
    }
  }
  return out;
}

nlohmann::json plan_to_json(const std::vector<GroupPlan>& plan, std::span<const DpuAssignment> assignments,
                            bool include_dpus) {
  auto iterations = nlohmann::json::array();
  for (auto i = std::size_t{0}; i < plan.size(); ++i) {
    const auto& it = plan[i];
    auto groups = nlohmann::json::array();
    auto min_size = std::numeric_limits<std::size_t>::max();
    auto max_size = std::size_t{0};
    for (auto g = std::size_t{0}; g < it.groups.size(); ++g) {
      auto triples = nlohmann::json::array();
      for (const auto& t : it.groups[g]) {
        triples.push_back(t.dims);
      }
      min_size = std::min(min_size, it.groups[g].size());
      max_size = std::max(max_size, it.groups[g].size());
      groups.push_back({{"group", g}, {"common_dim", it.common_dims[g]}, {"size", it.groups[g].size()},
                        {"triples", triples}});
    }
    auto entry = nlohmann::json{{"iteration", it.iteration},
                                {"offset", it.offset},
                                {"rows", it.rows},
                                {"triple_count", it.triple_count()},
                                {"groups", groups},
                                {"balance", {{"min_group", min_size}, {"max_group", max_size},
                                             {"spread", max_size - min_size}}}};
    if (i < assignments.size()) {
      const auto& a = assignments[i];
      auto assignment = nlohmann::json{{"replication", a.replication},
                                       {"dpus_used", a.dpus_used()},
                                       {"dpus_idle", a.dpus_total - a.dpus_used()},
                                       {"element_bytes", a.element_bytes},
                                       {"footprint_bytes", a.footprint_bytes},
                                       {"max_footprint_bytes", a.max_footprint()}};
      if (include_dpus) {
        auto dpus = nlohmann::json::array();
        for (auto id = std::uint32_t{0}; id < a.slots.size(); ++id) {
          const auto& s = a.slots[id];
          dpus.push_back({{"dpu", id}, {"group", s.group}, {"bin", s.bin}, {"replica", s.replica},
                          {"footprint_bytes", a.footprint_bytes[s.group]}});
        }
        assignment["dpus"] = std::move(dpus);
      }
      entry["assignment"] = std::move(assignment);
    }
    iterations.push_back(std::move(entry));
  }
  return {{"iterations", iterations}};
}

}  // namespace divan
