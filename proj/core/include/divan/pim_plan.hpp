#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "divan/triple.hpp"

namespace divan {

// An ordered triple of dimension ids; shifting rotates each component modulo N.
using ShiftTriple = std::array<DimIndex, 3>;

ShiftTriple shift(const ShiftTriple& t, std::uint32_t s, std::uint32_t n);

// Group 0: the triples (0,a,b) that come first among their shift-overlapping peers.
std::vector<Triple> group0(std::uint32_t n);

// N groups of size floor(C(N,3)/N) (+1 for the first N/3 groups when 3 | N); group i contains dim i.
std::vector<std::vector<Triple>> even_dist_3d(std::uint32_t n);

using DimPair = std::array<DimIndex, 2>;

// N groups of pairs where group i holds (i, (i+j) % N). For even N, `front` gives the extra pair to
// the first half of the groups, otherwise to the second half.
std::vector<std::vector<DimPair>> even_dist_2d(std::uint32_t n, bool front);

// R groups covering every triple that touches dims 0..R-1; group d contains dim d. R >= N gives the
// even 3D distribution of all N dims.
std::vector<std::vector<Triple>> split(std::uint32_t n, std::uint32_t r);

struct GroupPlan {
  std::uint32_t iteration = 0;
  std::uint32_t offset = 0;  // dims of this iteration's sub-problem start here
  std::uint32_t rows = 0;    // R = floor(D/B)
  std::vector<std::vector<Triple>> groups;
  std::vector<DimIndex> common_dims;  // shared dim of each group, in original dim ids

  std::size_t triple_count() const;
};

// Iterations to run one after another; empty groups are dropped.
std::vector<GroupPlan> dpu_dist(std::uint32_t n, std::uint32_t bins, std::uint32_t dpus, std::uint32_t offset = 0);

struct MemoryModel {
  std::size_t mram_bytes = std::size_t{64} << 20;
  std::size_t host_buffer_bytes = std::size_t{320} << 10;
};

struct DpuSlot {
  std::uint32_t group = 0;
  std::uint32_t bin = 0;  // value of the group's common dim this DPU accepts
  std::uint32_t replica = 0;
};

/// One iteration's DPU mapping. DPU id = replica * (groups * B) + group * B + bin; every replica of a
/// (group, bin) slot holds the group's full triple list.
struct DpuAssignment {
  std::uint32_t iteration = 0;
  std::uint32_t bins = 0;
  std::uint32_t groups = 0;
  std::uint32_t replication = 1;  // F
  std::uint32_t dpus_total = 0;
  std::size_t element_bytes = 4;
  std::vector<DpuSlot> slots;  // indexed by DPU id; size F * groups * B
  std::vector<std::size_t> footprint_bytes;  // per group: |triples| * B^2 * element_bytes

  std::uint32_t dpus_used() const { return static_cast<std::uint32_t>(slots.size()); }
  std::uint32_t dpu_id(std::uint32_t group, std::uint32_t bin, std::uint32_t replica) const {
    return replica * groups * bins + group * bins + bin;
  }
  std::size_t max_footprint() const;
};

// Throws PlanRejected when a DPU's aggregates plus its host buffer exceed MRAM, or when D < groups * B.
DpuAssignment assign_dpus(const GroupPlan& plan, std::uint32_t bins, std::uint32_t dpus, std::size_t element_bytes,
                          const MemoryModel& memory = {});

nlohmann::json plan_to_json(const std::vector<GroupPlan>& plan, std::span<const DpuAssignment> assignments,
                            bool include_dpus);

}  // namespace divan
