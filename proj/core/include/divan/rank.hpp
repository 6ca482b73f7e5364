#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "divan/viz.hpp"

namespace divan {

// Mean unquantized red over all pixels; 0 for degenerate images.
double score(const RenderedImage& image);

// What ranking needs to know about one image.
struct ScoredImage {
  std::string id;
  Triple triple;
  DimIndex x_dim = 0;
  DimIndex y_dim = 0;
  DimIndex z_dim = 0;
  std::uint32_t z_lo = 0;
  double score = 0.0;
  bool degenerate = false;

  static ScoredImage of(const RenderedImage& image, std::string id);
  std::array<DimIndex, 2> axes() const { return {x_dim, y_dim}; }
};

struct AxisGroup {
  std::array<DimIndex, 2> key{};  // (smaller, larger) dim
  std::vector<std::size_t> members;  // indexes into the image list
  double score = 0.0;                // sum of non-degenerate member scores
};

// Every image lands in exactly one group; groups come out ordered by key.
std::vector<AxisGroup> group_by_axes(const std::vector<ScoredImage>& images);

// Descending group score (ascending for `reverse`), ties by key.
void order_groups(std::vector<AxisGroup>& groups, bool reverse = false);

struct RankedEntry {
  std::size_t image = 0;       // index into the image list
  std::size_t group = 0;       // position of the group in the presentation order
  double effective_score = 0;  // score after any diversity penalty
};

/// Top n images of each of the top m groups. Groups by descending group score, members by descending
/// score; ties fall back to (triple, z_dim, z_lo), and group ties to the axis key. `reverse` walks
/// groups and members from the bottom instead.
std::vector<RankedEntry> select(const std::vector<ScoredImage>& images, std::size_t n, std::size_t m,
                                bool reverse = false);

/// Inside each group, images whose z dim differs from the group's leading image get their score
/// multiplied by `factor`; each group is then re-sorted.
std::vector<RankedEntry> diversity_penalty(std::vector<RankedEntry> entries, const std::vector<ScoredImage>& images,
                                           double factor = 0.5, bool reverse = false);

}  // namespace divan
