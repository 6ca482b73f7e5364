#include "divan/rank.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include "divan/error.hpp"

namespace divan {

double score(const RenderedImage& image) {
  if (image.degenerate || image.pixels.empty()) {
    return 0.0;
  }
  auto sum = 0.0;
  for (const auto& p : image.pixels) {
    sum += p.r;
  }
  return sum / static_cast<double>(image.pixels.size());
}

ScoredImage ScoredImage::of(const RenderedImage& image, std::string id) {
  const auto& s = image.spec;
  return ScoredImage{std::move(id), s.triple, s.x_dim, s.y_dim, s.z_dim, s.z_lo, divan::score(image),
                     image.degenerate};
}

std::vector<AxisGroup> group_by_axes(const std::vector<ScoredImage>& images) {
  auto by_key = std::map<std::array<DimIndex, 2>, AxisGroup>{};
  for (auto i = std::size_t{0}; i < images.size(); ++i) {
    const auto& image = images[i];
    auto key = image.axes();
    if (key[0] > key[1]) {
      std::swap(key[0], key[1]);
    }
    auto& group = by_key[key];
    group.key = key;
    group.members.push_back(i);
    if (!image.degenerate) {
      group.score += image.score;
    }
  }
  auto out = std::vector<AxisGroup>{};
  out.reserve(by_key.size());
  for (auto& [key, group] : by_key) {
    out.push_back(std::move(group));
  }
  return out;
}

void order_groups(std::vector<AxisGroup>& groups, bool reverse) {
  std::stable_sort(groups.begin(), groups.end(), [&](const AxisGroup& a, const AxisGroup& b) {
    if (a.score != b.score) {
      return reverse ? a.score < b.score : a.score > b.score;
    }
    return a.key < b.key;
  });
}

namespace {

auto tie_key(const ScoredImage& image) { return std::tuple{image.triple, image.z_dim, image.z_lo}; }

// Orders by score (descending, or ascending for `reverse`), then by the tie key ascending.
bool image_before(const ScoredImage& a, double score_a, const ScoredImage& b, double score_b, bool reverse) {
  if (score_a != score_b) {
    return reverse ? score_a < score_b : score_a > score_b;
  }
  return tie_key(a) < tie_key(b);
}

}  // namespace

std::vector<RankedEntry> select(const std::vector<ScoredImage>& images, std::size_t n, std::size_t m, bool reverse) {
  if (n == 0 || m == 0) {
    throw Error("n and m must be at least 1");
  }
  auto groups = group_by_axes(images);
  order_groups(groups, reverse);
  auto out = std::vector<RankedEntry>{};
  for (auto g = std::size_t{0}; g < std::min(m, groups.size()); ++g) {
    auto members = groups[g].members;
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return image_before(images[a], images[a].score, images[b], images[b].score, reverse);
    });
    for (auto i = std::size_t{0}; i < std::min(n, members.size()); ++i) {
      out.push_back(RankedEntry{members[i], g, images[members[i]].score});
    }
  }
  return out;
}

std::vector<RankedEntry> diversity_penalty(std::vector<RankedEntry> entries, const std::vector<ScoredImage>& images,
                                           double factor, bool reverse) {
  auto begin = entries.begin();
  while (begin != entries.end()) {
    const auto group = begin->group;
    const auto end = std::find_if(begin, entries.end(), [&](const RankedEntry& e) { return e.group != group; });
    const auto lead_z = images[begin->image].z_dim;
    for (auto it = begin; it != end; ++it) {
      it->effective_score = images[it->image].score * (images[it->image].z_dim == lead_z ? 1.0 : factor);
    }
    std::sort(begin, end, [&](const RankedEntry& a, const RankedEntry& b) {
      return image_before(images[a.image], a.effective_score, images[b.image], b.effective_score, reverse);
    });
    begin = end;
  }
  return entries;
}

}  // namespace divan
