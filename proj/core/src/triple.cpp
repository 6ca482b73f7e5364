#include "divan/triple.hpp"

#include <algorithm>

#include "divan/error.hpp"

namespace divan {

Triple Triple::of(DimIndex a, DimIndex b, DimIndex c) {
  if (a == b || b == c || a == c) {
    throw Error("triple dimensions must be distinct");
  }
  auto t = Triple{{a, b, c}};
  std::sort(t.dims.begin(), t.dims.end());
  return t;
}

std::size_t Triple::axis_of(DimIndex d) const {
  for (auto i = std::size_t{0}; i < 3; ++i) {
    if (dims[i] == d) {
      return i;
    }
  }
  throw Error("dimension " + std::to_string(d) + " is not part of " + to_string());
}

std::string Triple::to_string() const {
  return "(" + std::to_string(dims[0]) + "," + std::to_string(dims[1]) + "," + std::to_string(dims[2]) + ")";
}

std::uint64_t choose(std::uint64_t n, std::uint64_t k) {
  if (k > n) {
    return 0;
  }
  auto result = std::uint64_t{1};
  for (auto i = std::uint64_t{1}; i <= k; ++i) {
    result = result * (n - k + i) / i;
  }
  return result;
}

std::vector<Triple> enumerate_triples(std::uint32_t n) {
  if (n < 3) {
    throw Error("need at least 3 dimensions, got " + std::to_string(n));
  }
  auto out = std::vector<Triple>{};
  out.reserve(choose(n, 3));
  for (auto a = DimIndex{0}; a < n; ++a) {
    for (auto b = a + 1; b < n; ++b) {
      for (auto c = b + 1; c < n; ++c) {
        out.push_back(Triple{{a, b, c}});
      }
    }
  }
  return out;
}

}  // namespace divan
