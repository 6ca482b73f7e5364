#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <vector>

namespace divan {

// Positional dimension index inside one analysis (0..N-1 over the selected dimensions).
using DimIndex = std::uint32_t;

// A 3-combination of dimension indices, stored ascending.
struct Triple {
  std::array<DimIndex, 3> dims{};

  static Triple of(DimIndex a, DimIndex b, DimIndex c);

  DimIndex operator[](std::size_t i) const { return dims[i]; }
  bool contains(DimIndex d) const { return dims[0] == d || dims[1] == d || dims[2] == d; }
  // Position of `d` inside dims; throws if absent.
  std::size_t axis_of(DimIndex d) const;

  std::string to_string() const;

  friend auto operator<=>(const Triple&, const Triple&) = default;
  friend bool operator==(const Triple&, const Triple&) = default;
};

std::uint64_t choose(std::uint64_t n, std::uint64_t k);

// All C(n,3) triples in lexicographic order.
std::vector<Triple> enumerate_triples(std::uint32_t n);

}  // namespace divan
