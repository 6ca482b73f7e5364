#pragma once

#include <string_view>
#include <vector>

#include "divan/dataset.hpp"

namespace divan {

// Row-subset selection: a comma-separated conjunction of `column<op>literal` terms,
// op one of = != < <= > >=, e.g. "year>=2019,zone=JFK". NULL cells never match.
struct Predicate {
  enum class Op { eq, ne, lt, le, gt, ge };

  ColumnId column = 0;
  Op op = Op::eq;
  Value literal;
};

class RowFilter {
 public:
  RowFilter() = default;
  explicit RowFilter(std::vector<Predicate> predicates) : predicates_(std::move(predicates)) {}

  static RowFilter parse(std::string_view text, const Dataset& dataset);

  bool empty() const { return predicates_.empty(); }
  bool matches(const Dataset& dataset, RowId row) const;
  const std::vector<Predicate>& predicates() const { return predicates_; }

 private:
  std::vector<Predicate> predicates_;
};

std::vector<RowId> select_rows(const Dataset& dataset, const RowFilter& filter);

}  // namespace divan
