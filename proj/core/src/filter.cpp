#include "divan/filter.hpp"

#include <array>
#include <charconv>
#include <numeric>

#include "divan/error.hpp"

namespace divan {

namespace {

Value parse_literal(std::string_view text, const Column& column) {
  switch (column.schema().kind) {
    case ColumnKind::integer: {
      auto value = std::int64_t{};
      const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
      if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw Error("filter literal '" + std::string{text} + "' is not an integer");
      }
      return value;
    }
    case ColumnKind::float64: {
      auto value = 0.0;
      const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
      if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw Error("filter literal '" + std::string{text} + "' is not a number");
      }
      return value;
    }
    case ColumnKind::timestamp: {
      if (auto value = parse_timestamp(text)) {
        return *value;
      }
      throw Error("filter literal '" + std::string{text} + "' is not a timestamp");
    }
    case ColumnKind::text:
      return std::string{text};
  }
  return std::monostate{};
}

}  // namespace

RowFilter RowFilter::parse(std::string_view text, const Dataset& dataset) {
  // Longer operators first so "<=" is not read as "<".
  static constexpr auto kOps = std::array<std::pair<std::string_view, Predicate::Op>, 6>{{
      {"<=", Predicate::Op::le},
      {">=", Predicate::Op::ge},
      {"!=", Predicate::Op::ne},
      {"=", Predicate::Op::eq},
      {"<", Predicate::Op::lt},
      {">", Predicate::Op::gt},
  }};

  auto predicates = std::vector<Predicate>{};
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto term = text.substr(0, comma);
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    if (term.empty()) {
      continue;
    }
    auto best = std::string_view::npos;
    auto best_op = kOps.front();
    for (const auto& op : kOps) {
      const auto at = term.find(op.first);
      if (at != std::string_view::npos && (at < best || (at == best && op.first.size() > best_op.first.size()))) {
        best = at;
        best_op = op;
      }
    }
    if (best == std::string_view::npos || best == 0) {
      throw Error("cannot parse filter term '" + std::string{term} + "'");
    }
    const auto column = dataset.column_id(term.substr(0, best));
    const auto literal = term.substr(best + best_op.first.size());
    predicates.push_back(Predicate{column, best_op.second, parse_literal(literal, dataset.column(column))});
  }
  return RowFilter{std::move(predicates)};
}

bool RowFilter::matches(const Dataset& dataset, RowId row) const {
  for (const auto& predicate : predicates_) {
    const auto& column = dataset.column(predicate.column);
    if (column.is_null(row)) {
      return false;
    }
    const auto order = compare_values(column.value(row), predicate.literal, column.schema().nulls_first);
    auto keep = false;
    switch (predicate.op) {
      case Predicate::Op::eq:
        keep = order == 0;
        break;
      case Predicate::Op::ne:
        keep = order != 0;
        break;
      case Predicate::Op::lt:
        keep = order < 0;
        break;
      case Predicate::Op::le:
        keep = order <= 0;
        break;
      case Predicate::Op::gt:
        keep = order > 0;
        break;
      case Predicate::Op::ge:
        keep = order >= 0;
        break;
    }
    if (!keep) {
      return false;
    }
  }
  return true;
}

std::vector<RowId> select_rows(const Dataset& dataset, const RowFilter& filter) {
  auto rows = std::vector<RowId>{};
  if (filter.empty()) {
    rows.resize(dataset.row_count());
    std::iota(rows.begin(), rows.end(), RowId{0});
    return rows;
  }
  for (auto row = RowId{0}; row < dataset.row_count(); ++row) {
    if (filter.matches(dataset, row)) {
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace divan
