#include "divan/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <istream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "divan/error.hpp"
#include "divan/thread_pool.hpp"

namespace divan {

namespace {

template <typename T>
int three_way(const T& lhs, const T& rhs) {
  if (lhs < rhs) {
    return -1;
  }
  if (rhs < lhs) {
    return 1;
  }
  return 0;
}

std::string_view trim(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) {
    text.remove_prefix(1);
  }
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  return text;
}

template <typename T>
std::optional<T> parse_number(std::string_view text) {
  auto value = T{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    return std::nullopt;
  }
  return value;
}

// Splits one record; double quotes may wrap a field and "" escapes a quote.
std::vector<std::string> split_record(std::string_view line, char delimiter) {
  auto fields = std::vector<std::string>{};
  auto field = std::string{};
  auto quoted = false;
  for (auto i = std::size_t{0}; i < line.size(); ++i) {
    const auto c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

}  // namespace

std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::integer:
      return "integer";
    case ColumnKind::float64:
      return "float64";
    case ColumnKind::text:
      return "text";
    case ColumnKind::timestamp:
      return "timestamp";
  }
  return "integer";
}

ColumnKind column_kind_from_string(std::string_view name) {
  if (name == "integer" || name == "int" || name == "int64") {
    return ColumnKind::integer;
  }
  if (name == "float64" || name == "float" || name == "double") {
    return ColumnKind::float64;
  }
  if (name == "text" || name == "string") {
    return ColumnKind::text;
  }
  if (name == "timestamp") {
    return ColumnKind::timestamp;
  }
  throw Error("unknown column kind '" + std::string{name} + "'");
}

std::string_view to_string(ValueType type) {
  switch (type) {
    case ValueType::int32:
      return "int32";
    case ValueType::float32:
      return "float32";
    case ValueType::float64:
      return "float64";
  }
  return "float64";
}

ValueType value_type_from_string(std::string_view name) {
  if (name == "int32") {
    return ValueType::int32;
  }
  if (name == "float32") {
    return ValueType::float32;
  }
  if (name == "float64") {
    return ValueType::float64;
  }
  throw Error("unknown value type '" + std::string{name} + "'");
}

std::size_t value_bytes(ValueType type) { return type == ValueType::float64 ? 8 : 4; }

int compare_values(const Value& lhs, const Value& rhs, bool nulls_first) {
  const auto lhs_null = std::holds_alternative<std::monostate>(lhs);
  const auto rhs_null = std::holds_alternative<std::monostate>(rhs);
  if (lhs_null || rhs_null) {
    if (lhs_null && rhs_null) {
      return 0;
    }
    const auto null_side = nulls_first ? -1 : 1;
    return lhs_null ? null_side : -null_side;
  }
  if (lhs.index() != rhs.index()) {
    // Mixed numeric kinds compare by value.
    if (!std::holds_alternative<std::string>(lhs) && !std::holds_alternative<std::string>(rhs)) {
      const auto as_double = [](const Value& v) {
        return std::holds_alternative<double>(v) ? std::get<double>(v) : static_cast<double>(std::get<std::int64_t>(v));
      };
      return three_way(as_double(lhs), as_double(rhs));
    }
    return three_way(lhs.index(), rhs.index());
  }
  return std::visit(
      [&](const auto& left) -> int {
        using T = std::decay_t<decltype(left)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          return 0;
        } else {
          return three_way(left, std::get<T>(rhs));
        }
      },
      lhs);
}

nlohmann::json value_to_json(const Value& value) {
  return std::visit(
      [](const auto& v) -> nlohmann::json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          return nullptr;
        } else {
          return v;
        }
      },
      value);
}

nlohmann::json key_to_json(const DimKey& key) {
  if (key.size() == 1) {
    return value_to_json(key.front());
  }
  auto out = nlohmann::json::array();
  for (const auto& part : key) {
    out.push_back(value_to_json(part));
  }
  return out;
}

std::optional<std::int64_t> parse_timestamp(std::string_view text) {
  text = trim(text);
  if (auto integer = parse_number<std::int64_t>(text)) {
    return integer;
  }
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') {
    return std::nullopt;
  }
  const auto year = parse_number<int>(text.substr(0, 4));
  const auto month = parse_number<unsigned>(text.substr(5, 2));
  const auto day = parse_number<unsigned>(text.substr(8, 2));
  if (!year || !month || !day) {
    return std::nullopt;
  }
  const auto date = std::chrono::year{*year} / std::chrono::month{*month} / std::chrono::day{*day};
  if (!date.ok()) {
    return std::nullopt;
  }
  auto seconds = std::int64_t{std::chrono::sys_days{date}.time_since_epoch().count()} * 86400;
  if (text.size() == 10) {
    return seconds;
  }
  if (text[10] != ' ' && text[10] != 'T') {
    return std::nullopt;
  }
  const auto clock = text.substr(11);
  if (clock.size() != 5 && clock.size() != 8) {
    return std::nullopt;
  }
  const auto hour = parse_number<int>(clock.substr(0, 2));
  const auto minute = parse_number<int>(clock.substr(3, 2));
  auto second = std::optional<int>{0};
  if (clock.size() == 8) {
    if (clock[5] != ':') {
      return std::nullopt;
    }
    second = parse_number<int>(clock.substr(6, 2));
  }
  if (clock[2] != ':' || !hour || !minute || !second || *hour > 23 || *minute > 59 || *second > 60) {
    return std::nullopt;
  }
  seconds += *hour * 3600 + *minute * 60 + *second;
  return seconds;
}

Column::Column(ColumnSchema schema) : schema_(std::move(schema)) {}

void Column::mark_null(bool null) {
  if (null && nulls_.empty()) {
    nulls_.assign(size_, 0);
    nulls_.push_back(1);
  } else if (!nulls_.empty()) {
    nulls_.push_back(null ? 1 : 0);
  }
  ++size_;
}

void Column::push_null() {
  switch (schema_.kind) {
    case ColumnKind::integer:
    case ColumnKind::timestamp:
      integers_.push_back(0);
      break;
    case ColumnKind::float64:
      doubles_.push_back(0.0);
      break;
    case ColumnKind::text:
      texts_.emplace_back();
      break;
  }
  mark_null(true);
}

void Column::push_integer(std::int64_t value) {
  if (schema_.kind == ColumnKind::float64) {
    push_double(static_cast<double>(value));
    return;
  }
  if (schema_.kind == ColumnKind::text) {
    throw Error("column '" + schema_.name + "' is text, got an integer");
  }
  integers_.push_back(value);
  mark_null(false);
}

void Column::push_double(double value) {
  if (schema_.kind != ColumnKind::float64) {
    throw Error("column '" + schema_.name + "' is not float64");
  }
  doubles_.push_back(value);
  mark_null(false);
}

void Column::push_text(std::string value) {
  if (schema_.kind != ColumnKind::text) {
    throw Error("column '" + schema_.name + "' is not text");
  }
  texts_.push_back(std::move(value));
  mark_null(false);
}

void Column::push(const Value& value) {
  std::visit(
      [this](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          push_null();
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          push_integer(v);
        } else if constexpr (std::is_same_v<T, double>) {
          push_double(v);
        } else {
          push_text(v);
        }
      },
      value);
}

void Column::assign(std::vector<std::int64_t> values, std::vector<std::uint8_t> nulls) {
  size_ = values.size();
  integers_ = std::move(values);
  nulls_ = std::move(nulls);
}

void Column::assign(std::vector<double> values, std::vector<std::uint8_t> nulls) {
  size_ = values.size();
  doubles_ = std::move(values);
  nulls_ = std::move(nulls);
}

void Column::assign(std::vector<std::string> values, std::vector<std::uint8_t> nulls) {
  size_ = values.size();
  texts_ = std::move(values);
  nulls_ = std::move(nulls);
}

Value Column::value(RowId row) const {
  if (is_null(row)) {
    return std::monostate{};
  }
  switch (schema_.kind) {
    case ColumnKind::integer:
    case ColumnKind::timestamp:
      return integers_[row];
    case ColumnKind::float64:
      return doubles_[row];
    case ColumnKind::text:
      return texts_[row];
  }
  return std::monostate{};
}

std::optional<double> Column::numeric(RowId row) const {
  if (schema_.kind == ColumnKind::text) {
    throw Error("column '" + schema_.name + "' is text and has no numeric value");
  }
  if (is_null(row)) {
    return std::nullopt;
  }
  return schema_.kind == ColumnKind::float64 ? doubles_[row] : static_cast<double>(integers_[row]);
}

int Column::compare(RowId lhs, RowId rhs) const {
  if (!nulls_.empty()) {
    const auto lhs_null = nulls_[lhs] != 0;
    const auto rhs_null = nulls_[rhs] != 0;
    if (lhs_null || rhs_null) {
      if (lhs_null && rhs_null) {
        return 0;
      }
      const auto null_side = schema_.nulls_first ? -1 : 1;
      return lhs_null ? null_side : -null_side;
    }
  }
  switch (schema_.kind) {
    case ColumnKind::integer:
    case ColumnKind::timestamp:
      return three_way(integers_[lhs], integers_[rhs]);
    case ColumnKind::float64:
      return three_way(doubles_[lhs], doubles_[rhs]);
    case ColumnKind::text:
      return three_way(texts_[lhs], texts_[rhs]);
  }
  return 0;
}

Dataset::Dataset(std::vector<Column> columns) : columns_(std::move(columns)) {
  row_count_ = columns_.empty() ? 0 : columns_.front().size();
  for (const auto& column : columns_) {
    if (column.size() != row_count_) {
      throw Error("column '" + column.schema().name + "' has " + std::to_string(column.size()) + " rows, expected " +
                  std::to_string(row_count_));
    }
  }
  for (auto i = std::size_t{0}; i < columns_.size(); ++i) {
    for (auto j = i + 1; j < columns_.size(); ++j) {
      if (columns_[i].schema().name == columns_[j].schema().name) {
        throw Error("duplicate column name '" + columns_[i].schema().name + "'");
      }
    }
  }
}

const Column& Dataset::column(ColumnId id) const {
  if (id >= columns_.size()) {
    throw Error("unknown column id " + std::to_string(id));
  }
  return columns_[id];
}

std::optional<ColumnId> Dataset::find_column(std::string_view name) const {
  for (auto i = std::size_t{0}; i < columns_.size(); ++i) {
    if (columns_[i].schema().name == name) {
      return static_cast<ColumnId>(i);
    }
  }
  return std::nullopt;
}

ColumnId Dataset::column_id(std::string_view name) const {
  if (auto id = find_column(name)) {
    return *id;
  }
  throw Error("unknown column '" + std::string{name} + "'");
}

const DimensionSpec& Dataset::dimension(DimensionId id) const {
  if (id >= dims_.size()) {
    throw Error("unknown dimension id " + std::to_string(id));
  }
  return dims_[id];
}

std::optional<DimensionId> Dataset::find_dimension(std::string_view name) const {
  for (const auto& dim : dims_) {
    if (dim.name == name) {
      return dim.id;
    }
  }
  return std::nullopt;
}

DimensionId Dataset::add_dimension(ColumnId source, std::string name) {
  const auto& col = column(source);
  const auto id = static_cast<DimensionId>(dims_.size());
  dims_.push_back(DimensionSpec{id, name.empty() ? col.schema().name : std::move(name), {source}});
  sorted_.emplace_back();
  return id;
}

DimensionId Dataset::add_composite(ColumnId primary, ColumnId secondary, std::string name) {
  const auto& first = column(primary);
  const auto& second = column(secondary);
  if (name.empty()) {
    name = "(" + first.schema().name + "," + second.schema().name + ")";
  }
  const auto id = static_cast<DimensionId>(dims_.size());
  dims_.push_back(DimensionSpec{id, std::move(name), {primary, secondary}});
  sorted_.emplace_back();
  return id;
}

int Dataset::compare(DimensionId dim, RowId lhs, RowId rhs) const {
  for (const auto source : dimension(dim).sources) {
    if (const auto order = columns_[source].compare(lhs, rhs); order != 0) {
      return order;
    }
  }
  return 0;
}

DimKey Dataset::key(DimensionId dim, RowId row) const {
  auto out = DimKey{};
  for (const auto source : dimension(dim).sources) {
    out.push_back(columns_[source].value(row));
  }
  return out;
}

int Dataset::compare_keys(DimensionId dim, const DimKey& lhs, const DimKey& rhs) const {
  const auto& sources = dimension(dim).sources;
  for (auto i = std::size_t{0}; i < sources.size(); ++i) {
    const auto order = compare_values(lhs.at(i), rhs.at(i), columns_[sources[i]].schema().nulls_first);
    if (order != 0) {
      return order;
    }
  }
  return 0;
}

void Dataset::add_value_column(ColumnId column_id, ValueType type) {
  if (column(column_id).schema().kind == ColumnKind::text) {
    throw Error("value column '" + column(column_id).schema().name + "' must be numeric");
  }
  values_.push_back(ValueColumnSpec{column_id, type});
}

std::optional<ValueColumnSpec> Dataset::find_value_column(ColumnId column_id) const {
  for (const auto& spec : values_) {
    if (spec.column == column_id) {
      return spec;
    }
  }
  return std::nullopt;
}

bool Dataset::preprocessed() const {
  return !dims_.empty() && std::all_of(sorted_.begin(), sorted_.end(), [](const auto& s) { return s.has_value(); });
}

const SortedIndexColumn& Dataset::sorted_index(DimensionId dim) const {
  if (dim >= sorted_.size() || !sorted_[dim]) {
    throw NotPreprocessedError("dimension " + std::to_string(dim) + " has no sorted index; run preprocess first");
  }
  return *sorted_[dim];
}

void Dataset::set_sorted_index(SortedIndexColumn index) {
  if (index.dim >= dims_.size()) {
    throw Error("sorted index for unknown dimension " + std::to_string(index.dim));
  }
  if (index.ranks.size() != row_count_) {
    throw Error("sorted index length mismatch");
  }
  sorted_[index.dim] = std::move(index);
}

std::vector<double> Dataset::gather_values(ColumnId column_id, std::span<const RowId> rows) const {
  const auto& col = column(column_id);
  auto out = std::vector<double>{};
  out.reserve(rows.size());
  for (const auto row : rows) {
    out.push_back(col.numeric(row).value_or(0.0));
  }
  return out;
}

DimensionSpec make_composite(Dataset& dataset, ColumnId primary, ColumnId secondary) {
  const auto id = dataset.add_composite(primary, secondary);
  return dataset.dimension(id);
}

Dataset parse_delimited(std::istream& input, std::span<const ColumnSchema> schema, const IngestOptions& options) {
  if (schema.empty()) {
    throw Error("schema has no columns");
  }
  auto columns = std::vector<Column>{};
  for (const auto& col : schema) {
    columns.emplace_back(col);
  }

  // Maps each schema column to its position in the file.
  auto positions = std::vector<std::size_t>(schema.size());
  std::iota(positions.begin(), positions.end(), 0);
  auto line = std::string{};
  auto field_count = schema.size();
  if (options.header) {
    if (!std::getline(input, line)) {
      throw Error("empty input: no header row");
    }
    const auto names = split_record(line, options.delimiter);
    field_count = names.size();
    for (auto c = std::size_t{0}; c < schema.size(); ++c) {
      const auto it = std::find_if(names.begin(), names.end(),
                                   [&](const std::string& n) { return trim(n) == schema[c].name; });
      if (it == names.end()) {
        throw ParseError(0, c, "header has no column named '" + schema[c].name + "'");
      }
      positions[c] = static_cast<std::size_t>(it - names.begin());
    }
  }

  const auto is_null_token = [&](std::string_view cell) {
    return std::find(options.null_tokens.begin(), options.null_tokens.end(), cell) != options.null_tokens.end();
  };

  auto row = std::size_t{0};
  while (std::getline(input, line)) {
    if (trim(line).empty()) {
      continue;
    }
    ++row;
    const auto fields = split_record(line, options.delimiter);
    if (fields.size() < field_count) {
      throw ParseError(row, fields.size(), "expected " + std::to_string(field_count) + " fields, got " +
                                               std::to_string(fields.size()));
    }
    for (auto c = std::size_t{0}; c < schema.size(); ++c) {
      const auto cell = trim(fields[positions[c]]);
      auto& column = columns[c];
      if (is_null_token(cell)) {
        column.push_null();
        continue;
      }
      switch (schema[c].kind) {
        case ColumnKind::integer: {
          const auto value = parse_number<std::int64_t>(cell);
          if (!value) {
            throw ParseError(row, c, "'" + std::string{cell} + "' is not an integer");
          }
          column.push_integer(*value);
          break;
        }
        case ColumnKind::float64: {
          const auto value = parse_number<double>(cell);
          if (!value) {
            throw ParseError(row, c, "'" + std::string{cell} + "' is not a number");
          }
          column.push_double(*value);
          break;
        }
        case ColumnKind::timestamp: {
          const auto value = parse_timestamp(cell);
          if (!value) {
            throw ParseError(row, c, "'" + std::string{cell} + "' is not a timestamp");
          }
          column.push_integer(*value);
          break;
        }
        case ColumnKind::text:
          column.push_text(std::string{cell});
          break;
      }
    }
  }
  if (row == 0) {
    throw Error("empty input: no data rows");
  }
  return Dataset{std::move(columns)};
}

Dataset ingest_delimited(const std::filesystem::path& path, std::span<const ColumnSchema> schema,
                         const IngestOptions& options) {
  auto input = std::ifstream{path};
  if (!input) {
    throw Error("cannot open '" + path.string() + "'");
  }
  return parse_delimited(input, schema, options);
}

SortedIndexColumn argsort_dimension(const Dataset& dataset, DimensionId dim) {
  const auto n = dataset.row_count();
  auto order = std::vector<RowId>(n);
  std::iota(order.begin(), order.end(), RowId{0});
  const auto& sources = dataset.dimension(dim).sources;
  if (sources.size() == 1) {
    const auto& column = dataset.column(sources.front());
    std::stable_sort(order.begin(), order.end(), [&](RowId a, RowId b) { return column.compare(a, b) < 0; });
  } else {
    std::stable_sort(order.begin(), order.end(), [&](RowId a, RowId b) { return dataset.compare(dim, a, b) < 0; });
  }
  auto index = SortedIndexColumn{dim, std::vector<std::uint32_t>(n)};
  for (auto position = std::size_t{0}; position < n; ++position) {
    index.ranks[order[position]] = static_cast<std::uint32_t>(position);
  }
  return index;
}

void preprocess(Dataset& dataset, std::size_t threads) {
  const auto dim_count = dataset.dimensions().size();
  if (dim_count == 0) {
    throw Error("no dimensions declared");
  }
  auto indexes = std::vector<SortedIndexColumn>(dim_count);
  parallel_for(dim_count, threads,
               [&](std::size_t d) { indexes[d] = argsort_dimension(dataset, static_cast<DimensionId>(d)); });
  for (auto& index : indexes) {
    dataset.set_sorted_index(std::move(index));
  }
}

SchemaDocument parse_schema_document(const nlohmann::json& json) {
  auto doc = SchemaDocument{};
  if (json.contains("delimiter")) {
    const auto delimiter = json.at("delimiter").get<std::string>();
    if (delimiter == "\\t" || delimiter == "tab") {
      doc.ingest.delimiter = '\t';
    } else if (delimiter.size() == 1) {
      doc.ingest.delimiter = delimiter.front();
    } else {
      throw Error("delimiter must be a single character");
    }
  }
  doc.ingest.header = json.value("header", true);
  for (const auto& col : json.at("columns")) {
    doc.columns.push_back(ColumnSchema{col.at("name").get<std::string>(),
                                       column_kind_from_string(col.value("kind", std::string{"integer"})),
                                       col.value("nulls_first", true)});
  }
  if (json.contains("dimensions")) {
    for (const auto& dim : json.at("dimensions")) {
      if (dim.is_string()) {
        doc.dimensions.push_back({dim.get<std::string>()});
      } else {
        auto sources = dim.get<std::vector<std::string>>();
        if (sources.empty() || sources.size() > 2) {
          throw Error("a dimension is one column or a (primary, secondary) pair");
        }
        doc.dimensions.push_back(std::move(sources));
      }
    }
  } else {
    for (const auto& col : doc.columns) {
      if (col.kind != ColumnKind::text) {
        doc.dimensions.push_back({col.name});
      }
    }
  }
  if (json.contains("values")) {
    for (const auto& value : json.at("values")) {
      doc.values.emplace_back(value.at("column").get<std::string>(),
                              value_type_from_string(value.value("type", std::string{"float64"})));
    }
  }
  return doc;
}

void apply_schema_document(Dataset& dataset, const SchemaDocument& document) {
  for (const auto& sources : document.dimensions) {
    if (sources.size() == 1) {
      dataset.add_dimension(dataset.column_id(sources[0]));
    } else {
      dataset.add_composite(dataset.column_id(sources[0]), dataset.column_id(sources[1]));
    }
  }
  for (const auto& [name, type] : document.values) {
    dataset.add_value_column(dataset.column_id(name), type);
  }
}

}  // namespace divan
