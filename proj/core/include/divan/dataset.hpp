#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace divan {

using ColumnId = std::uint32_t;
using DimensionId = std::uint32_t;
using RowId = std::uint32_t;

enum class ColumnKind { integer, float64, text, timestamp };

std::string_view to_string(ColumnKind kind);
ColumnKind column_kind_from_string(std::string_view name);

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::integer;
  bool nulls_first = true;
};

// std::monostate is SQL NULL. Timestamps are epoch seconds and live in the int64 alternative.
using Value = std::variant<std::monostate, std::int64_t, double, std::string>;

// One component per dimension source column (two for composite dimensions).
using DimKey = std::vector<Value>;

int compare_values(const Value& lhs, const Value& rhs, bool nulls_first);
nlohmann::json value_to_json(const Value& value);
nlohmann::json key_to_json(const DimKey& key);

// Parses "YYYY-MM-DD", "YYYY-MM-DD HH:MM[:SS]", the same with a 'T' separator, or a plain integer.
std::optional<std::int64_t> parse_timestamp(std::string_view text);

class Column {
 public:
  Column() = default;
  explicit Column(ColumnSchema schema);

  const ColumnSchema& schema() const { return schema_; }
  std::size_t size() const { return size_; }
  bool has_nulls() const { return !nulls_.empty(); }
  bool is_null(RowId row) const { return !nulls_.empty() && nulls_[row] != 0; }

  Value value(RowId row) const;
  // Numeric view for aggregation; nullopt for NULL. Throws for text columns.
  std::optional<double> numeric(RowId row) const;

  // Three-way compare of two rows in this column's order (NULLs first unless the schema says otherwise).
  int compare(RowId lhs, RowId rhs) const;

  void push_null();
  void push_integer(std::int64_t value);
  void push_double(double value);
  void push_text(std::string value);
  // Appends a cell of the right kind; throws Error on kind mismatch.
  void push(const Value& value);

  const std::vector<std::int64_t>& integers() const { return integers_; }
  const std::vector<double>& doubles() const { return doubles_; }
  const std::vector<std::string>& texts() const { return texts_; }
  const std::vector<std::uint8_t>& null_mask() const { return nulls_; }

  // Bulk setters used by the on-disk loader.
  void assign(std::vector<std::int64_t> values, std::vector<std::uint8_t> nulls);
  void assign(std::vector<double> values, std::vector<std::uint8_t> nulls);
  void assign(std::vector<std::string> values, std::vector<std::uint8_t> nulls);

 private:
  void mark_null(bool null);

  ColumnSchema schema_;
  std::size_t size_ = 0;
  std::vector<std::int64_t> integers_;
  std::vector<double> doubles_;
  std::vector<std::string> texts_;
  std::vector<std::uint8_t> nulls_;
};

struct DimensionSpec {
  DimensionId id = 0;
  std::string name;
  // One column, or (primary, secondary) compared lexicographically.
  std::vector<ColumnId> sources;

  bool composite() const { return sources.size() == 2; }
};

struct SortedIndexColumn {
  DimensionId dim = 0;
  // ranks[row] = position of the row in the dimension's stable sort order.
  std::vector<std::uint32_t> ranks;
};

// Element width of an aggregate-value column as it travels to the aggregation backends.
enum class ValueType { int32, float32, float64 };

std::string_view to_string(ValueType type);
ValueType value_type_from_string(std::string_view name);
std::size_t value_bytes(ValueType type);

struct ValueColumnSpec {
  ColumnId column = 0;
  ValueType type = ValueType::float64;
};

class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Column> columns);

  std::size_t row_count() const { return row_count_; }

  const std::vector<Column>& columns() const { return columns_; }
  const Column& column(ColumnId id) const;
  std::optional<ColumnId> find_column(std::string_view name) const;
  ColumnId column_id(std::string_view name) const;

  const std::vector<DimensionSpec>& dimensions() const { return dims_; }
  const DimensionSpec& dimension(DimensionId id) const;
  std::optional<DimensionId> find_dimension(std::string_view name) const;
  DimensionId add_dimension(ColumnId source, std::string name = {});
  DimensionId add_composite(ColumnId primary, ColumnId secondary, std::string name = {});

  int compare(DimensionId dim, RowId lhs, RowId rhs) const;
  DimKey key(DimensionId dim, RowId row) const;
  int compare_keys(DimensionId dim, const DimKey& lhs, const DimKey& rhs) const;

  const std::vector<ValueColumnSpec>& value_columns() const { return values_; }
  void add_value_column(ColumnId column, ValueType type);
  std::optional<ValueColumnSpec> find_value_column(ColumnId column) const;

  bool preprocessed() const;
  const SortedIndexColumn& sorted_index(DimensionId dim) const;
  void set_sorted_index(SortedIndexColumn index);

  // Numeric values of `column` for the given rows; NULL contributes 0.
  std::vector<double> gather_values(ColumnId column, std::span<const RowId> rows) const;

 private:
  std::vector<Column> columns_;
  std::size_t row_count_ = 0;
  std::vector<DimensionSpec> dims_;
  std::vector<std::optional<SortedIndexColumn>> sorted_;
  std::vector<ValueColumnSpec> values_;
};

/// Appends a lexicographic (primary, secondary) dimension and returns its spec.
DimensionSpec make_composite(Dataset& dataset, ColumnId primary, ColumnId secondary);

struct IngestOptions {
  char delimiter = ',';
  bool header = true;
  std::vector<std::string> null_tokens = {"", "NA", "NULL", "null"};
};

Dataset parse_delimited(std::istream& input, std::span<const ColumnSchema> schema, const IngestOptions& options = {});
Dataset ingest_delimited(const std::filesystem::path& path, std::span<const ColumnSchema> schema,
                         const IngestOptions& options = {});

// Stable argsort of one dimension: ties keep row order.
SortedIndexColumn argsort_dimension(const Dataset& dataset, DimensionId dim);

// Argsorts every declared dimension (dimensions in parallel).
void preprocess(Dataset& dataset, std::size_t threads = 0);

void save_preprocessed(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_preprocessed(const std::filesystem::path& dir, bool verify_checksums = true);

// Checksum of the dataset header file; changes whenever any column or rank file changes.
std::uint64_t dataset_fingerprint(const std::filesystem::path& dir);

// The schema JSON accepted by `divan preprocess`:
//   {"delimiter": ",", "columns": [{"name": "a", "kind": "integer", "nulls_first": true}, ...],
//    "dimensions": ["a", ["tip", "pickup"]], "values": [{"column": "fare", "type": "float32"}]}
// "dimensions" defaults to one dimension per non-text column.
struct SchemaDocument {
  std::vector<ColumnSchema> columns;
  std::vector<std::vector<std::string>> dimensions;
  std::vector<std::pair<std::string, ValueType>> values;
  IngestOptions ingest;
};

SchemaDocument parse_schema_document(const nlohmann::json& json);
void apply_schema_document(Dataset& dataset, const SchemaDocument& document);

}  // namespace divan
