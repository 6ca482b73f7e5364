#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "divan/dataset.hpp"

namespace divan {

namespace {

constexpr auto kFormatName = "divan-dataset";
constexpr auto kFormatVersion = 1;
constexpr auto kHeaderFile = "header.json";

namespace fs = std::filesystem;
using detail::read_array;
using detail::write_array;

std::optional<std::uint32_t> expected(const nlohmann::json& entry, const char* key, bool verify) {
  if (!verify) {
    return std::nullopt;
  }
  return entry.at(key).get<std::uint32_t>();
}

}  // namespace

void save_preprocessed(const Dataset& dataset, const fs::path& dir) {
  if (!dataset.preprocessed()) {
    throw NotPreprocessedError("dataset must be preprocessed before it is saved");
  }
  fs::create_directories(dir);

  auto header = nlohmann::json{{"format", kFormatName},
                               {"version", kFormatVersion},
                               {"row_count", dataset.row_count()},
                               {"columns", nlohmann::json::array()},
                               {"dimensions", nlohmann::json::array()},
                               {"values", nlohmann::json::array()}};

  for (auto c = std::size_t{0}; c < dataset.columns().size(); ++c) {
    const auto& column = dataset.columns()[c];
    const auto stem = "col_" + std::to_string(c);
    auto entry = nlohmann::json{{"name", column.schema().name},
                                {"kind", to_string(column.schema().kind)},
                                {"nulls_first", column.schema().nulls_first},
                                {"file", stem + ".bin"}};
    switch (column.schema().kind) {
      case ColumnKind::integer:
      case ColumnKind::timestamp:
        entry["crc32"] = write_array(dir / (stem + ".bin"), column.integers());
        break;
      case ColumnKind::float64:
        entry["crc32"] = write_array(dir / (stem + ".bin"), column.doubles());
        break;
      case ColumnKind::text: {
        auto offsets = std::vector<std::uint64_t>{0};
        auto blob = std::vector<char>{};
        for (const auto& text : column.texts()) {
          blob.insert(blob.end(), text.begin(), text.end());
          offsets.push_back(blob.size());
        }
        entry["crc32"] = write_array(dir / (stem + ".bin"), blob);
        entry["offsets_file"] = stem + ".offsets";
        entry["offsets_crc32"] = write_array(dir / (stem + ".offsets"), offsets);
        break;
      }
    }
    if (column.has_nulls()) {
      entry["nulls_file"] = stem + ".nulls";
      entry["nulls_crc32"] = write_array(dir / (stem + ".nulls"), column.null_mask());
    }
    header["columns"].push_back(std::move(entry));
  }

  for (const auto& dim : dataset.dimensions()) {
    const auto file = "ranks_" + std::to_string(dim.id) + ".bin";
    const auto crc = write_array(dir / file, dataset.sorted_index(dim.id).ranks);
    header["dimensions"].push_back(
        {{"id", dim.id}, {"name", dim.name}, {"sources", dim.sources}, {"ranks_file", file}, {"crc32", crc}});
  }
  for (const auto& value : dataset.value_columns()) {
    header["values"].push_back({{"column", value.column}, {"type", to_string(value.type)}});
  }
  detail::write_text(dir / kHeaderFile, header.dump(2));
}

Dataset load_preprocessed(const fs::path& dir, bool verify_checksums) {
  const auto header_path = dir / kHeaderFile;
  if (!fs::exists(header_path)) {
    throw NotPreprocessedError("'" + dir.string() + "' is not a preprocessed dataset directory");
  }
  const auto header = nlohmann::json::parse(detail::read_text(header_path));
  if (header.value("format", std::string{}) != kFormatName) {
    throw IntegrityError("'" + header_path.string() + "' is not a dataset header");
  }
  if (header.at("version").get<int>() != kFormatVersion) {
    throw IntegrityError("unsupported dataset layout version " + header.at("version").dump() + " (expected " +
                         std::to_string(kFormatVersion) + ")");
  }
  const auto rows = header.at("row_count").get<std::size_t>();

  auto columns = std::vector<Column>{};
  for (const auto& entry : header.at("columns")) {
    auto column = Column{ColumnSchema{entry.at("name").get<std::string>(),
                                      column_kind_from_string(entry.at("kind").get<std::string>()),
                                      entry.at("nulls_first").get<bool>()}};
    auto nulls = std::vector<std::uint8_t>{};
    if (entry.contains("nulls_file")) {
      nulls = read_array<std::uint8_t>(dir / entry.at("nulls_file").get<std::string>(),
                                       expected(entry, "nulls_crc32", verify_checksums));
    }
    const auto path = dir / entry.at("file").get<std::string>();
    switch (column.schema().kind) {
      case ColumnKind::integer:
      case ColumnKind::timestamp:
        column.assign(read_array<std::int64_t>(path, expected(entry, "crc32", verify_checksums)), std::move(nulls));
        break;
      case ColumnKind::float64:
        column.assign(read_array<double>(path, expected(entry, "crc32", verify_checksums)), std::move(nulls));
        break;
      case ColumnKind::text: {
        const auto blob = read_array<char>(path, expected(entry, "crc32", verify_checksums));
        const auto offsets = read_array<std::uint64_t>(dir / entry.at("offsets_file").get<std::string>(),
                                                       expected(entry, "offsets_crc32", verify_checksums));
        if (offsets.empty() || offsets.back() != blob.size()) {
          throw IntegrityError("text offsets of column '" + column.schema().name + "' are inconsistent");
        }
        auto texts = std::vector<std::string>{};
        texts.reserve(offsets.size() - 1);
        for (auto i = std::size_t{0}; i + 1 < offsets.size(); ++i) {
          texts.emplace_back(blob.begin() + static_cast<std::ptrdiff_t>(offsets[i]),
                             blob.begin() + static_cast<std::ptrdiff_t>(offsets[i + 1]));
        }
        column.assign(std::move(texts), std::move(nulls));
        break;
      }
    }
    if (column.size() != rows || (column.has_nulls() && column.null_mask().size() != rows)) {
      throw IntegrityError("column '" + column.schema().name + "' does not have " + std::to_string(rows) + " rows");
    }
    columns.push_back(std::move(column));
  }

  auto dataset = Dataset{std::move(columns)};
  for (const auto& entry : header.at("dimensions")) {
    const auto sources = entry.at("sources").get<std::vector<ColumnId>>();
    const auto name = entry.at("name").get<std::string>();
    const auto id = sources.size() == 1 ? dataset.add_dimension(sources[0], name)
                                        : dataset.add_composite(sources.at(0), sources.at(1), name);
    if (id != entry.at("id").get<DimensionId>()) {
      throw IntegrityError("dimension ids in header are not contiguous");
    }
    auto ranks = read_array<std::uint32_t>(dir / entry.at("ranks_file").get<std::string>(),
                                           expected(entry, "crc32", verify_checksums));
    if (ranks.size() != rows) {
      throw IntegrityError("sorted index of dimension " + std::to_string(id) + " has the wrong length");
    }
    dataset.set_sorted_index(SortedIndexColumn{id, std::move(ranks)});
  }
  for (const auto& entry : header.at("values")) {
    dataset.add_value_column(entry.at("column").get<ColumnId>(),
                             value_type_from_string(entry.at("type").get<std::string>()));
  }
  if (!dataset.preprocessed()) {
    throw NotPreprocessedError("'" + dir.string() + "' has no sorted indexes");
  }
  return dataset;
}

std::uint64_t dataset_fingerprint(const fs::path& dir) {
  const auto path = dir / kHeaderFile;
  if (!fs::exists(path)) {
    throw NotPreprocessedError("'" + dir.string() + "' is not a preprocessed dataset directory");
  }
  return fnv1a64(detail::read_text(path));
}

}  // namespace divan
