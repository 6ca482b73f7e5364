#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "divan/cpu_agg.hpp"
#include "divan/dataset.hpp"

namespace divan::testing {

// A scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static auto counter = 0;
    auto rng = std::random_device{};
    path_ = std::filesystem::temp_directory_path() /
            ("divan-" + tag + "-" + std::to_string(rng()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    auto ec = std::error_code{};
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Integer columns c0.., each also declared as a dimension.
inline Dataset integer_dataset(const std::vector<std::vector<std::int64_t>>& columns) {
  auto cols = std::vector<Column>{};
  for (auto c = std::size_t{0}; c < columns.size(); ++c) {
    cols.emplace_back(ColumnSchema{"c" + std::to_string(c), ColumnKind::integer, true});
    cols.back().assign(columns[c], {});
  }
  auto dataset = Dataset{std::move(cols)};
  for (auto c = ColumnId{0}; c < columns.size(); ++c) {
    dataset.add_dimension(c);
  }
  return dataset;
}

// Independent uniform bins per dimension plus uniform values in [0, 100).
inline BinnedTable random_table(std::size_t rows, std::uint32_t dims, std::uint32_t bins, std::uint64_t seed,
                                bool float32_values = false) {
  auto rng = std::mt19937_64{seed};
  auto bin = std::uniform_int_distribution<std::uint32_t>{0, bins - 1};
  auto value = std::uniform_real_distribution<double>{0.0, 100.0};
  auto table = BinnedTable{};
  table.bins = bins;
  table.columns.assign(dims, std::vector<BinIndex>(rows));
  table.values.resize(rows);
  for (auto r = std::size_t{0}; r < rows; ++r) {
    for (auto d = std::uint32_t{0}; d < dims; ++d) {
      table.columns[d][r] = static_cast<BinIndex>(bin(rng));
    }
    const auto v = value(rng);
    table.values[r] = float32_values ? static_cast<double>(static_cast<float>(v)) : v;
  }
  return table;
}

// Plain triple loop over rows: the oracle every backend is checked against.
inline std::vector<double> oracle_cube(const BinnedTable& table, const Triple& t, bool count) {
  const auto b = std::size_t{table.bins};
  auto cells = std::vector<double>(b * b * b, 0.0);
  for (auto r = std::size_t{0}; r < table.rows(); ++r) {
    const auto cell = (table.columns[t[0]][r] * b + table.columns[t[1]][r]) * b + table.columns[t[2]][r];
    cells[cell] += count ? 1.0 : table.values[r];
  }
  return cells;
}

}  // namespace divan::testing
