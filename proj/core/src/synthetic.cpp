#include "divan/synthetic.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "divan/error.hpp"

namespace divan {

Dataset make_uniform_dataset(std::size_t rows, std::uint32_t columns, std::uint64_t seed) {
  auto rng = std::mt19937_64{seed};
  auto draw = std::uniform_int_distribution<std::int64_t>{0, (std::int64_t{1} << 31) - 1};
  auto unit = std::uniform_real_distribution<double>{0.0, 100.0};
  auto data = std::vector<std::vector<std::int64_t>>(columns, std::vector<std::int64_t>(rows));
  auto v = std::vector<double>(rows);
  auto w = std::vector<double>(rows);
  for (auto r = std::size_t{0}; r < rows; ++r) {
    for (auto c = std::uint32_t{0}; c < columns; ++c) {
      data[c][r] = draw(rng);
    }
    v[r] = unit(rng);
    w[r] = static_cast<float>(unit(rng));
  }
  auto cols = std::vector<Column>{};
  for (auto c = std::uint32_t{0}; c < columns; ++c) {
    cols.emplace_back(ColumnSchema{"d" + std::to_string(c), ColumnKind::integer, true});
    cols.back().assign(std::move(data[c]), {});
  }
  cols.emplace_back(ColumnSchema{"v", ColumnKind::float64, true});
  cols.back().assign(std::move(v), {});
  cols.emplace_back(ColumnSchema{"w", ColumnKind::float64, true});
  cols.back().assign(std::move(w), {});

  auto dataset = Dataset{std::move(cols)};
  for (auto c = ColumnId{0}; c < columns; ++c) {
    dataset.add_dimension(c);
  }
  dataset.add_value_column(columns, ValueType::float64);
  dataset.add_value_column(columns + 1, ValueType::float32);
  return dataset;
}

Dataset make_taxi_dataset(std::size_t rows, std::uint64_t seed) {
  auto rng = std::mt19937_64{seed};
  // 2019-01-01 00:00:00 UTC, one year of pickups.
  constexpr auto kStart = std::int64_t{1546300800};
  constexpr auto kYear = std::int64_t{365} * 86400;
  auto pickup_dist = std::uniform_int_distribution<std::int64_t>{0, kYear - 1};
  auto distance_dist = std::lognormal_distribution<double>{0.6, 0.8};
  auto noise = std::normal_distribution<double>{0.0, 1.5};
  auto passengers = std::discrete_distribution<int>{{0.02, 0.70, 0.14, 0.05, 0.03, 0.04, 0.02}};
  auto tipped = std::bernoulli_distribution{0.7};
  auto tip_rate = std::uniform_real_distribution<double>{0.10, 0.30};
  auto zone = std::uniform_int_distribution<std::int64_t>{1, 263};

  auto pickup = std::vector<std::int64_t>(rows);
  auto dropoff = std::vector<std::int64_t>(rows);
  auto count = std::vector<std::int64_t>(rows);
  auto distance = std::vector<double>(rows);
  auto fare = std::vector<double>(rows);
  auto tip = std::vector<double>(rows);
  auto pu = std::vector<std::int64_t>(rows);
  auto dz = std::vector<std::int64_t>(rows);
  for (auto r = std::size_t{0}; r < rows; ++r) {
    pickup[r] = kStart + pickup_dist(rng);
    distance[r] = std::round(std::min(distance_dist(rng), 60.0) * 100.0) / 100.0;
    const auto minutes = 3.0 + distance[r] * 3.5 + std::abs(noise(rng)) * 2.0;
    dropoff[r] = pickup[r] + static_cast<std::int64_t>(minutes * 60.0);
    count[r] = passengers(rng);
    fare[r] = static_cast<float>(std::round((2.5 + 2.5 * distance[r] + std::abs(noise(rng))) * 100.0) / 100.0);
    const auto rate = tip_rate(rng);
    tip[r] = tipped(rng) ? std::round(fare[r] * rate * 100.0) / 100.0 : 0.0;
    pu[r] = zone(rng);
    dz[r] = zone(rng);
  }

  auto cols = std::vector<Column>{};
  const auto add = [&](const char* name, ColumnKind kind, auto values) {
    cols.emplace_back(ColumnSchema{name, kind, true});
    cols.back().assign(std::move(values), {});
  };
  add("pickup_time", ColumnKind::timestamp, std::move(pickup));
  add("dropoff_time", ColumnKind::timestamp, std::move(dropoff));
  add("passenger_count", ColumnKind::integer, std::move(count));
  add("trip_distance", ColumnKind::float64, std::move(distance));
  add("fare_amount", ColumnKind::float64, std::move(fare));
  add("tip_amount", ColumnKind::float64, std::move(tip));
  add("pu_zone", ColumnKind::integer, std::move(pu));
  add("do_zone", ColumnKind::integer, std::move(dz));

  auto dataset = Dataset{std::move(cols)};
  for (auto c = ColumnId{0}; c < 8; ++c) {
    dataset.add_dimension(c);
  }
  dataset.add_value_column(4, ValueType::float32);
  dataset.add_value_column(3, ValueType::float64);
  return dataset;
}

nlohmann::json taxi_schema_json() {
  return {{"delimiter", ","},
          {"header", true},
          {"columns",
           {{{"name", "pickup_time"}, {"kind", "timestamp"}},
            {{"name", "dropoff_time"}, {"kind", "timestamp"}},
            {{"name", "passenger_count"}, {"kind", "integer"}},
            {{"name", "trip_distance"}, {"kind", "float64"}},
            {{"name", "fare_amount"}, {"kind", "float64"}},
            {{"name", "tip_amount"}, {"kind", "float64"}},
            {{"name", "pu_zone"}, {"kind", "integer"}},
            {{"name", "do_zone"}, {"kind", "integer"}}}},
          {"values", {{{"column", "fare_amount"}, {"type", "float32"}}, {{"column", "trip_distance"}, {"type", "float64"}}}}};
}

namespace {

std::string format_timestamp(std::int64_t seconds) {
  const auto days = std::chrono::floor<std::chrono::days>(std::chrono::sys_seconds{std::chrono::seconds{seconds}});
  const auto date = std::chrono::year_month_day{days};
  const auto clock = seconds - std::int64_t{days.time_since_epoch().count()} * 86400;
  char text[64];
  std::snprintf(text, sizeof(text), "%04d-%02u-%02u %02lld:%02lld:%02lld", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()),
                static_cast<long long>(clock / 3600), static_cast<long long>(clock / 60 % 60),
                static_cast<long long>(clock % 60));
  return text;
}

std::string format_cell(const Column& column, RowId row) {
  if (column.is_null(row)) {
    return {};
  }
  switch (column.schema().kind) {
    case ColumnKind::integer:
      return std::to_string(column.integers()[row]);
    case ColumnKind::timestamp:
      return format_timestamp(column.integers()[row]);
    case ColumnKind::float64: {
      char text[64];
      const auto [end, ec] = std::to_chars(text, text + sizeof(text), column.doubles()[row]);
      return std::string{text, end};
    }
    case ColumnKind::text:
      return column.texts()[row];
  }
  return {};
}

}  // namespace

void write_csv(const Dataset& dataset, const std::filesystem::path& path, char delimiter) {
  auto out = std::ofstream{path};
  if (!out) {
    throw Error("cannot write '" + path.string() + "'");
  }
  const auto& columns = dataset.columns();
  for (auto c = std::size_t{0}; c < columns.size(); ++c) {
    out << (c ? std::string{delimiter} : std::string{}) << columns[c].schema().name;
  }
  out << '\n';
  for (auto r = RowId{0}; r < dataset.row_count(); ++r) {
    for (auto c = std::size_t{0}; c < columns.size(); ++c) {
      if (c) {
        out << delimiter;
      }
      out << format_cell(columns[c], r);
    }
    out << '\n';
  }
  if (!out) {
    throw Error("short write to '" + path.string() + "'");
  }
}

}  // namespace divan
