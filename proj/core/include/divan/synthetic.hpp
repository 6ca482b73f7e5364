#pragma once

#include <cstdint>
#include <filesystem>

#include <nlohmann/json_fwd.hpp>

#include "divan/dataset.hpp"

namespace divan {

/// `columns` independent uniform integer columns d0..d{columns-1}, each a dimension, plus a float64
/// value column "v" declared float64 and its float32 twin "w".
Dataset make_uniform_dataset(std::size_t rows, std::uint32_t columns, std::uint64_t seed);

/// Eight taxi-trip-like columns: pickup_time, dropoff_time, passenger_count, trip_distance,
/// fare_amount, tip_amount (30% exact zeros), pu_zone, do_zone. All eight are dimensions;
/// fare_amount is a float32 value column and trip_distance a float64 one.
Dataset make_taxi_dataset(std::size_t rows, std::uint64_t seed);

// Schema document matching make_taxi_dataset's CSV output.
nlohmann::json taxi_schema_json();

// Header row plus one line per row; timestamps as "YYYY-MM-DD HH:MM:SS", nulls as empty cells.
void write_csv(const Dataset& dataset, const std::filesystem::path& path, char delimiter = ',');

}  // namespace divan
