#include <array>
#include <cstring>
#include <limits>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "divan/cpu_agg.hpp"
#include "divan/error.hpp"

namespace divan {

namespace {

namespace fs = std::filesystem;

constexpr auto kMagic = std::array<char, 4>{'D', 'V', 'C', 'B'};
constexpr auto kCubeVersion = std::uint32_t{1};
constexpr auto kManifestFile = "cubes.json";

enum class CellCode : std::uint8_t { count_i32 = 1, count_i64 = 2, sum_f32 = 3, sum_f64 = 4 };

template <typename T, typename Source>
void put_cells(detail::ByteWriter& writer, const std::vector<Source>& cells) {
  for (const auto cell : cells) {
    writer.put(static_cast<T>(cell));
  }
}

template <typename T, typename Target>
void get_cells(detail::ByteReader& reader, std::vector<Target>& cells, std::size_t count) {
  cells.resize(count);
  for (auto& cell : cells) {
    cell = static_cast<Target>(reader.get<T>());
  }
}

std::string cube_file_name(const Triple& triple) {
  return "cube_" + std::to_string(triple.dims[0]) + "_" + std::to_string(triple.dims[1]) + "_" +
         std::to_string(triple.dims[2]) + ".bin";
}

}  // namespace

void write_cube(const AggregateCube& cube, const fs::path& path) {
  auto code = CellCode::sum_f64;
  if (cube.is_count()) {
    const auto fits = std::all_of(cube.counts.begin(), cube.counts.end(), [](std::int64_t c) {
      return c >= 0 && c <= std::numeric_limits<std::int32_t>::max();
    });
    code = fits ? CellCode::count_i32 : CellCode::count_i64;
  } else if (cube.value_type == ValueType::float32) {
    code = CellCode::sum_f32;
  }

  auto writer = detail::ByteWriter{};
  for (const auto c : kMagic) {
    writer.put(c);
  }
  writer.put(kCubeVersion);
  for (const auto d : cube.triple.dims) {
    writer.put(static_cast<std::uint32_t>(d));
  }
  writer.put(cube.bins);
  writer.put(static_cast<std::uint8_t>(code));
  for (auto i = 0; i < 3; ++i) {
    writer.put(std::uint8_t{0});
  }
  switch (code) {
    case CellCode::count_i32:
      put_cells<std::int32_t>(writer, cube.counts);
      break;
    case CellCode::count_i64:
      put_cells<std::int64_t>(writer, cube.counts);
      break;
    case CellCode::sum_f32:
      put_cells<float>(writer, cube.sums);
      break;
    case CellCode::sum_f64:
      put_cells<double>(writer, cube.sums);
      break;
  }
  detail::write_file(path, writer.bytes());
}

AggregateCube read_cube(const fs::path& path) {
  const auto bytes = detail::read_file(path);
  auto reader = detail::ByteReader{bytes, path};
  for (const auto c : kMagic) {
    if (reader.get<char>() != c) {
      throw IntegrityError("'" + path.string() + "' is not a cube file");
    }
  }
  if (const auto version = reader.get<std::uint32_t>(); version != kCubeVersion) {
    throw IntegrityError("unsupported cube version " + std::to_string(version) + " in '" + path.string() + "'");
  }
  auto cube = AggregateCube{};
  for (auto& d : cube.triple.dims) {
    d = reader.get<std::uint32_t>();
  }
  cube.bins = reader.get<std::uint32_t>();
  const auto code = static_cast<CellCode>(reader.get<std::uint8_t>());
  for (auto i = 0; i < 3; ++i) {
    reader.get<std::uint8_t>();
  }
  const auto cells = cube.size();
  const auto cell_bytes = (code == CellCode::count_i32 || code == CellCode::sum_f32) ? 4 : 8;
  if (reader.rest().size() != cells * cell_bytes) {
    throw IntegrityError("'" + path.string() + "' does not hold " + std::to_string(cells) + " cells");
  }
  switch (code) {
    case CellCode::count_i32:
      cube.function = AggFunction::count;
      get_cells<std::int32_t>(reader, cube.counts, cells);
      break;
    case CellCode::count_i64:
      cube.function = AggFunction::count;
      get_cells<std::int64_t>(reader, cube.counts, cells);
      break;
    case CellCode::sum_f32:
      cube.function = AggFunction::sum;
      cube.value_type = ValueType::float32;
      get_cells<float>(reader, cube.sums, cells);
      break;
    case CellCode::sum_f64:
      cube.function = AggFunction::sum;
      cube.value_type = ValueType::float64;
      get_cells<double>(reader, cube.sums, cells);
      break;
    default:
      throw IntegrityError("unknown cell code in '" + path.string() + "'");
  }
  return cube;
}

void write_cube_dir(const fs::path& dir, const CubeSetInfo& info, std::span<const AggregateCube> cubes) {
  fs::create_directories(dir);
  auto files = nlohmann::json::array();
  for (const auto& cube : cubes) {
    const auto name = cube_file_name(cube.triple);
    write_cube(cube, dir / name);
    files.push_back({{"triple", cube.triple.dims}, {"file", name}});
  }
  const auto manifest = nlohmann::json{{"bins", info.bins},
                                       {"dim_ids", info.dim_ids},
                                       {"dim_names", info.dim_names},
                                       {"agg", info.agg},
                                       {"backend", info.backend},
                                       {"binned_dir", info.binned_dir.string()},
                                       {"cubes", files}};
  detail::write_text(dir / kManifestFile, manifest.dump(2));
}

CubeSet read_cube_dir(const fs::path& dir) {
  const auto path = dir / kManifestFile;
  if (!fs::exists(path)) {
    throw NotFound("no cube set in '" + dir.string() + "'");
  }
  const auto manifest = nlohmann::json::parse(detail::read_text(path));
  auto set = CubeSet{};
  set.info.bins = manifest.at("bins").get<std::uint32_t>();
  set.info.dim_ids = manifest.at("dim_ids").get<std::vector<DimensionId>>();
  set.info.dim_names = manifest.at("dim_names").get<std::vector<std::string>>();
  set.info.agg = manifest.at("agg").get<std::string>();
  set.info.backend = manifest.at("backend").get<std::string>();
  set.info.binned_dir = manifest.at("binned_dir").get<std::string>();
  for (const auto& entry : manifest.at("cubes")) {
    auto cube = read_cube(dir / entry.at("file").get<std::string>());
    if (cube.bins != set.info.bins) {
      throw IntegrityError("cube '" + entry.at("file").get<std::string>() + "' has the wrong bin count");
    }
    set.cubes.push_back(std::move(cube));
  }
  return set;
}

}  // namespace divan
