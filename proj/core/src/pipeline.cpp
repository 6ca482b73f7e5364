#include "divan/pipeline.hpp"

#include <algorithm>
#include <array>
#include <mutex>
#include <set>

#include "binary_io.hpp"
#include "divan/checksum.hpp"
#include "divan/error.hpp"
#include "divan/filter.hpp"
#include "divan/rank.hpp"
#include "divan/thread_pool.hpp"
#include "divan/viz.hpp"

namespace divan {

namespace fs = std::filesystem;

namespace {

constexpr auto kBinnedFile = "binned.json";
constexpr auto kManifestFile = "manifest.json";
constexpr auto kStatsFile = "stats.json";
constexpr auto kRequestFile = "request.json";

const auto kBinPolicy = std::array<std::uint32_t, 4>{32, 64, 128, 256};

nlohmann::json read_json(const fs::path& path) { return nlohmann::json::parse(detail::read_text(path)); }

// Readers never see a half-written file.
void write_json_atomic(const fs::path& path, const nlohmann::json& json) {
  auto tmp = path;
  tmp += ".tmp";
  detail::write_text(tmp, json.dump(2));
  fs::rename(tmp, path);
}

fs::path bins_file(const fs::path& dir, std::size_t index) { return dir / ("bins_" + std::to_string(index) + ".bin"); }

}  // namespace

BinningMode binning_mode_from_string(const std::string& text) {
  if (text == "auto") {
    return BinningMode::automatic;
  }
  if (text == "exact") {
    return BinningMode::exact;
  }
  if (text == "approx") {
    return BinningMode::approximate;
  }
  throw Error("unknown binning mode '" + text + "' (expected auto, exact or approx)");
}

fs::path bounds_file(const fs::path& binned_dir, DimensionId dim) {
  return binned_dir / ("bounds_" + std::to_string(dim) + ".json");
}

BinnedSet bin_stage(const Dataset& dataset, const fs::path& dataset_dir, const std::vector<DimensionId>& dims,
                    const std::vector<RowId>& rows, std::uint32_t bins, BinningMode mode, const fs::path& out_dir,
                    std::size_t threads) {
  if (dims.size() < 3) {
    throw Error("need at least 3 dimensions, got " + std::to_string(dims.size()));
  }
  auto set = BinnedSet{fs::absolute(dataset_dir), bins, dims, {}, rows, {}};
  set.table.bins = bins;
  set.table.columns.resize(dims.size());
  for (const auto dim : dims) {
    set.dim_names.push_back(dataset.dimension(dim).name);
  }
  parallel_for(dims.size(), threads, [&](std::size_t i) {
    set.table.columns[i] = bin_dimension(dataset, dims[i], rows, bins, mode).values;
  });
  write_binned(set, dataset, out_dir, threads);
  return set;
}

void write_binned(const BinnedSet& set, const Dataset& dataset, const fs::path& out_dir, std::size_t threads) {
  const auto& dims = set.dim_ids;
  if (set.table.columns.size() != dims.size() || set.dim_names.size() != dims.size()) {
    throw Error("binned set is inconsistent");
  }
  fs::create_directories(out_dir);
  auto bounds = std::vector<nlohmann::json>(dims.size());
  parallel_for(dims.size(), threads, [&](std::size_t i) {
    const auto column = BinnedColumn{dims[i], set.bins, set.table.columns[i]};
    bounds[i] = boundaries_to_json(bin_boundaries(dataset, dims[i], set.rows, column), dataset);
  });

  auto info = nlohmann::json{{"format", "divan-binned"},
                             {"version", 1},
                             {"dataset", fs::weakly_canonical(fs::absolute(set.dataset_dir)).string()},
                             {"bins", set.bins},
                             {"rows", set.rows.size()},
                             {"dims", nlohmann::json::array()}};
  detail::write_array(out_dir / "rows.bin", set.rows);
  for (auto i = std::size_t{0}; i < dims.size(); ++i) {
    const auto& column = set.table.columns[i];
    if (set.bins <= 256) {
      auto narrow = std::vector<std::uint8_t>(column.begin(), column.end());
      detail::write_array(bins_file(out_dir, i), narrow);
    } else {
      detail::write_array(bins_file(out_dir, i), column);
    }
    write_json_atomic(bounds_file(out_dir, dims[i]), bounds[i]);
    info["dims"].push_back({{"index", i}, {"id", dims[i]}, {"name", set.dim_names[i]}});
  }
  write_json_atomic(out_dir / kBinnedFile, info);
}

BinnedSet read_binned(const fs::path& dir) {
  if (!fs::exists(dir / kBinnedFile)) {
    throw NotFound("'" + dir.string() + "' holds no binned columns");
  }
  const auto info = read_json(dir / kBinnedFile);
  auto set = BinnedSet{};
  set.dataset_dir = info.at("dataset").get<std::string>();
  set.bins = info.at("bins").get<std::uint32_t>();
  set.rows = detail::read_array<RowId>(dir / "rows.bin", std::nullopt);
  set.table.bins = set.bins;
  for (const auto& dim : info.at("dims")) {
    const auto index = dim.at("index").get<std::size_t>();
    set.dim_ids.push_back(dim.at("id").get<DimensionId>());
    set.dim_names.push_back(dim.at("name").get<std::string>());
    auto column = std::vector<BinIndex>{};
    if (set.bins <= 256) {
      const auto narrow = detail::read_array<std::uint8_t>(bins_file(dir, index), std::nullopt);
      column.assign(narrow.begin(), narrow.end());
    } else {
      column = detail::read_array<BinIndex>(bins_file(dir, index), std::nullopt);
    }
    if (column.size() != set.rows.size()) {
      throw IntegrityError("binned column " + std::to_string(index) + " does not match the row subset");
    }
    set.table.columns.push_back(std::move(column));
  }
  return set;
}

AggSpec resolve_agg(const Dataset& dataset, const std::string& text) {
  if (text == "count") {
    return AggSpec::count();
  }
  if (!text.starts_with("sum:")) {
    throw Error("aggregate must be 'count' or 'sum:<column>', got '" + text + "'");
  }
  const auto column = dataset.column_id(text.substr(4));
  if (const auto declared = dataset.find_value_column(column)) {
    return AggSpec::sum(column, declared->type);
  }
  switch (dataset.column(column).schema().kind) {
    case ColumnKind::integer:
    case ColumnKind::timestamp:
      return AggSpec::sum(column, ValueType::int32);
    case ColumnKind::float64:
      return AggSpec::sum(column, ValueType::float64);
    case ColumnKind::text:
      break;
  }
  throw Error("cannot sum text column '" + text.substr(4) + "'");
}

std::string agg_to_string(const Dataset& dataset, const AggSpec& spec) {
  if (spec.function == AggFunction::count) {
    return "count";
  }
  return "sum:" + dataset.column(*spec.value_column).schema().name;
}

void attach_values(BinnedSet& set, const Dataset& dataset, const AggSpec& spec) {
  spec.validate();
  if (spec.function == AggFunction::count) {
    set.table.values.clear();
    return;
  }
  set.table.values = dataset.gather_values(*spec.value_column, set.rows);
  if (spec.value_type == ValueType::float32) {
    for (auto& v : set.table.values) {
      v = static_cast<float>(v);
    }
  }
}

AggregateOutput aggregate_stage(const BinnedTable& table, const AggSpec& spec, const BackendOptions& options) {
  auto out = AggregateOutput{};
  if (options.backend == "cpu") {
    const auto triples = enumerate_triples(table.dims());
    out.partitions = options.partitions;
    if (out.partitions == 0) {
      const auto candidates = std::array<std::uint32_t, 3>{1, 2, 4};
      out.partitions = autotune_partitions(table, spec, triples.front(), candidates);
    }
    out.cubes = aggregate_scan_major(table, spec, triples, out.partitions, options.threads);
    return out;
  }
  if (options.backend == "pim-sim") {
    auto config = options.pim;
    config.host_threads = options.threads;
    auto result = run_pim(table, spec, config);
    out.cubes = std::move(result.cubes);
    out.stats = std::move(result.stats);
    return out;
  }
  throw Error("unknown backend '" + options.backend + "' (expected cpu or pim-sim)");
}

nlohmann::json render_stage(const CubeSet& cubes, std::uint32_t k, const fs::path& gallery_dir,
                            const std::string& id_prefix, std::size_t threads) {
  const auto& info = cubes.info;
  fs::create_directories(gallery_dir / "images");
  const auto dim_id = [&](DimIndex index) { return info.dim_ids.at(index); };
  const auto dim_name = [&](DimIndex index) { return info.dim_names.at(index); };
  // Relative to the gallery so a job directory can be moved as a whole.
  const auto bounds_ref = [&](DimIndex index) {
    return fs::proximate(bounds_file(info.binned_dir, dim_id(index)), gallery_dir).generic_string();
  };

  auto per_cube = std::vector<std::vector<nlohmann::json>>(cubes.cubes.size());
  parallel_for(cubes.cubes.size(), threads, [&](std::size_t c) {
    for (const auto& image : image_group(cubes.cubes[c], k)) {
      const auto& s = image.spec;
      const auto id = id_prefix + s.name();
      const auto ids = nlohmann::json{{"x", dim_id(s.x_dim)}, {"y", dim_id(s.y_dim)}, {"z", dim_id(s.z_dim)}};
      const auto bounds = nlohmann::json{{"x", bounds_ref(s.x_dim)}, {"y", bounds_ref(s.y_dim)}};
      encode_image(image, gallery_dir / "images" / id, {{"id", id}, {"dim_ids", ids}, {"bounds", bounds}});
      per_cube[c].push_back({{"id", id},
                             {"file", "images/" + id + ".png"},
                             {"sidecar", "images/" + id + ".json"},
                             {"triple", {dim_id(s.triple[0]), dim_id(s.triple[1]), dim_id(s.triple[2])}},
                             {"x_dim", dim_id(s.x_dim)},
                             {"y_dim", dim_id(s.y_dim)},
                             {"z_dim", dim_id(s.z_dim)},
                             {"x_name", dim_name(s.x_dim)},
                             {"y_name", dim_name(s.y_dim)},
                             {"z_name", dim_name(s.z_dim)},
                             {"z_range", {s.z_lo, s.z_hi}},
                             {"group", {dim_id(s.x_dim), dim_id(s.y_dim)}},
                             {"score", score(image)},
                             {"degenerate", image.degenerate},
                             {"expected", image.expected},
                             {"total", image.total},
                             {"pos", {{"triple", s.triple.dims}, {"x", s.x_dim}, {"y", s.y_dim}, {"z", s.z_dim}}},
                             {"rank", nullptr}});
    }
  });

  auto images = nlohmann::json::array();
  for (auto& entries : per_cube) {
    for (auto& entry : entries) {
      images.push_back(std::move(entry));
    }
  }
  auto dims = nlohmann::json::array();
  for (auto i = DimIndex{0}; i < info.dim_ids.size(); ++i) {
    dims.push_back({{"index", i}, {"id", dim_id(i)}, {"name", dim_name(i)}, {"bounds", bounds_ref(i)}});
  }
  auto manifest = nlohmann::json{{"format", "divan-manifest"},
                                 {"version", 1},
                                 {"bins", info.bins},
                                 {"k", k},
                                 {"agg", info.agg},
                                 {"backend", info.backend},
                                 {"dims", dims},
                                 {"image_count", images.size()},
                                 {"images", std::move(images)},
                                 {"groups", nlohmann::json::array()},
                                 {"ranking", nlohmann::json::array()}};
  write_json_atomic(gallery_dir / kManifestFile, manifest);
  return manifest;
}

nlohmann::json rank_stage(const fs::path& gallery_dir, const RankOptions& options) {
  auto manifest = read_json(gallery_dir / kManifestFile);
  auto& entries = manifest.at("images");
  auto images = std::vector<ScoredImage>{};
  images.reserve(entries.size());
  for (const auto& e : entries) {
    const auto& pos = e.at("pos");
    const auto t = pos.at("triple").get<std::array<DimIndex, 3>>();
    images.push_back(ScoredImage{e.at("id").get<std::string>(), Triple{t}, pos.at("x").get<DimIndex>(),
                                 pos.at("y").get<DimIndex>(), pos.at("z").get<DimIndex>(),
                                 e.at("z_range")[0].get<std::uint32_t>(), e.at("score").get<double>(),
                                 e.at("degenerate").get<bool>()});
  }
  const auto ranked = diversity_penalty(select(images, options.n, options.m, options.reverse), images,
                                        options.penalty, options.reverse);

  const auto& dims = manifest.at("dims");
  auto groups = group_by_axes(images);
  order_groups(groups, options.reverse);
  auto group_json = nlohmann::json::array();
  for (const auto& g : groups) {
    auto members = nlohmann::json::array();
    for (const auto i : g.members) {
      members.push_back(images[i].id);
    }
    group_json.push_back({{"key", {dims[g.key[0]].at("id"), dims[g.key[1]].at("id")}},
                          {"names", {dims[g.key[0]].at("name"), dims[g.key[1]].at("name")}},
                          {"score", g.score},
                          {"members", members}});
  }

  for (auto& e : entries) {
    e["rank"] = nullptr;
  }
  auto ranking = nlohmann::json::array();
  for (auto p = std::size_t{0}; p < ranked.size(); ++p) {
    const auto& r = ranked[p];
    entries[r.image]["rank"] = p;
    ranking.push_back({{"position", p},
                       {"id", images[r.image].id},
                       {"group", r.group},
                       {"score", images[r.image].score},
                       {"effective_score", r.effective_score}});
  }
  manifest["groups"] = std::move(group_json);
  manifest["ranking"] = std::move(ranking);
  manifest["rank_options"] = {
      {"n", options.n}, {"m", options.m}, {"penalty", options.penalty}, {"reverse", options.reverse}};
  write_json_atomic(gallery_dir / kManifestFile, manifest);
  return manifest;
}

JobRequest JobRequest::from_json(const nlohmann::json& json) {
  if (!json.is_object()) {
    throw Error("job request must be a JSON object");
  }
  auto req = JobRequest{};
  req.dataset = json.at("dataset").get<std::string>();
  if (json.contains("dims")) {
    for (const auto& d : json.at("dims")) {
      if (!d.is_string()) {
        throw Error("dims are dimension names");
      }
      req.dims.push_back(d.get<std::string>());
    }
  }
  req.filter = json.value("filter", req.filter);
  req.agg = json.value("agg", req.agg);
  req.bins = json.value("bins", req.bins);
  req.binning = json.value("binning", req.binning);
  req.backend = json.value("backend", req.backend);
  req.partitions = json.value("partitions", req.partitions);
  req.dpus = json.value("dpus", req.dpus);
  req.mode = json.value("mode", req.mode);
  req.k = json.value("k", req.k);
  req.rank.n = json.value("n", req.rank.n);
  req.rank.m = json.value("m", req.rank.m);
  req.rank.penalty = json.value("penalty", req.rank.penalty);
  req.rank.reverse = json.value("reverse", req.rank.reverse);
  req.any_bins = json.value("any_bins", req.any_bins);
  return req;
}

nlohmann::json JobRequest::to_json() const {
  return {{"dataset", dataset.string()}, {"dims", dims},       {"filter", filter},       {"agg", agg},
          {"bins", bins},                {"binning", binning}, {"backend", backend},     {"partitions", partitions},
          {"dpus", dpus},                {"mode", mode},       {"k", k},                 {"n", rank.n},
          {"m", rank.m},                 {"penalty", rank.penalty}, {"reverse", rank.reverse}, {"any_bins", any_bins}};
}

void JobRequest::validate() const {
  if (dataset.empty()) {
    throw Error("no dataset given");
  }
  if (!dims.empty()) {
    if (dims.size() < 3) {
      throw Error("select at least 3 dimensions, got " + std::to_string(dims.size()));
    }
    if (std::set<std::string>(dims.begin(), dims.end()).size() != dims.size()) {
      throw Error("dimension selected twice");
    }
  }
  if (!any_bins && std::find(kBinPolicy.begin(), kBinPolicy.end(), bins) == kBinPolicy.end()) {
    throw Error("bins must be one of 32, 64, 128, 256, got " + std::to_string(bins));
  }
  if (bins < 2 || bins > kMaxBins) {
    throw Error("bins out of range");
  }
  if (k == 0 || bins % k != 0) {
    throw Error("k=" + std::to_string(k) + " does not divide B=" + std::to_string(bins));
  }
  if (agg != "count" && !agg.starts_with("sum:")) {
    throw Error("agg must be 'count' or 'sum:<column>'");
  }
  if (backend != "cpu" && backend != "pim-sim") {
    throw Error("backend must be cpu or pim-sim");
  }
  if (partitions != 0 && bins % partitions != 0) {
    throw Error("partitions must divide B");
  }
  pim_mode_from_string(mode);
  binning_mode_from_string(binning);
  if (rank.n == 0 || rank.m == 0) {
    throw Error("n and m must be at least 1");
  }
  if (!(rank.penalty >= 0.0 && rank.penalty <= 1.0)) {
    throw Error("penalty must be in [0, 1]");
  }
}

namespace {

// Dataset dim ids for the request, ascending, read from the dataset header only.
std::vector<DimensionId> resolve_dims(const JobRequest& request) {
  const auto header_path = request.dataset / "header.json";
  if (!fs::exists(header_path)) {
    throw NotPreprocessedError("'" + request.dataset.string() + "' is not a preprocessed dataset directory");
  }
  const auto header = read_json(header_path);
  auto ids = std::vector<DimensionId>{};
  const auto& dims = header.at("dimensions");
  if (request.dims.empty()) {
    for (const auto& d : dims) {
      ids.push_back(d.at("id").get<DimensionId>());
    }
  } else {
    for (const auto& name : request.dims) {
      const auto it = std::find_if(dims.begin(), dims.end(), [&](const auto& d) { return d.at("name") == name; });
      if (it == dims.end()) {
        throw Error("unknown dimension '" + name + "'");
      }
      ids.push_back(it->at("id").get<DimensionId>());
    }
  }
  std::sort(ids.begin(), ids.end());
  if (ids.size() < 3) {
    throw Error("need at least 3 dimensions, the dataset selection has " + std::to_string(ids.size()));
  }
  return ids;
}

nlohmann::json normalized(const JobRequest& request, const std::vector<DimensionId>& dims) {
  auto json = request.to_json();
  json["dataset"] = fs::weakly_canonical(fs::absolute(request.dataset)).string();
  json["dims"] = dims;
  if (request.backend == "cpu") {
    json.erase("dpus");
    json.erase("mode");
  } else {
    json.erase("partitions");
  }
  return json;
}

template <typename F>
auto stage(const char* name, F&& body) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

std::string job_id(const JobRequest& request) {
  request.validate();
  const auto dims = resolve_dims(request);
  return to_hex(fnv1a64(normalized(request, dims).dump(), dataset_fingerprint(request.dataset)));
}

fs::path job_dir(const fs::path& root, const std::string& job) { return root / "jobs" / job; }

PipelineResult run_pipeline(const JobRequest& request, const fs::path& root, std::size_t threads) {
  stage("validate", [&] { request.validate(); });
  auto result = PipelineResult{};
  const auto dims = stage("load", [&] { return resolve_dims(request); });
  result.job = stage("load", [&] { return job_id(request); });
  result.dir = job_dir(root, result.job);
  const auto manifest_path = result.dir / kManifestFile;
  if (fs::exists(manifest_path)) {
    auto manifest = read_json(manifest_path);
    if (manifest.value("complete", false)) {
      result.manifest = std::move(manifest);
      result.cache_hit = true;
      return result;
    }
  }
  fs::create_directories(result.dir);
  write_json_atomic(result.dir / kRequestFile, normalized(request, dims));

  const auto dataset = stage("load", [&] { return load_preprocessed(request.dataset); });
  auto binned = stage("bin", [&] {
    const auto rows = select_rows(dataset, RowFilter::parse(request.filter, dataset));
    if (rows.size() < request.bins) {
      throw Error("filter keeps " + std::to_string(rows.size()) + " rows, fewer than B=" +
                  std::to_string(request.bins));
    }
    return bin_stage(dataset, request.dataset, dims, rows, request.bins, binning_mode_from_string(request.binning),
                     result.dir / "binned", threads);
  });

  auto cubes = stage("aggregate", [&] {
    const auto spec = resolve_agg(dataset, request.agg);
    attach_values(binned, dataset, spec);
    auto options = BackendOptions{};
    options.backend = request.backend;
    options.partitions = request.partitions;
    options.pim.dpu_count = request.dpus;
    options.pim.mode = pim_mode_from_string(request.mode);
    options.threads = threads;
    auto output = aggregate_stage(binned.table, spec, options);
    auto info = CubeSetInfo{request.bins, dims, binned.dim_names, agg_to_string(dataset, spec), request.backend,
                            result.dir / "binned"};
    write_cube_dir(result.dir / "cubes", info, output.cubes);
    if (output.stats) {
      write_json_atomic(result.dir / kStatsFile, stats_to_json(*output.stats));
    }
    return CubeSet{std::move(info), std::move(output.cubes)};
  });
  binned = {};

  stage("render", [&] { render_stage(cubes, request.k, result.dir, result.job + "-", threads); });
  cubes = {};
  auto manifest = stage("rank", [&] { return rank_stage(result.dir, request.rank); });

  manifest["job"] = result.job;
  manifest["config"] = normalized(request, dims);
  manifest["dataset_fingerprint"] = to_hex(dataset_fingerprint(request.dataset));
  manifest["stats"] = fs::exists(result.dir / kStatsFile) ? nlohmann::json(kStatsFile) : nlohmann::json{};
  manifest["complete"] = true;
  write_json_atomic(manifest_path, manifest);
  result.manifest = std::move(manifest);
  return result;
}

}  // namespace divan
