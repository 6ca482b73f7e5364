#include <algorithm>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "divan/binning.hpp"
#include "divan/cpu_agg.hpp"
#include "divan/dataset.hpp"
#include "divan/error.hpp"
#include "divan/filter.hpp"
#include "divan/pim_plan.hpp"
#include "divan/pim_sim.hpp"
#include "divan/pipeline.hpp"
#include "divan/service.hpp"
#include "divan/synthetic.hpp"

namespace fs = std::filesystem;
using divan::DimensionId;
using divan::RowId;

namespace {

nlohmann::json read_json(const fs::path& path) {
  auto in = std::ifstream{path};
  if (!in) {
    throw divan::Error("cannot read '" + path.string() + "'");
  }
  return nlohmann::json::parse(in);
}

void write_json(const fs::path& path, const nlohmann::json& json) {
  auto out = std::ofstream{path};
  if (!out) {
    throw divan::Error("cannot write '" + path.string() + "'");
  }
  out << json.dump(2) << '\n';
}

std::vector<std::string> split_list(const std::string& text) {
  auto out = std::vector<std::string>{};
  auto in = std::istringstream{text};
  for (auto item = std::string{}; std::getline(in, item, ',');) {
    if (!item.empty()) {
      out.push_back(item);
    }
  }
  return out;
}

std::vector<DimensionId> dims_by_name(const divan::Dataset& dataset, const std::string& list) {
  auto ids = std::vector<DimensionId>{};
  if (list.empty()) {
    for (const auto& d : dataset.dimensions()) {
      ids.push_back(d.id);
    }
    return ids;
  }
  for (const auto& name : split_list(list)) {
    const auto id = dataset.find_dimension(name);
    if (!id) {
      throw divan::Error("unknown dimension '" + name + "'");
    }
    ids.push_back(*id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw divan::Error("dimension listed twice");
  }
  return ids;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// --- subcommands ---------------------------------------------------------------------------

struct SynthArgs {
  std::string kind = "uniform";
  std::size_t rows = 100000;
  std::uint32_t columns = 8;
  std::uint64_t seed = 1;
  std::string out;
  std::string csv;
  std::size_t threads = 0;
};

void synth(const SynthArgs& a) {
  auto dataset = a.kind == "taxi" ? divan::make_taxi_dataset(a.rows, a.seed)
                                  : divan::make_uniform_dataset(a.rows, a.columns, a.seed);
  if (!a.csv.empty()) {
    divan::write_csv(dataset, a.csv);
    if (a.kind == "taxi") {
      write_json(fs::path{a.csv}.replace_extension(".schema.json"), divan::taxi_schema_json());
    }
  }
  if (!a.out.empty()) {
    divan::preprocess(dataset, a.threads);
    divan::save_preprocessed(dataset, a.out);
  }
  std::printf("synthesized %zu rows, %zu columns\n", dataset.row_count(), dataset.columns().size());
}

struct PreprocessArgs {
  std::string input;
  std::string schema;
  std::string out;
  std::size_t threads = 0;
};

void preprocess(const PreprocessArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  const auto document = divan::parse_schema_document(read_json(a.schema));
  auto dataset = divan::ingest_delimited(a.input, document.columns, document.ingest);
  divan::apply_schema_document(dataset, document);
  divan::preprocess(dataset, a.threads);
  divan::save_preprocessed(dataset, a.out);
  std::printf("preprocessed %zu rows, %zu dimensions in %.3fs\n", dataset.row_count(), dataset.dimensions().size(),
              seconds_since(start));
}

struct BinArgs {
  std::string dataset;
  std::string dims;
  std::uint32_t bins = 32;
  bool exact = false;
  bool approx = false;
  std::string subset;
  std::string insert_rows;
  double max_insert_fraction = 0.01;
  std::string out;
  std::size_t threads = 0;
};

void bin(const BinArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  const auto dataset = divan::load_preprocessed(a.dataset);
  const auto dims = dims_by_name(dataset, a.dims);
  const auto rows = divan::select_rows(dataset, divan::RowFilter::parse(a.subset, dataset));
  const auto mode = a.exact ? divan::BinningMode::exact
                            : (a.approx ? divan::BinningMode::approximate : divan::BinningMode::automatic);
  if (a.insert_rows.empty()) {
    divan::bin_stage(dataset, a.dataset, dims, rows, a.bins, mode, a.out, a.threads);
    std::printf("binned %zu rows x %zu dims into B=%u in %.3fs\n", rows.size(), dims.size(), a.bins,
                seconds_since(start));
    return;
  }

  // Rows matching --insert-rows arrive after the histogram pass over the rest.
  const auto late = divan::select_rows(dataset, divan::RowFilter::parse(a.insert_rows, dataset));
  const auto late_set = std::set<RowId>(late.begin(), late.end());
  auto base = std::vector<RowId>{};
  auto inserted = std::vector<RowId>{};
  for (const auto row : rows) {
    (late_set.contains(row) ? inserted : base).push_back(row);
  }
  const auto fraction = base.empty() ? 1.0 : static_cast<double>(inserted.size()) / static_cast<double>(base.size());
  if (fraction > a.max_insert_fraction || !divan::approx_binning_applicable(base.size(), dataset.row_count())) {
    divan::bin_stage(dataset, a.dataset, dims, rows, a.bins, mode, a.out, a.threads);
    std::printf("insert fraction %.4f over limit %.4f or subset too small: rebinned %zu rows\n", fraction,
                a.max_insert_fraction, rows.size());
    return;
  }
  auto set = divan::BinnedSet{fs::absolute(a.dataset), a.bins, dims, {}, base, {}};
  set.rows.insert(set.rows.end(), inserted.begin(), inserted.end());
  set.table.bins = a.bins;
  for (const auto dim : dims) {
    auto tracked = divan::bin_approx_tracked(dataset, dim, base, a.bins);
    const auto extra = divan::absorb_insert(dataset, dim, inserted, tracked.bounds);
    tracked.column.values.insert(tracked.column.values.end(), extra.begin(), extra.end());
    set.dim_names.push_back(dataset.dimension(dim).name);
    set.table.columns.push_back(std::move(tracked.column.values));
  }
  divan::write_binned(set, dataset, a.out, a.threads);
  std::printf("binned %zu rows, absorbed %zu inserts through bucket bounds in %.3fs\n", base.size(), inserted.size(),
              seconds_since(start));
}

struct AggregateArgs {
  std::string binned;
  std::string agg = "count";
  std::string backend = "cpu";
  std::string partitions = "1";
  std::uint32_t dpus = 2048;
  std::string mode = "sync";
  std::string stats;
  std::string out;
  std::size_t threads = 0;
};

void aggregate(const AggregateArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  auto set = divan::read_binned(a.binned);
  const auto dataset = divan::load_preprocessed(set.dataset_dir);
  const auto spec = divan::resolve_agg(dataset, a.agg);
  divan::attach_values(set, dataset, spec);

  auto options = divan::BackendOptions{};
  options.backend = a.backend;
  options.partitions = a.partitions == "auto" ? 0 : static_cast<std::uint32_t>(std::stoul(a.partitions));
  options.pim.dpu_count = a.dpus;
  options.pim.mode = divan::pim_mode_from_string(a.mode);
  options.threads = a.threads;
  const auto output = divan::aggregate_stage(set.table, spec, options);

  const auto info = divan::CubeSetInfo{set.bins, set.dim_ids, set.dim_names, divan::agg_to_string(dataset, spec),
                                       a.backend, fs::absolute(a.binned)};
  divan::write_cube_dir(a.out, info, output.cubes);
  if (output.stats && !a.stats.empty()) {
    write_json(a.stats, divan::stats_to_json(*output.stats));
  }
  std::printf("%zu cubes (%s, %s", output.cubes.size(), a.backend.c_str(), info.agg.c_str());
  if (a.backend == "cpu") {
    std::printf(", P=%u", output.partitions);
  } else if (output.stats) {
    std::printf(", balance %.4f", output.stats->max_balance_ratio());
  }
  std::printf(") in %.3fs\n", seconds_since(start));
}

struct PlanArgs {
  std::uint32_t dims = 8;
  std::uint32_t bins = 32;
  std::uint32_t dpus = 2048;
  std::size_t element_bytes = 4;
  std::string dump;
  bool per_dpu = false;
};

void plan(const PlanArgs& a) {
  const auto plan = divan::dpu_dist(a.dims, a.bins, a.dpus);
  auto assignments = std::vector<divan::DpuAssignment>{};
  for (const auto& iteration : plan) {
    assignments.push_back(divan::assign_dpus(iteration, a.bins, a.dpus, a.element_bytes));
  }
  const auto json = divan::plan_to_json(plan, assignments, a.per_dpu);
  if (!a.dump.empty()) {
    write_json(a.dump, json);
  }
  for (const auto& it : json.at("iterations")) {
    const auto& balance = it.at("balance");
    const auto& assignment = it.at("assignment");
    std::printf("iteration %d: R=%d, %zu groups, %d triples (group size %d..%d), F=%d, %d DPUs, max footprint %zu B\n",
                it.at("iteration").get<int>(), it.at("rows").get<int>(), it.at("groups").size(),
                it.at("triple_count").get<int>(), balance.at("min_group").get<int>(), balance.at("max_group").get<int>(),
                assignment.at("replication").get<int>(), assignment.at("dpus_used").get<int>(),
                assignment.at("max_footprint_bytes").get<std::size_t>());
  }
}

struct RenderArgs {
  std::string cubes;
  std::uint32_t k = 4;
  std::string out;
  std::string prefix;
  std::size_t threads = 0;
};

void render(const RenderArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  const auto cubes = divan::read_cube_dir(a.cubes);
  const auto manifest = divan::render_stage(cubes, a.k, a.out, a.prefix, a.threads);
  std::printf("rendered %zu images in %.3fs\n", manifest.at("image_count").get<std::size_t>(), seconds_since(start));
}

struct RankArgs {
  std::string gallery;
  divan::RankOptions options;
};

void rank(const RankArgs& a) {
  const auto manifest = divan::rank_stage(a.gallery, a.options);
  for (const auto& entry : manifest.at("ranking")) {
    std::printf("%3zu  %-48s %.6f  %.6f\n", entry.at("position").get<std::size_t>(),
                entry.at("id").get<std::string>().c_str(), entry.at("score").get<double>(),
                entry.at("effective_score").get<double>());
  }
}

struct PipelineArgs {
  std::string config;
  std::string root = ".";
  std::size_t threads = 0;
};

void pipeline(const PipelineArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  auto request = divan::JobRequest::from_json(read_json(a.config));
  if (request.dataset.is_relative()) {
    request.dataset = fs::path{a.root} / request.dataset;
  }
  const auto result = divan::run_pipeline(request, a.root, a.threads);
  std::printf("job %s: %zu images%s in %.3fs\n%s\n", result.job.c_str(),
              result.manifest.at("image_count").get<std::size_t>(), result.cache_hit ? " (cached)" : "",
              seconds_since(start), (result.dir / "manifest.json").string().c_str());
}

divan::Service* running_service = nullptr;

extern "C" void on_signal(int) {
  if (running_service) {
    running_service->stop();
  }
}

void serve(const divan::ServiceOptions& options) {
  auto service = divan::Service{options};
  running_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::printf("serving %s on http://%s:%d\n", options.root.string().c_str(), options.host.c_str(), options.port);
  std::fflush(stdout);
  service.run();
  running_service = nullptr;
}

}  // namespace

int main(int argc, char** argv) {
  auto app = CLI::App{"divan: binned 3D aggregate cubes, heatmaps and rankings"};
  app.require_subcommand(1);
  auto threads = std::size_t{0};
  app.add_option("--threads", threads, "worker threads (0 = all cores)");

  auto synth_args = SynthArgs{};
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_cmd->add_option("--kind", synth_args.kind)->check(CLI::IsMember({"uniform", "taxi"}));
  synth_cmd->add_option("--rows", synth_args.rows);
  synth_cmd->add_option("--columns", synth_args.columns, "uniform integer dimensions");
  synth_cmd->add_option("--seed", synth_args.seed);
  synth_cmd->add_option("--out", synth_args.out, "write a preprocessed dataset directory");
  synth_cmd->add_option("--csv", synth_args.csv, "write the raw rows as CSV");

  auto pre_args = PreprocessArgs{};
  auto* pre_cmd = app.add_subcommand("preprocess", "ingest a delimited file and argsort every dimension");
  pre_cmd->add_option("--input", pre_args.input)->required()->check(CLI::ExistingFile);
  pre_cmd->add_option("--schema", pre_args.schema)->required()->check(CLI::ExistingFile);
  pre_cmd->add_option("--out", pre_args.out)->required();

  auto bin_args = BinArgs{};
  auto* bin_cmd = app.add_subcommand("bin", "equidepth-bin selected dimensions of a row subset");
  bin_cmd->add_option("--dataset", bin_args.dataset)->required()->check(CLI::ExistingDirectory);
  bin_cmd->add_option("--dims", bin_args.dims, "comma separated dimension names (default: all)");
  bin_cmd->add_option("--bins", bin_args.bins)->check(CLI::Range(2u, divan::kMaxBins));
  auto* exact_flag = bin_cmd->add_flag("--exact", bin_args.exact, "always bin from the exact sort order");
  bin_cmd->add_flag("--approx", bin_args.approx, "force the histogram path")->excludes(exact_flag);
  bin_cmd->add_option("--subset", bin_args.subset, "row filter, e.g. \"fare_amount>=10,pu_zone!=7\"");
  bin_cmd->add_option("--insert-rows", bin_args.insert_rows, "filter for rows treated as late inserts");
  bin_cmd->add_option("--max-insert-fraction", bin_args.max_insert_fraction,
                      "largest insert/base ratio absorbed without rebinning")
      ->check(CLI::Range(0.0, 1.0));
  bin_cmd->add_option("--out", bin_args.out)->required();

  auto agg_args = AggregateArgs{};
  auto* agg_cmd = app.add_subcommand("aggregate", "compute all 3D cubes of a binned set");
  agg_cmd->add_option("--binned", agg_args.binned)->required()->check(CLI::ExistingDirectory);
  agg_cmd->add_option("--agg", agg_args.agg, "count | sum:<column>");
  agg_cmd->add_option("--backend", agg_args.backend)->check(CLI::IsMember({"cpu", "pim-sim"}));
  agg_cmd->add_option("--partitions", agg_args.partitions, "1, 2, 4, ... or auto");
  agg_cmd->add_option("--dpus", agg_args.dpus);
  agg_cmd->add_option("--mode", agg_args.mode)->check(CLI::IsMember({"sync", "async"}));
  agg_cmd->add_option("--stats", agg_args.stats, "write run statistics JSON (pim-sim)");
  agg_cmd->add_option("--out", agg_args.out)->required();

  auto plan_args = PlanArgs{};
  auto* plan_cmd = app.add_subcommand("plan", "print the DPU work distribution");
  plan_cmd->add_option("--dims", plan_args.dims)->required();
  plan_cmd->add_option("--bins", plan_args.bins)->required();
  plan_cmd->add_option("--dpus", plan_args.dpus);
  plan_cmd->add_option("--element-bytes", plan_args.element_bytes)->check(CLI::IsMember({4, 8}));
  plan_cmd->add_option("--dump", plan_args.dump, "write the plan JSON");
  plan_cmd->add_flag("--per-dpu", plan_args.per_dpu, "include every DPU slot in the dump");

  auto render_args = RenderArgs{};
  auto* render_cmd = app.add_subcommand("render", "render heatmaps for a cube directory");
  render_cmd->add_option("--cubes", render_args.cubes)->required()->check(CLI::ExistingDirectory);
  render_cmd->add_option("--partitions", render_args.k, "z partitions k");
  render_cmd->add_option("--prefix", render_args.prefix, "image id prefix");
  render_cmd->add_option("--out", render_args.out)->required();

  auto rank_args = RankArgs{};
  auto* rank_cmd = app.add_subcommand("rank", "rank the images of a gallery");
  rank_cmd->add_option("--gallery", rank_args.gallery)->required()->check(CLI::ExistingDirectory);
  rank_cmd->add_option("--top-groups", rank_args.options.m)->check(CLI::PositiveNumber);
  rank_cmd->add_option("--per-group", rank_args.options.n)->check(CLI::PositiveNumber);
  rank_cmd->add_option("--penalty", rank_args.options.penalty)->check(CLI::Range(0.0, 1.0));
  rank_cmd->add_flag("--reverse", rank_args.options.reverse, "least interesting first");

  auto pipe_args = PipelineArgs{};
  auto* pipe_cmd = app.add_subcommand("pipeline", "run bin, aggregate, render and rank for a job file");
  pipe_cmd->add_option("--config", pipe_args.config)->required()->check(CLI::ExistingFile);
  pipe_cmd->add_option("--root", pipe_args.root, "job root; jobs land in <root>/jobs/<id>");

  auto serve_opts = divan::ServiceOptions{};
  auto root = std::string{"."};
  auto* serve_cmd = app.add_subcommand("serve", "serve manifests, images, bins and jobs over HTTP");
  serve_cmd->add_option("--root", root)->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--host", serve_opts.host);
  serve_cmd->add_option("--port", serve_opts.port);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) {
      synth_args.threads = threads;
      synth(synth_args);
    } else if (*pre_cmd) {
      pre_args.threads = threads;
      preprocess(pre_args);
    } else if (*bin_cmd) {
      bin_args.threads = threads;
      bin(bin_args);
    } else if (*agg_cmd) {
      agg_args.threads = threads;
      aggregate(agg_args);
    } else if (*plan_cmd) {
      plan(plan_args);
    } else if (*render_cmd) {
      render_args.threads = threads;
      render(render_args);
    } else if (*rank_cmd) {
      rank(rank_args);
    } else if (*pipe_cmd) {
      pipe_args.threads = threads;
      pipeline(pipe_args);
    } else if (*serve_cmd) {
      serve_opts.root = root;
      serve_opts.threads = threads;
      serve(serve_opts);
    }
  } catch (const divan::StageError& e) {
    std::fprintf(stderr, "divan: stage %s failed: %s\n", e.stage().c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "divan: %s\n", e.what());
    return 1;
  }
  return 0;
}
