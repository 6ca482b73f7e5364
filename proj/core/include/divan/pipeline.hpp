#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "divan/binning.hpp"
#include "divan/cpu_agg.hpp"
#include "divan/dataset.hpp"
#include "divan/pim_sim.hpp"

namespace divan {

// --- bin stage ---------------------------------------------------------------------------

/// A binned row subset on disk: binned.json, rows.bin (u32 row ids), bins_<i>.bin (u8 when B <= 256,
/// else u16) per selected dimension, and bounds_<dim id>.json per dimension.
struct BinnedSet {
  std::filesystem::path dataset_dir;
  std::uint32_t bins = 0;
  std::vector<DimensionId> dim_ids;
  std::vector<std::string> dim_names;
  std::vector<RowId> rows;
  BinnedTable table;  // values stay empty until attach_values
};

BinningMode binning_mode_from_string(const std::string& text);

BinnedSet bin_stage(const Dataset& dataset, const std::filesystem::path& dataset_dir,
                    const std::vector<DimensionId>& dims, const std::vector<RowId>& rows, std::uint32_t bins,
                    BinningMode mode, const std::filesystem::path& out_dir, std::size_t threads = 0);

// Writes an already binned set (columns filled, values ignored) plus its boundaries.
void write_binned(const BinnedSet& set, const Dataset& dataset, const std::filesystem::path& out_dir,
                  std::size_t threads = 0);

BinnedSet read_binned(const std::filesystem::path& dir);
std::filesystem::path bounds_file(const std::filesystem::path& binned_dir, DimensionId dim);

// --- aggregate stage ---------------------------------------------------------------------

// "count", "sum:<column>"; the value width comes from the dataset's value-column declaration,
// else int32 for integer columns and float64 for float columns.
AggSpec resolve_agg(const Dataset& dataset, const std::string& text);
std::string agg_to_string(const Dataset& dataset, const AggSpec& spec);

// Gathers SUM values for the binned rows, rounded to float32 when that is the declared width.
void attach_values(BinnedSet& set, const Dataset& dataset, const AggSpec& spec);

struct BackendOptions {
  std::string backend = "cpu";  // cpu | pim-sim
  std::uint32_t partitions = 1;  // 0 = autotune over {1, 2, 4}
  PimConfig pim;
  std::size_t threads = 0;
};

struct AggregateOutput {
  std::vector<AggregateCube> cubes;
  std::optional<RunStats> stats;
  std::uint32_t partitions = 1;
};

AggregateOutput aggregate_stage(const BinnedTable& table, const AggSpec& spec, const BackendOptions& options);

// --- render / rank stages ----------------------------------------------------------------

/// Renders k z-partitions per z choice for every cube into <gallery>/images and writes an unranked
/// <gallery>/manifest.json. Image ids are "<prefix><spec name>".
nlohmann::json render_stage(const CubeSet& cubes, std::uint32_t k, const std::filesystem::path& gallery_dir,
                            const std::string& id_prefix, std::size_t threads = 0);

struct RankOptions {
  std::size_t n = 4;  // images per group
  std::size_t m = 10;  // groups
  double penalty = 0.5;
  bool reverse = false;
};

// Scores, groups and orders the images of <gallery>/manifest.json and writes the ranking back.
nlohmann::json rank_stage(const std::filesystem::path& gallery_dir, const RankOptions& options);

// --- pipeline ----------------------------------------------------------------------------

struct JobRequest {
  std::filesystem::path dataset;
  std::vector<std::string> dims;  // dimension names; empty selects every dimension
  std::string filter;
  std::string agg = "count";
  std::uint32_t bins = 32;
  std::string binning = "auto";
  std::string backend = "cpu";
  std::uint32_t partitions = 1;
  std::uint32_t dpus = 2048;
  std::string mode = "sync";
  std::uint32_t k = 4;
  RankOptions rank;
  bool any_bins = false;  // lift the {32, 64, 128, 256} bin-count policy

  static JobRequest from_json(const nlohmann::json& json);
  nlohmann::json to_json() const;
  // Checks what can be checked without the dataset.
  void validate() const;
};

// Content address of the request against the dataset as currently preprocessed.
std::string job_id(const JobRequest& request);

struct PipelineResult {
  std::string job;
  std::filesystem::path dir;
  nlohmann::json manifest;
  bool cache_hit = false;
};

std::filesystem::path job_dir(const std::filesystem::path& root, const std::string& job);

/// bin -> aggregate -> render -> rank into <root>/jobs/<job id>. A finished job with the same id is
/// returned as a cache hit. Failures are rethrown as StageError.
PipelineResult run_pipeline(const JobRequest& request, const std::filesystem::path& root, std::size_t threads = 0);

}  // namespace divan
