#pragma once

#include "mnode/run_config.hpp"

#include "json.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mnode {

// metrics.jsonl holds the deterministic part of every EpochMetrics (one
// object per line); wall_time_s goes to timing.jsonl next to it so that
// identical runs produce identical metrics files.
nlohmann::json epoch_metrics_json(const EpochMetrics& m);
nlohmann::json epoch_timing_json(const EpochMetrics& m);

struct MetricsRow {
  std::string run;
  int epoch = 0;
  std::int64_t nfe_forward = 0;
  std::int64_t nfe_backward = 0;
  std::optional<double> wall_time_s;
  double loss = 0.0;
  std::optional<double> test_accuracy;
};

/// Parses <dir>/metrics.jsonl (and timing.jsonl when present). A malformed
/// line raises FormatError whose offset is the 1-based line number.
std::vector<MetricsRow> read_run_metrics(const std::filesystem::path& run_dir);

/// Least-squares slope of y against x; 0 for fewer than two points.
double least_squares_slope(std::span<const double> x, std::span<const double> y);

struct TrainSummary {
  std::vector<EpochMetrics> epochs;
  EvalResult test;
};

/// Writes config.json, metrics.jsonl, timing.jsonl, checkpoint.json and
/// eval.json into `out_dir`.
TrainSummary cmd_train(const RunConfig& cfg, const std::filesystem::path& out_dir);

/// Rebuilds the model of a train run and evaluates it on "train" or "test".
EvalResult cmd_eval(const std::filesystem::path& run_dir, const std::string& split_name = "test");

/// edges.csv, edges_filtered.csv (p_ij > threshold), graph.json and
/// weights_sorted.csv (dense, label-sorted) for the training split, with the
/// row order in weights_order.csv.
void cmd_graph(const RunConfig& cfg, const std::filesystem::path& out_dir);

/// sphere_trajectories.csv and sphere_summary.json.
SphereReport cmd_sphere_demo(const RunConfig& cfg, const std::filesystem::path& out_dir);

struct SensitivityRow {
  Index m = 0;
  std::uint64_t seed = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double final_loss = 0.0;
  std::string error;  // empty on success
};

/// One run per (m, seed); failures are recorded and the sweep continues.
/// Writes sensitivity.csv and sensitivity.json.
std::vector<SensitivityRow> cmd_sensitivity(const RunConfig& cfg, std::span<const Index> dims,
                                            const std::filesystem::path& out_dir);

/// nfe_report.csv (run, epoch, nfe_forward, nfe_backward, wall_time_s) and
/// nfe_summary.json with per-run totals and least-squares NFE slopes.
nlohmann::json cmd_nfe_report(std::span<const std::filesystem::path> run_dirs,
                              const std::filesystem::path& out_dir);

}  // namespace mnode
