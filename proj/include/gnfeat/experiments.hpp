#pragma once

#include <cstdint>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gnfeat/data.hpp"
#include "gnfeat/metrics.hpp"
#include "gnfeat/optim.hpp"

namespace gnfeat {

/// Where the training data comes from: generated from a teacher, or a saved
/// dataset stem.
struct DataSource {
  TeacherSpec teacher;
  Eigen::Index N = kDefaultTrainSize;
  Eigen::Index N_test = kDefaultTestSize;
  std::uint64_t data_seed = 0;
  std::optional<std::string> dataset_path;
};

struct StudentConfig {
  Eigen::Index M = kDefaultStudentWidth;
  double tau0 = 1.0;
  Activation act = Activation::relu();
  Scaling scaling = Scaling::MeanField;
  std::uint64_t init_seed = 0;
};

/// Which metrics are evaluated at logged iterations. Both are O(N^2 M) or
/// worse, so they are only computed at log points.
struct MetricOptions {
  bool test_lrfit = true;
  bool sigma_star = true;
};

/// Fully resolved description of one run. Its JSON form is embedded in the
/// RunRecord and is enough to reproduce the run bit for bit.
struct RunConfig {
  std::string name = "run";
  Method method = Method::GN;
  DataSource data;
  StudentConfig student;
  TrainConfig train;
  MetricOptions metrics;

  /// Fills log_every when it was left at 0: max(1, max_iters / 500).
  void resolve_defaults();
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Parses and validates; unknown keys and bad values raise ConfigError
/// naming the offending field.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Applies `key.path=value` overrides to a JSON document. The value is parsed
/// as JSON when possible and taken as a string otherwise.
void apply_overrides(nlohmann::json& j, const std::vector<std::string>& overrides);

struct FinalMetrics {
  double train_loss = std::nan("");
  double test_loss = std::nan("");
  double test_lrfit = std::nan("");
  double wcd = std::nan("");
  double sigma_star_A = std::nan("");
};

struct RunRecord {
  RunConfig config;
  StopReason stop_reason = StopReason::MaxIters;
  bool reached_target = false;
  std::int64_t iterations = 0;
  FinalMetrics initial;
  FinalMetrics final;
  MetricTrace trace;
  double wall_seconds_total = 0.0;
  double wall_seconds_train = 0.0;
  std::string error;
  std::string trace_checksum;  // filled when written or loaded
};

/// Builds or loads the data, initializes the student, runs GN/GD or the RF
/// fit, and evaluates every metric. Runtime failures are recorded in the
/// returned record (stop_reason = failed) instead of thrown.
RunRecord run_experiment(const RunConfig& cfg, TwoLayerNet* final_net = nullptr);

/// Loads the data a config refers to.
Dataset materialize_data(const DataSource& src);

/// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "GNFEAT_OUTPUT_DIR";
std::filesystem::path default_output_dir();

// RunRecord persistence: `<dir>/<name>.record.json` plus the trace in
// `<dir>/<name>.trace.bin`.
std::filesystem::path record_path(const std::filesystem::path& dir, const std::string& name);
std::filesystem::path trace_path(const std::filesystem::path& dir, const std::string& name);

nlohmann::json record_to_json(const RunRecord& rec);
/// Writes record + trace; returns the record path.
std::filesystem::path write_run_record(const RunRecord& rec, const std::filesystem::path& dir);
/// Reads a record and its trace, verifying the trace checksum.
RunRecord read_run_record(const std::filesystem::path& record_file);
/// Same JSON with wall-clock fields removed, for determinism comparisons.
nlohmann::json strip_wall_clock(nlohmann::json j);

std::string encode_trace(const MetricTrace& trace);
MetricTrace decode_trace(const std::string& bytes);

/// A grid of runs. RF ignores the step grid and the iteration budgets.
struct SweepSpec {
  std::string name = "sweep";
  std::vector<Method> methods{Method::GN, Method::GD, Method::RF};
  std::vector<double> tau0_grid;
  std::vector<double> step_grid;
  std::vector<Eigen::Index> N_grid;
  std::vector<Eigen::Index> M_grid;
  std::vector<std::uint64_t> seeds{0};
  std::vector<Activation> activations;  // empty: use the template's
  std::int64_t budget_gn = 100000;
  std::int64_t budget_gd = 1000000;
  RunConfig base;

  void validate() const;
};

SweepSpec sweep_spec_from_json(const nlohmann::json& j);
SweepSpec load_sweep_spec(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Expands the grid into concrete run configurations, in a fixed order with
/// unique names. For seed s the teacher, data and initialization seeds are
/// all set to s (their streams are distinct).
std::vector<RunConfig> expand_sweep(const SweepSpec& spec);

/// One row of the per-run table.
struct RunSummary {
  std::string name;
  Method method = Method::GN;
  std::string activation;
  double tau0 = 0.0;
  std::optional<double> step;
  Eigen::Index N = 0;
  Eigen::Index M = 0;
  std::uint64_t seed = 0;
  StopReason stop_reason = StopReason::MaxIters;
  bool reached_target = false;
  std::int64_t iterations = 0;
  FinalMetrics final;
  std::string record_file;
  std::string record_checksum;

  bool failed() const;
};

RunSummary summarize(const RunRecord& rec, const std::string& record_file = {}, const std::string& checksum = {});

/// Best step per cell, chosen by mean final test loss and by mean Test-LRfit
/// over seeds. Failed or diverged runs count as +inf. Ties go to the smaller
/// step.
struct CellSummary {
  Method method = Method::GN;
  std::string activation;
  double tau0 = 0.0;
  Eigen::Index N = 0;
  Eigen::Index M = 0;
  std::size_t runs = 0;
  std::size_t failed_runs = 0;
  std::optional<double> best_step_by_test;
  double test_loss_at_best = std::nan("");
  double test_lrfit_at_best_test = std::nan("");
  std::optional<double> best_step_by_lrfit;
  double test_lrfit_at_best = std::nan("");
  double wcd_at_best_lrfit = std::nan("");
};

std::vector<CellSummary> summarize_cells(const std::vector<RunSummary>& runs);

/// Index of the run with minimal metric (ties: smaller step), over runs whose
/// metric is finite. Returns nullopt when none is.
std::optional<std::size_t> select_best(const std::vector<RunSummary>& runs, bool by_lrfit);

struct SweepResult {
  std::vector<RunSummary> runs;
  std::vector<CellSummary> cells;
  std::filesystem::path runs_csv;
  std::filesystem::path summary_csv;
};

/// Runs every grid point (up to `parallelism` at a time), writes one
/// RunRecord per run under `out_dir`, then `runs.csv` and `summary.csv`.
SweepResult run_sweep(const SweepSpec& spec, int parallelism, const std::filesystem::path& out_dir);

std::string runs_csv(const std::vector<RunSummary>& runs);
std::string cells_csv(const std::vector<CellSummary>& cells);

/// Checks every record referenced by runs.csv exists and matches its checksum.
void validate_sweep_dir(const std::filesystem::path& dir);

/// Loads every `*.record.json` in `dir`, sorted by file name.
std::vector<RunRecord> load_records(const std::filesystem::path& dir);

struct FigureOptions {
  std::optional<double> tau0;  // fig1-right / fig4-right: fixed tau0 (default: smallest present)
};

/// Figures: "fig1-left", "fig1-right", "fig2", "fig4-right", "fig5", or "all".
/// Writes `<out_dir>/<figure>.csv` files and returns their paths.
std::vector<std::filesystem::path> emit_figures(const std::filesystem::path& records_dir, const std::string& figure,
                                                const std::filesystem::path& out_dir, const FigureOptions& opts = {});

/// Least-squares line through (x, y); returns {slope, intercept}.
std::pair<double, double> fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// CSV bodies, exposed for tests.
std::string figure_csv(const std::vector<RunRecord>& records, const std::string& figure, const FigureOptions& opts = {});

}  // namespace gnfeat
