// Command-line harness: data generation, single runs, sweeps, refits,
// diagnostics and figure data.

#include <cstdlib>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "gnfeat/error.hpp"
#include "gnfeat/experiments.hpp"
#include "gnfeat/serialize.hpp"

using namespace gnfeat;
using nlohmann::json;

namespace {

json finite_or_string(double x) {
  if (std::isfinite(x)) return x;
  return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
}

std::filesystem::path resolve_out(const std::string& flag) {
  return flag.empty() ? default_output_dir() : std::filesystem::path(flag);
}

int cmd_gen_data(const TeacherSpec& spec, Eigen::Index N, Eigen::Index N_test, std::uint64_t data_seed,
                 const std::string& out) {
  const Dataset ds = make_teacher_dataset(spec, N, N_test, data_seed);
  const std::filesystem::path stem = std::filesystem::path(out).is_absolute() || out.find('/') != std::string::npos
                                         ? std::filesystem::path(out)
                                         : default_output_dir() / out;
  save_dataset(ds, stem);
  std::cout << json{{"manifest", manifest_path(stem).string()},
                    {"payload", payload_path(stem).string()},
                    {"N", ds.X_train.rows()},
                    {"N_test", ds.X_test.rows()},
                    {"d", ds.input_dim()},
                    {"train_attempt", ds.manifest.train_attempt}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_train(const std::string& config, const std::vector<std::string>& sets, const std::string& out_flag) {
  const RunConfig cfg = load_run_config(config, sets);
  const auto out = resolve_out(out_flag);
  TwoLayerNet net;
  RunRecord rec = run_experiment(cfg, &net);
  const auto path = write_run_record(rec, out);
  if (rec.stop_reason != StopReason::Failed && net.width() > 0) save_net(net, out / (rec.config.name + ".net"));
  std::cout << json{{"record", path.string()},
                    {"stop_reason", to_string(rec.stop_reason)},
                    {"iterations", rec.iterations},
                    {"train_loss", finite_or_string(rec.final.train_loss)},
                    {"test_loss", finite_or_string(rec.final.test_loss)},
                    {"test_lrfit", finite_or_string(rec.final.test_lrfit)},
                    {"wcd", finite_or_string(rec.final.wcd)},
                    {"error", rec.error}}
                   .dump(2)
            << "\n";
  return rec.stop_reason == StopReason::Failed ? 1 : 0;
}

int cmd_sweep(const std::string& spec_file, const std::vector<std::string>& sets, int parallelism,
              const std::string& out_flag, bool dry_run) {
  const SweepSpec spec = load_sweep_spec(spec_file, sets);
  const auto runs = expand_sweep(spec);
  if (dry_run) {
    for (const auto& r : runs) std::cout << r.name << "\n";
    std::cout << runs.size() << " runs\n";
    return 0;
  }
  const auto out = resolve_out(out_flag) / spec.name;
  const SweepResult res = run_sweep(spec, parallelism, out);
  std::size_t failed = 0;
  for (const auto& r : res.runs) failed += r.failed() ? 1 : 0;
  std::cout << json{{"runs", res.runs.size()},
                    {"failed_or_diverged", failed},
                    {"runs_csv", res.runs_csv.string()},
                    {"summary_csv", res.summary_csv.string()}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_refit(const std::string& net_stem, const std::string& data_stem) {
  const TwoLayerNet net = load_net(net_stem);
  const Dataset ds = load_dataset(data_stem);
  const LinearFit fit = min_norm_linear_fit(net.u, net.act, net.scaling, ds.X_train, ds.Y_train);
  const TwoLayerNet refit(fit.v, net.u, net.scaling, net.act);
  std::cout << json{{"test_lrfit", finite_or_string(mse_loss(forward(refit, ds.X_test), ds.Y_test))},
                    {"refit_train_loss", finite_or_string(mse_loss(forward(refit, ds.X_train), ds.Y_train))},
                    {"test_loss", finite_or_string(mse_loss(forward(net, ds.X_test), ds.Y_test))},
                    {"rank", fit.rank},
                    {"normal_residual", fit.normal_residual}}
                   .dump(2)
            << "\n";
  return 0;
}

struct DiagnoseOptions {
  std::string hessian = "identity";
  double alpha = 0.0;
  double R = 1.0;
  double C_R = 1.0;
};

int cmd_diagnose(const std::string& net_stem, const std::string& data_stem, const DiagnoseOptions& o) {
  const TwoLayerNet net = load_net(net_stem);
  const Dataset ds = load_dataset(data_stem);
  const auto N = ds.X_train.rows();
  const HessianMode mode = parse_hessian_mode(o.hessian);
  const HessianBounds hb = hessian_bounds(mode, N);

  const Matrix A = ntk_matrix(net, ds.X_train);
  Eigen::SelfAdjointEigenSolver<Matrix> es(A, Eigen::EigenvaluesOnly);
  const double sigma_star = smallest_eig_psd(A);
  const double sigma0_sq = smallest_eig_psd(gram_matrix(net.u, net.act, ds.X_train));

  TheoryConstants tc;
  tc.mu = tc.L_smooth = 1.0 / static_cast<double>(N);
  tc.mu_H = hb.mu_H;
  tc.L_H = hb.L_H;
  tc.alpha = o.alpha;
  tc.sigma0 = std::sqrt(sigma0_sq);
  tc.R = o.R;
  tc.C_R = o.C_R;
  tc.N = N;

  json rates = json::object();
  json threshold = nullptr;
  if (tc.sigma0 > 0.0) {
    const TheoryRates r = theory_rates(tc, sigma_star);
    rates = {{"mu_GN", r.mu_GN}, {"mu_GF", *r.mu_GF}};
    threshold = blowup_threshold(tc);
  }
  const LossAndGrad lg = mse_loss_and_grad(forward(net, ds.X_train), ds.Y_train);
  const double grad_norm = lg.grad.norm();
  const PlTerms pl = pl_terms(net.v, net.u, net.act, net.scaling, ds.X_train, ds.Y_train);
  const DampingValue dv = damping_value(net, ds.X_train, DampingConfig{});

  std::cout << json{{"N", N},
                    {"M", net.width()},
                    {"train_loss", lg.loss},
                    {"grad_f_norm", grad_norm},
                    {"ntk",
                     {{"sigma_star", sigma_star},
                      {"lambda_max", es.eigenvalues()(es.eigenvalues().size() - 1)},
                      {"epsilon_default", dv.epsilon}}},
                    {"gram_sigma0_sq", sigma0_sq},
                    {"theory_rates", rates},
                    {"blowup_threshold", threshold},
                    {"near_optimal_v", threshold.is_null() ? json(nullptr) : json(grad_norm < threshold.get<double>())},
                    {"pl", {{"grad_norm_sq", pl.grad_norm_sq}, {"rhs", pl.rhs}, {"residual", pl.residual()}}}}
                   .dump(2)
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gauss-Newton feature learning experiments"};
  app.require_subcommand(1);

  // gen-data
  TeacherSpec teacher;
  std::string teacher_act = "relu", teacher_scaling = "mean_field";
  double teacher_beta = 1.0;
  Eigen::Index N = kDefaultTrainSize, N_test = kDefaultTestSize;
  std::uint64_t data_seed = 0;
  std::string data_out = "dataset";
  auto* gen = app.add_subcommand("gen-data", "Generate a teacher dataset");
  gen->add_option("--d", teacher.d, "Input dimension")->capture_default_str();
  gen->add_option("--M-star", teacher.M_star, "Teacher width")->capture_default_str();
  gen->add_option("--activation", teacher_act, "relu or silu")->capture_default_str();
  gen->add_option("--beta", teacher_beta, "SiLU beta")->capture_default_str();
  gen->add_option("--scaling", teacher_scaling, "mean_field or ntk")->capture_default_str();
  gen->add_option("--teacher-seed", teacher.seed)->capture_default_str();
  gen->add_option("--data-seed", data_seed)->capture_default_str();
  gen->add_option("--N", N, "Training set size")->capture_default_str();
  gen->add_option("--N-test", N_test, "Test set size")->capture_default_str();
  gen->add_option("-o,--out", data_out, "Output stem (bare names go under the output directory)");

  // train
  std::string config;
  std::vector<std::string> sets;
  std::string out_dir;
  auto* train_cmd = app.add_subcommand("train", "Run one experiment from a JSON config");
  train_cmd->add_option("config", config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--set", sets, "Override a config field, e.g. --set train.step_size=0.1");
  train_cmd->add_option("-o,--out", out_dir, std::string("Output directory (default $") + kOutputDirEnv + " or runs)");

  // sweep
  std::string sweep_file;
  std::vector<std::string> sweep_sets;
  std::string sweep_out;
  int parallelism = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  bool dry_run = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a grid of experiments");
  sweep_cmd->add_option("spec", sweep_file, "Sweep spec (JSON)")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--set", sweep_sets, "Override a spec field");
  sweep_cmd->add_option("-j,--parallelism", parallelism, "Concurrent runs")->capture_default_str();
  sweep_cmd->add_option("-o,--out", sweep_out, "Output directory");
  sweep_cmd->add_flag("--dry-run", dry_run, "List the runs without executing them");

  // refit
  std::string net_stem, data_stem;
  auto* refit_cmd = app.add_subcommand("refit", "Test-LRfit of a saved net on a saved dataset");
  refit_cmd->add_option("--net", net_stem, "Net stem")->required();
  refit_cmd->add_option("--data", data_stem, "Dataset stem")->required();

  // diagnose
  DiagnoseOptions dopts;
  std::string dnet, ddata;
  auto* diag_cmd = app.add_subcommand("diagnose", "Spectral report and theory constants for a saved net");
  diag_cmd->add_option("--net", dnet, "Net stem")->required();
  diag_cmd->add_option("--data", ddata, "Dataset stem")->required();
  diag_cmd->add_option("--hessian", dopts.hessian, "identity or mse_hessian")->capture_default_str();
  diag_cmd->add_option("--alpha", dopts.alpha, "Damping alpha")->capture_default_str();
  diag_cmd->add_option("--R", dopts.R, "Ball radius")->capture_default_str();
  diag_cmd->add_option("--C-R", dopts.C_R, "Jacobian derivative bound on the ball")->capture_default_str();

  // figures
  std::string records_dir, figure = "all", fig_out;
  std::optional<double> fig_tau0;
  auto* fig_cmd = app.add_subcommand("figures", "Emit plot-ready CSVs from run records");
  fig_cmd->add_option("records", records_dir, "Directory of run records")->required()->check(CLI::ExistingDirectory);
  fig_cmd->add_option("--figure", figure, "fig1-left, fig1-right, fig2, fig4-right, fig5 or all")->capture_default_str();
  fig_cmd->add_option("--tau0", fig_tau0, "Fixed tau0 for fig1-right and fig4-right");
  fig_cmd->add_option("-o,--out", fig_out, "Output directory (default: <records>/figures)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      teacher.act = {parse_activation_kind(teacher_act), teacher_beta};
      teacher.scaling = parse_scaling(teacher_scaling);
      return cmd_gen_data(teacher, N, N_test, data_seed, data_out);
    }
    if (*train_cmd) return cmd_train(config, sets, out_dir);
    if (*sweep_cmd) return cmd_sweep(sweep_file, sweep_sets, parallelism, sweep_out, dry_run);
    if (*refit_cmd) return cmd_refit(net_stem, data_stem);
    if (*diag_cmd) return cmd_diagnose(dnet, ddata, dopts);
    if (*fig_cmd) {
      const auto out = fig_out.empty() ? std::filesystem::path(records_dir) / "figures" : std::filesystem::path(fig_out);
      for (const auto& p : emit_figures(records_dir, figure, out, FigureOptions{fig_tau0})) std::cout << p.string() << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
