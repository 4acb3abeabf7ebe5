#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "gnfeat/error.hpp"
#include "gnfeat/experiments.hpp"
#include "test_util.hpp"

using namespace gnfeat;
using nlohmann::json;

namespace {

RunConfig small_config(Method m) {
  RunConfig c;
  c.name = "small";
  c.method = m;
  c.data.teacher.d = 4;
  c.data.teacher.M_star = 2;
  c.data.teacher.seed = 1;
  c.data.N = 12;
  c.data.N_test = 40;
  c.data.data_seed = 2;
  c.student.M = 30;
  c.student.tau0 = 1.0;
  c.student.init_seed = 3;
  c.train.step_size = 1.0;
  c.train.max_iters = 20;
  c.train.log_every = 0;
  c.resolve_defaults();
  return c;
}

RunSummary fake(Method m, double tau0, std::optional<double> step, std::uint64_t seed, double test, double lrfit,
                StopReason sr = StopReason::MaxIters) {
  RunSummary r;
  r.name = to_string(m) + "_" + std::to_string(tau0) + "_" + std::to_string(step.value_or(0)) + "_" +
           std::to_string(seed);
  r.method = m;
  r.activation = "relu";
  r.tau0 = tau0;
  r.step = step;
  r.N = 10;
  r.M = 20;
  r.seed = seed;
  r.stop_reason = sr;
  r.final.test_loss = test;
  r.final.test_lrfit = lrfit;
  r.final.wcd = 0.5;
  return r;
}

RunRecord fake_record(Method m, double tau0, std::optional<double> step, Eigen::Index N, std::uint64_t seed,
                      double test) {
  RunRecord r;
  r.config = small_config(m);
  r.config.student.tau0 = tau0;
  if (step) r.config.train.step_size = *step;
  r.config.data.N = N;
  r.config.student.init_seed = seed;
  r.config.name = "fake";
  r.final.train_loss = 0.0;
  r.final.test_loss = test;
  r.final.test_lrfit = test;
  r.final.wcd = 0.1;
  r.trace.push({0, 0.0, 1.0, 1.0, 1.0, 0.5, 0.0});
  r.trace.push({10, 0.1, 0.0, test, test, 0.1, 1.0});
  return r;
}

}  // namespace

TEST_CASE("run config JSON round trip and defaults") {
  const RunConfig c = small_config(Method::GN);
  const json j = to_json(c);
  CHECK(to_json(run_config_from_json(j)) == j);
  CHECK(c.train.log_every == 1);  // max(1, 20 / 500)

  RunConfig big = small_config(Method::GD);
  big.train.max_iters = 100000;
  big.train.log_every = 0;
  big.resolve_defaults();
  CHECK(big.train.log_every == 200);
  CHECK(big.train.method == Method::GD);

  // minimal document: everything else defaulted
  const RunConfig d = run_config_from_json(json{{"name", "x"}, {"method", "RF"}});
  CHECK(d.student.M == kDefaultStudentWidth);
  CHECK(d.data.N == kDefaultTrainSize);
  CHECK(d.train.damping.floor == 1e-7);
}

TEST_CASE("config errors name the offending field") {
  CHECK_THROWS_WITH_AS(run_config_from_json(json{{"method", "GN"}, {"stduent", json::object()}}),
                       doctest::Contains("stduent"), ConfigError);
  CHECK_THROWS_WITH_AS(run_config_from_json(json{{"train", {{"step_size", -1.0}}}}),
                       doctest::Contains("step_size"), ConfigError);
  CHECK_THROWS_WITH_AS(run_config_from_json(json{{"student", {{"M", "wide"}}}}), doctest::Contains("student.M"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(run_config_from_json(json{{"method", "SGD"}}), doctest::Contains("method"), ConfigError);
  CHECK_THROWS_WITH_AS(run_config_from_json(json{{"train", {{"damping", {{"floor", 0.0}}}}}}),
                       doctest::Contains("floor"), ConfigError);
}

TEST_CASE("overrides") {
  json j = to_json(small_config(Method::GN));
  apply_overrides(j, {"train.step_size=0.25", "student.activation=silu", "name=other", "data.dataset=foo/bar"});
  const RunConfig c = run_config_from_json(j);
  CHECK(c.train.step_size == 0.25);
  CHECK(c.student.act.kind == ActivationKind::SiLU);
  CHECK(c.name == "other");
  CHECK(c.data.dataset_path == std::optional<std::string>("foo/bar"));
  CHECK_THROWS_AS(apply_overrides(j, {"no_equals_sign"}), ConfigError);
}

TEST_CASE("config files") {
  test_util::TempDir dir;
  test_util::spit(dir.path / "c.json", to_json(small_config(Method::GD)).dump());
  const RunConfig c = load_run_config(dir.path / "c.json", {"train.max_iters=3"});
  CHECK(c.method == Method::GD);
  CHECK(c.train.max_iters == 3);
  test_util::spit(dir.path / "bad.json", "{");
  CHECK_THROWS_AS(load_run_config(dir.path / "bad.json"), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir.path / "missing.json"), ConfigError);
}

TEST_CASE("RF run interpolates and Test-LRfit equals its test loss") {
  const RunRecord r = run_experiment(small_config(Method::RF));
  CHECK(r.error == "");
  CHECK(r.stop_reason == StopReason::Converged);
  CHECK(r.final.train_loss <= 1e-8);
  CHECK(r.final.test_lrfit == r.final.test_loss);
  CHECK(r.trace.entries.size() == 1);
  CHECK(r.iterations == 0);
}

TEST_CASE("GN run with a zero budget reports metrics at initialization") {
  RunConfig c = small_config(Method::GN);
  c.train.max_iters = 0;
  const RunRecord r = run_experiment(c);
  CHECK(r.stop_reason == StopReason::MaxIters);
  CHECK(r.iterations == 0);
  REQUIRE(r.trace.entries.size() == 1);
  CHECK(r.trace.entries[0].iter == 0);
  CHECK(r.final.train_loss == r.initial.train_loss);
  CHECK(r.final.test_lrfit == r.initial.test_lrfit);
}

TEST_CASE("GN and GD runs log on schedule") {
  for (Method m : {Method::GN, Method::GD}) {
    RunConfig c = small_config(m);
    c.train.max_iters = 10;
    c.train.log_every = 3;
    c.train.step_size = m == Method::GN ? 1.0 : 0.5;
    const RunRecord r = run_experiment(c);
    CHECK(r.error == "");
    std::vector<std::int64_t> iters;
    for (const auto& e : r.trace.entries) iters.push_back(e.iter);
    CHECK(iters == std::vector<std::int64_t>{0, 3, 6, 9, 10});
    CHECK(r.final.train_loss < r.initial.train_loss);
    CHECK(std::isfinite(r.final.sigma_star_A));
  }
}

TEST_CASE("runtime failures are recorded, not thrown") {
  RunConfig c = small_config(Method::GN);
  c.data.dataset_path = "/nonexistent/dataset";
  const RunRecord r = run_experiment(c);
  CHECK(r.stop_reason == StopReason::Failed);
  CHECK(r.error.find("nonexistent") != std::string::npos);

  RunConfig d = small_config(Method::GD);
  d.train.step_size = 1e6;
  d.train.max_iters = 100;
  const RunRecord div = run_experiment(d);
  CHECK(div.stop_reason == StopReason::Diverged);
  CHECK(std::isnan(div.final.test_loss));
}

TEST_CASE("records are deterministic and round-trip") {
  test_util::TempDir dir;
  const RunConfig c = small_config(Method::GN);
  const auto p1 = write_run_record(run_experiment(c), dir.path / "a");
  const auto p2 = write_run_record(run_experiment(c), dir.path / "b");
  const json j1 = json::parse(test_util::slurp(p1)), j2 = json::parse(test_util::slurp(p2));
  CHECK(strip_wall_clock(j1) == strip_wall_clock(j2));
  CHECK(j1.contains("wall_clock"));

  const RunRecord back = read_run_record(p1);
  CHECK(to_json(back.config) == to_json(c));
  CHECK(back.trace.entries.size() == run_experiment(c).trace.entries.size());
  CHECK(record_to_json(back) == j1);

  // the saved config reproduces the run
  const RunRecord again = run_experiment(back.config);
  CHECK(again.final.test_loss == back.final.test_loss);

  // tampered trace
  std::string t = test_util::slurp(trace_path(dir.path / "a", c.name));
  t[30] ^= 0x10;
  test_util::spit(trace_path(dir.path / "a", c.name), t);
  CHECK_THROWS_AS(read_run_record(p1), ChecksumError);
}

TEST_CASE("trace encoding") {
  MetricTrace t;
  t.push({0, 0.5, 1.0, 2.0, std::nan(""), 0.3, INFINITY});
  t.push({7, 1.5, 0.5, 1.0, 0.25, 0.2, 3.0});
  const MetricTrace back = decode_trace(encode_trace(t));
  REQUIRE(back.entries.size() == 2);
  CHECK(std::isnan(back.entries[0].test_lrfit));
  CHECK(std::isinf(back.entries[0].sigma_star_A));
  CHECK(back.entries[1].iter == 7);
  CHECK(back.entries[1].test_lrfit == 0.25);
  std::string bytes = encode_trace(t);
  CHECK_THROWS_AS(decode_trace(bytes.substr(0, bytes.size() - 3)), MalformedFileError);
  bytes[0] = 'x';
  CHECK_THROWS_AS(decode_trace(bytes), MalformedFileError);
}

TEST_CASE("sweep expansion") {
  SweepSpec spec;
  spec.name = "paper";
  spec.base = small_config(Method::GN);
  spec.tau0_grid = {1e-3, 1.0};
  spec.step_grid = {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
  spec.N_grid = {12};
  spec.M_grid = {30};
  spec.seeds = {0};
  const auto runs = expand_sweep(spec);
  CHECK(runs.size() == 2 * (7 + 7 + 1));
  std::map<std::pair<std::string, double>, int> rows;
  std::set<std::string> names;
  for (const auto& r : runs) {
    ++rows[{to_string(r.method), r.student.tau0}];
    names.insert(r.name);
    if (r.method == Method::GN) CHECK(r.train.max_iters == spec.budget_gn);
    if (r.method == Method::GD) CHECK(r.train.max_iters == spec.budget_gd);
    CHECK(r.data.teacher.seed == r.student.init_seed);
  }
  CHECK(names.size() == runs.size());
  CHECK(rows[{"GN", 1e-3}] == 7);
  CHECK(rows[{"GD", 1.0}] == 7);
  CHECK(rows[{"RF", 1.0}] == 1);

  spec.methods = {};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("best step selection") {
  std::vector<RunSummary> runs{fake(Method::GN, 1, 1.0, 0, 0.5, 0.2), fake(Method::GN, 1, 0.1, 0, 0.5, 0.3),
                               fake(Method::GN, 1, 10.0, 0, 0.4, 0.1, StopReason::Diverged),
                               fake(Method::GN, 1, 100.0, 0, 0.7, 0.05)};
  // tie at 0.5 goes to the smaller step; the diverged run is excluded
  CHECK(select_best(runs, false) == std::optional<std::size_t>(1));
  CHECK(select_best(runs, true) == std::optional<std::size_t>(3));
  CHECK(!select_best({fake(Method::GD, 1, 1.0, 0, NAN, NAN)}, false).has_value());

  const auto cells = summarize_cells(runs);
  REQUIRE(cells.size() == 1);
  CHECK(cells[0].runs == 4);
  CHECK(cells[0].failed_runs == 1);
  CHECK(cells[0].best_step_by_test == std::optional<double>(0.1));
  CHECK(cells[0].best_step_by_lrfit == std::optional<double>(100.0));
  CHECK(cells[0].test_lrfit_at_best == 0.05);
}

TEST_CASE("cell summaries average over seeds") {
  std::vector<RunSummary> runs{fake(Method::GD, 1, 1.0, 0, 0.2, 0.2), fake(Method::GD, 1, 1.0, 1, 0.4, 0.4),
                               fake(Method::GD, 1, 2.0, 0, 0.25, 0.1), fake(Method::GD, 1, 2.0, 1, 0.25, 0.7),
                               fake(Method::RF, 1, std::nullopt, 0, 0.9, 0.9)};
  const auto cells = summarize_cells(runs);
  REQUIRE(cells.size() == 2);
  const auto& gd = cells[0].method == Method::GD ? cells[0] : cells[1];
  const auto& rf = cells[0].method == Method::RF ? cells[0] : cells[1];
  CHECK(gd.best_step_by_test == std::optional<double>(2.0));
  CHECK(gd.test_loss_at_best == 0.25);
  CHECK(gd.best_step_by_lrfit == std::optional<double>(1.0));
  CHECK(!rf.best_step_by_test.has_value());
  CHECK(rf.test_loss_at_best == 0.9);
  const std::string csv = cells_csv(cells);
  CHECK(csv.find("method,activation,tau0") == 0);
}

TEST_CASE("1x1 sweep and parallelism independence") {
  test_util::TempDir dir;
  SweepSpec spec;
  spec.name = "tiny";
  spec.methods = {Method::GN};
  spec.base = small_config(Method::GN);
  spec.tau0_grid = {1.0};
  spec.step_grid = {1.0};
  spec.N_grid = {12};
  spec.M_grid = {30};
  spec.budget_gn = 5;
  const auto one = run_sweep(spec, 1, dir.path / "one");
  CHECK(one.runs.size() == 1);
  CHECK(one.cells.size() == 1);
  const RunRecord direct = run_experiment(expand_sweep(spec)[0]);
  const RunRecord stored = read_run_record(dir.path / "one" / one.runs[0].record_file);
  CHECK(strip_wall_clock(record_to_json(direct)) == strip_wall_clock(record_to_json(stored)));
  validate_sweep_dir(dir.path / "one");

  spec.methods = {Method::GN, Method::GD, Method::RF};
  spec.step_grid = {0.5, 1.0};
  spec.seeds = {0, 1};
  const auto a = run_sweep(spec, 1, dir.path / "a");
  const auto b = run_sweep(spec, 3, dir.path / "b");
  CHECK(test_util::slurp(a.runs_csv) == test_util::slurp(b.runs_csv));
  CHECK(test_util::slurp(a.summary_csv) == test_util::slurp(b.summary_csv));
  validate_sweep_dir(dir.path / "b");

  // tampering is detected
  const auto rec = dir.path / "b" / b.runs[0].record_file;
  json j = json::parse(test_util::slurp(rec));
  j["final"]["test_loss"] = 123.0;
  test_util::spit(rec, j.dump(2));
  CHECK_THROWS_AS(validate_sweep_dir(dir.path / "b"), ChecksumError);
}

TEST_CASE("figure CSVs") {
  std::vector<RunRecord> recs;
  for (double tau : {1e-3, 1.0}) {
    for (double step : {0.1, 1.0}) recs.push_back(fake_record(Method::GN, tau, step, 12, 0, step * tau + 0.5));
    recs.push_back(fake_record(Method::RF, tau, std::nullopt, 12, 0, 1.0));
  }
  SUBCASE("fig1-left has one row per cell") {
    const std::string csv = figure_csv(recs, "fig1-left");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 4);
    CHECK(csv == figure_csv(recs, "fig1-left"));
  }
  SUBCASE("fig1-right at a fixed tau0") {
    const std::string csv = figure_csv(recs, "fig1-right", {1.0});
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3);
    CHECK_THROWS_AS(figure_csv(recs, "fig1-right", {5.0}), Error);
  }
  SUBCASE("fig2 row count equals trace length") {
    const std::string csv = figure_csv({recs[0]}, "fig2");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + static_cast<long>(recs[0].trace.entries.size()));
  }
  SUBCASE("fig4-right lists GN traces only") {
    const std::string csv = figure_csv(recs, "fig4-right");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 4 * 2);
  }
  SUBCASE("missing series are named") {
    auto partial = recs;
    partial.erase(partial.begin() + 1);  // GN, tau0 = 1e-3, step = 1
    try {
      figure_csv(partial, "fig1-left");
      FAIL("expected an error");
    } catch (const Error& e) {
      const std::string msg = e.what();
      CHECK(msg.find("GN") != std::string::npos);
      CHECK(msg.find("tau0=0.001") != std::string::npos);
      CHECK(msg.find("step=1") != std::string::npos);
    }
  }
  SUBCASE("unknown figure") { CHECK_THROWS_AS(figure_csv(recs, "fig9"), InvalidArgument); }
}

TEST_CASE("fig5 slope on an exact power law") {
  std::vector<RunRecord> recs;
  for (Eigen::Index N : {100, 200, 500, 1000, 1500}) {
    const double loss = 3.0 / std::sqrt(static_cast<double>(N));
    recs.push_back(fake_record(Method::GN, 1e-3, 1.0, N, 0, loss));
    recs.push_back(fake_record(Method::GN, 1e-3, 10.0, N, 0, 2 * loss));  // never the best step
  }
  const std::string csv = figure_csv(recs, "fig5");
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cols.push_back(cell);
    REQUIRE(cols.size() == 11);
    CHECK(std::abs(std::stod(cols[9]) + 0.5) < 1e-6);
    CHECK(std::stod(cols[5]) == 1.0);
  }
  CHECK(rows == 5);

  const auto [slope, intercept] = fit_line({0, 1, 2}, {1, 3, 5});
  CHECK(slope == doctest::Approx(2.0));
  CHECK(intercept == doctest::Approx(1.0));
  CHECK_THROWS_AS(fit_line({1, 1}, {2, 3}), InvalidArgument);
}

TEST_CASE("emit_figures writes files and is repeatable") {
  test_util::TempDir dir;
  RunConfig c = small_config(Method::GN);
  c.train.max_iters = 4;
  write_run_record(run_experiment(c), dir.path / "recs");
  c.method = Method::RF;
  c.name = "rf";
  write_run_record(run_experiment(c), dir.path / "recs");
  const auto files = emit_figures(dir.path / "recs", "all", dir.path / "out");
  CHECK(files.size() == 5);
  const std::string first = test_util::slurp(dir.path / "out" / "fig2.csv");
  emit_figures(dir.path / "recs", "all", dir.path / "out");
  CHECK(test_util::slurp(dir.path / "out" / "fig2.csv") == first);
  CHECK_THROWS_AS(emit_figures(dir.path / "out", "fig2", dir.path / "x"), Error);
}
