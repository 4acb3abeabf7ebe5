#include "gnfeat/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>
#include <tuple>

#include "gnfeat/error.hpp"
#include "gnfeat/prng.hpp"
#include "gnfeat/serialize.hpp"

namespace gnfeat {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

constexpr char kTraceMagic[8] = {'G', 'N', 'F', 'T', 'R', 'A', 'C', 'E'};
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// JSON has no NaN/inf; non-finite values are written as strings.
json number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

double number_from(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "nan") return kNaN;
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  if (j.is_null()) return kNaN;
  throw MalformedFileError("expected a number, got " + j.dump());
}

json metrics_json(const FinalMetrics& m) {
  return json{{"train_loss", number(m.train_loss)},
              {"test_loss", number(m.test_loss)},
              {"test_lrfit", number(m.test_lrfit)},
              {"wcd", number(m.wcd)},
              {"sigma_star_A", number(m.sigma_star_A)}};
}

FinalMetrics metrics_from(const json& j) {
  FinalMetrics m;
  m.train_loss = number_from(j.at("train_loss"));
  m.test_loss = number_from(j.at("test_loss"));
  m.test_lrfit = number_from(j.at("test_lrfit"));
  m.wcd = number_from(j.at("wcd"));
  m.sigma_star_A = number_from(j.at("sigma_star_A"));
  return m;
}

FinalMetrics as_final(const MetricEntry& e) { return {e.train_loss, e.test_loss, e.test_lrfit, e.wcd, e.sigma_star_A}; }

void put_u64(std::string& out, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return x;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw MalformedFileError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string fmt_num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string fmt_short(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

class Evaluator {
 public:
  Evaluator(const Dataset& ds, const RunConfig& cfg) : ds_(ds), cfg_(cfg) {}

  MetricEntry operator()(const TwoLayerNet& net, std::int64_t iter, double train_loss) const {
    MetricEntry e;
    e.iter = iter;
    e.train_loss = train_loss;
    e.test_loss = ds_.X_test.rows() > 0 ? mse_loss(forward(net, ds_.X_test), ds_.Y_test) : kNaN;
    e.test_lrfit = kNaN;
    if (cfg_.metrics.test_lrfit && ds_.X_test.rows() > 0) {
      try {
        e.test_lrfit = test_lrfit(net.u, net.act, net.scaling, {ds_.X_train, ds_.Y_train}, {ds_.X_test, ds_.Y_test});
      } catch (const Error&) {
      }
    }
    try {
      e.wcd = wcd(net.u, ds_.teacher.u);
    } catch (const Error&) {
      e.wcd = kNaN;
    }
    e.sigma_star_A = kNaN;
    if (cfg_.metrics.sigma_star) {
      try {
        e.sigma_star_A = smallest_eig_ntk(net, ds_.X_train);
      } catch (const Error&) {
      }
    }
    return e;
  }

 private:
  const Dataset& ds_;
  const RunConfig& cfg_;
};

std::string trace_metrics_checksum(const MetricTrace& trace) {
  MetricTrace copy = trace;
  for (auto& e : copy.entries) e.wall_seconds = 0.0;
  return checksum_hex(fnv1a64(encode_trace(copy)));
}

// Checksum of a record file with its wall-clock fields removed, so that it
// only depends on the run's content.
std::string record_content_checksum(const std::filesystem::path& record_file) {
  json j;
  try {
    j = json::parse(read_bytes(record_file));
  } catch (const json::exception& e) {
    throw MalformedFileError(record_file.string() + ": " + e.what());
  }
  return checksum_hex(fnv1a64(strip_wall_clock(std::move(j)).dump()));
}

}  // namespace

Dataset materialize_data(const DataSource& src) {
  if (src.dataset_path) return load_dataset(*src.dataset_path);
  return make_teacher_dataset(src.teacher, src.N, src.N_test, src.data_seed);
}

RunRecord run_experiment(const RunConfig& cfg_in, TwoLayerNet* final_net) {
  const auto t_start = Clock::now();
  RunRecord rec;
  rec.config = cfg_in;
  rec.config.resolve_defaults();
  const RunConfig& cfg = rec.config;
  try {
    cfg.validate();
    const Dataset ds = materialize_data(cfg.data);
    const TwoLayerNet net0 = init_student(cfg.student.init_seed, cfg.student.M, ds.input_dim(), cfg.student.tau0,
                                          cfg.student.act, cfg.student.scaling);
    const Evaluator evaluate(ds, cfg);

    if (cfg.method == Method::RF) {
      rec.initial = as_final(evaluate(net0, 0, mse_loss(forward(net0, ds.X_train), ds.Y_train)));
      const auto t_fit = Clock::now();
      const LinearFit fit = min_norm_linear_fit(net0.u, net0.act, net0.scaling, ds.X_train, ds.Y_train);
      rec.wall_seconds_train = seconds_since(t_fit);
      if (fit.warning) {
        std::clog << "gnfeat: " << cfg.name << ": least-squares residual " << fit.normal_residual
                  << " exceeds tolerance\n";
      }
      TwoLayerNet net(fit.v, net0.u, net0.scaling, net0.act);
      MetricEntry e = evaluate(net, 0, mse_loss(forward(net, ds.X_train), ds.Y_train));
      e.wall_seconds = rec.wall_seconds_train;
      rec.trace.push(e);
      rec.final = as_final(e);
      rec.stop_reason = StopReason::Converged;
      rec.iterations = 0;
      rec.reached_target = rec.final.train_loss < cfg.train.target_loss;
      if (final_net) *final_net = std::move(net);
    } else {
      TrainConfig tc = cfg.train;
      tc.method = cfg.method;
      const auto t_train = Clock::now();
      double metric_seconds = 0.0;
      const MetricHook hook = [&](const IterationState& s) {
        const auto t_hook = Clock::now();
        MetricEntry e = evaluate(s.net, s.iter, s.train_loss);
        metric_seconds += seconds_since(t_hook);
        e.wall_seconds = seconds_since(t_train) - metric_seconds;
        rec.trace.push(e);
      };
      TrainResult result = train(net0, ds.X_train, ds.Y_train, tc, hook);
      rec.wall_seconds_train = seconds_since(t_train) - metric_seconds;
      rec.stop_reason = result.stop_reason;
      rec.reached_target = result.reached_target;
      rec.iterations = result.iterations;
      rec.error = result.error;
      if (!rec.trace.entries.empty()) rec.initial = as_final(rec.trace.entries.front());
      const bool ended_on_log = !rec.trace.entries.empty() && rec.trace.entries.back().iter == result.iterations &&
                                (result.stop_reason == StopReason::Converged ||
                                 result.stop_reason == StopReason::MaxIters);
      if (ended_on_log) {
        rec.final = as_final(rec.trace.entries.back());
      } else {
        rec.final = FinalMetrics{};
        rec.final.train_loss = result.final_loss;
      }
      if (final_net) *final_net = std::move(result.net);
    }
  } catch (const Error& e) {
    rec.stop_reason = StopReason::Failed;
    rec.error = e.what();
  }
  rec.wall_seconds_total = seconds_since(t_start);
  return rec;
}

std::filesystem::path record_path(const std::filesystem::path& dir, const std::string& name) {
  return dir / (name + ".record.json");
}

std::filesystem::path trace_path(const std::filesystem::path& dir, const std::string& name) {
  return dir / (name + ".trace.bin");
}

std::string encode_trace(const MetricTrace& trace) {
  std::string out(kTraceMagic, 8);
  put_u64(out, static_cast<std::uint64_t>(kFormatVersion));
  put_u64(out, trace.entries.size());
  for (const MetricEntry& e : trace.entries) {
    put_u64(out, static_cast<std::uint64_t>(e.iter));
    for (double x : {e.wall_seconds, e.train_loss, e.test_loss, e.test_lrfit, e.wcd, e.sigma_star_A})
      put_u64(out, std::bit_cast<std::uint64_t>(x));
  }
  put_u64(out, fnv1a64(out));
  return out;
}

MetricTrace decode_trace(const std::string& bytes) {
  if (bytes.size() < 32) throw MalformedFileError("trace: truncated file");
  if (std::string_view(bytes.data(), 8) != std::string_view(kTraceMagic, 8)) {
    throw MalformedFileError("trace: bad magic bytes");
  }
  const std::uint64_t version = get_u64(bytes, 8);
  if (version != static_cast<std::uint64_t>(kFormatVersion)) {
    throw VersionMismatchError("trace: format_version " + std::to_string(version) + " is not supported");
  }
  const std::uint64_t count = get_u64(bytes, 16);
  constexpr std::size_t kEntry = 7 * 8;
  if (count > bytes.size() / kEntry + 1 || bytes.size() != 24 + count * kEntry + 8) {
    throw MalformedFileError("trace: size does not match entry count");
  }
  const std::size_t body = bytes.size() - 8;
  if (fnv1a64(std::string_view(bytes.data(), body)) != get_u64(bytes, body)) {
    throw ChecksumError("trace: checksum mismatch");
  }
  MetricTrace trace;
  std::size_t pos = 24;
  for (std::uint64_t k = 0; k < count; ++k) {
    MetricEntry e;
    e.iter = static_cast<std::int64_t>(get_u64(bytes, pos));
    double* fields[] = {&e.wall_seconds, &e.train_loss, &e.test_loss, &e.test_lrfit, &e.wcd, &e.sigma_star_A};
    for (int f = 0; f < 6; ++f) *fields[f] = std::bit_cast<double>(get_u64(bytes, pos + 8 + 8 * f));
    pos += kEntry;
    trace.push(e);
  }
  return trace;
}

json record_to_json(const RunRecord& rec) {
  const std::string trace_bytes = encode_trace(rec.trace);
  return json{{"format_version", kFormatVersion},
              {"kind", "run_record"},
              {"config", to_json(rec.config)},
              {"stop_reason", to_string(rec.stop_reason)},
              {"reached_target", rec.reached_target},
              {"iterations", rec.iterations},
              {"initial", metrics_json(rec.initial)},
              {"final", metrics_json(rec.final)},
              {"trace",
               {{"file", rec.config.name + ".trace.bin"},
                {"entries", rec.trace.entries.size()},
                {"checksum", checksum_hex(fnv1a64(trace_bytes))},
                {"metrics_checksum", trace_metrics_checksum(rec.trace)}}},
              {"seeds",
               {{"teacher", rec.config.data.teacher.seed},
                {"data", rec.config.data.data_seed},
                {"init", rec.config.student.init_seed}}},
              {"wall_clock", {{"total_seconds", rec.wall_seconds_total}, {"train_seconds", rec.wall_seconds_train}}},
              {"error", rec.error}};
}

json strip_wall_clock(json j) {
  j.erase("wall_clock");
  if (j.contains("trace")) j["trace"].erase("checksum");
  return j;
}

std::filesystem::path write_run_record(const RunRecord& rec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_bytes(trace_path(dir, rec.config.name), encode_trace(rec.trace));
  const auto path = record_path(dir, rec.config.name);
  write_bytes(path, record_to_json(rec).dump(2) + "\n");
  return path;
}

RunRecord read_run_record(const std::filesystem::path& record_file) {
  json j;
  try {
    j = json::parse(read_bytes(record_file));
  } catch (const json::exception& e) {
    throw MalformedFileError(record_file.string() + ": " + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != kFormatVersion) {
      throw VersionMismatchError(record_file.string() + ": unsupported format_version");
    }
    RunRecord rec;
    rec.config = run_config_from_json(j.at("config"));
    rec.stop_reason = parse_stop_reason(j.at("stop_reason").get<std::string>());
    rec.reached_target = j.at("reached_target").get<bool>();
    rec.iterations = j.at("iterations").get<std::int64_t>();
    rec.initial = metrics_from(j.at("initial"));
    rec.final = metrics_from(j.at("final"));
    rec.wall_seconds_total = j.at("wall_clock").at("total_seconds").get<double>();
    rec.wall_seconds_train = j.at("wall_clock").at("train_seconds").get<double>();
    rec.error = j.at("error").get<std::string>();
    const auto tfile = record_file.parent_path() / j.at("trace").at("file").get<std::string>();
    const std::string bytes = read_bytes(tfile);
    rec.trace_checksum = checksum_hex(fnv1a64(bytes));
    if (rec.trace_checksum != j.at("trace").at("checksum").get<std::string>()) {
      throw ChecksumError(tfile.string() + ": checksum does not match its record");
    }
    rec.trace = decode_trace(bytes);
    return rec;
  } catch (const json::exception& e) {
    throw MalformedFileError(record_file.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw MalformedFileError(record_file.string() + ": " + e.what());
  }
}

std::vector<RunConfig> expand_sweep(const SweepSpec& spec) {
  spec.validate();
  std::vector<RunConfig> out;
  std::vector<Activation> acts = spec.activations;
  if (acts.empty()) acts = {spec.base.student.act};
  for (Method method : spec.methods) {
    for (const Activation& act : acts) {
      for (Eigen::Index N : spec.N_grid) {
        for (Eigen::Index M : spec.M_grid) {
          for (double tau0 : spec.tau0_grid) {
            std::vector<std::optional<double>> steps;
            if (method == Method::RF) {
              steps.push_back(std::nullopt);
            } else {
              for (double s : spec.step_grid) steps.push_back(s);
            }
            for (const auto& step : steps) {
              for (std::uint64_t seed : spec.seeds) {
                RunConfig c = spec.base;
                c.method = method;
                c.student.act = act;
                if (!spec.activations.empty()) c.data.teacher.act = act;
                c.data.N = N;
                c.student.M = M;
                c.student.tau0 = tau0;
                c.data.teacher.seed = seed;
                c.data.data_seed = seed;
                c.student.init_seed = seed;
                std::string name = spec.name + "_" + to_string(method) + "_" + to_string(act.kind);
                if (act.kind == ActivationKind::SiLU) name += "-b" + fmt_short(act.beta);
                name += "_tau" + fmt_short(tau0);
                if (step) {
                  c.train.step_size = *step;
                  c.train.max_iters = method == Method::GN ? spec.budget_gn : spec.budget_gd;
                  c.train.log_every = spec.base.train.log_every;
                  name += "_lr" + fmt_short(*step);
                }
                name += "_N" + std::to_string(N) + "_M" + std::to_string(M) + "_s" + std::to_string(seed);
                c.name = name;
                c.resolve_defaults();
                out.push_back(std::move(c));
              }
            }
          }
        }
      }
    }
  }
  return out;
}

bool RunSummary::failed() const {
  return stop_reason == StopReason::Failed || stop_reason == StopReason::Diverged;
}

RunSummary summarize(const RunRecord& rec, const std::string& record_file, const std::string& checksum) {
  RunSummary s;
  s.name = rec.config.name;
  s.method = rec.config.method;
  s.activation = to_string(rec.config.student.act.kind);
  if (rec.config.student.act.kind == ActivationKind::SiLU) s.activation += "-b" + fmt_short(rec.config.student.act.beta);
  s.tau0 = rec.config.student.tau0;
  if (rec.config.method != Method::RF) s.step = rec.config.train.step_size;
  s.N = rec.config.data.N;
  s.M = rec.config.student.M;
  s.seed = rec.config.student.init_seed;
  s.stop_reason = rec.stop_reason;
  s.reached_target = rec.reached_target;
  s.iterations = rec.iterations;
  s.final = rec.final;
  s.record_file = record_file;
  s.record_checksum = checksum;
  return s;
}

std::optional<std::size_t> select_best(const std::vector<RunSummary>& runs, bool by_lrfit) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (runs[i].failed()) continue;
    const double x = by_lrfit ? runs[i].final.test_lrfit : runs[i].final.test_loss;
    if (!std::isfinite(x)) continue;
    if (!best) {
      best = i;
      continue;
    }
    const double b = by_lrfit ? runs[*best].final.test_lrfit : runs[*best].final.test_loss;
    const double si = runs[i].step.value_or(0.0), sb = runs[*best].step.value_or(0.0);
    if (x < b || (x == b && si < sb)) best = i;
  }
  return best;
}

std::vector<CellSummary> summarize_cells(const std::vector<RunSummary>& runs) {
  using Key = std::tuple<std::string, std::string, double, Eigen::Index, Eigen::Index>;
  std::map<Key, std::vector<const RunSummary*>> groups;
  for (const auto& r : runs) groups[{to_string(r.method), r.activation, r.tau0, r.N, r.M}].push_back(&r);

  std::vector<CellSummary> out;
  for (const auto& [key, members] : groups) {
    CellSummary cell;
    cell.method = members.front()->method;
    cell.activation = std::get<1>(key);
    cell.tau0 = std::get<2>(key);
    cell.N = std::get<3>(key);
    cell.M = std::get<4>(key);
    cell.runs = members.size();

    // Mean over seeds per step; failed runs make the step's mean +inf.
    struct Agg {
      double test = 0.0, lrfit = 0.0, wcd = 0.0;
      std::size_t n = 0;
    };
    std::map<double, Agg> by_step;
    for (const RunSummary* r : members) {
      if (r->failed()) ++cell.failed_runs;
      Agg& a = by_step[r->step.value_or(0.0)];
      const double inf = std::numeric_limits<double>::infinity();
      const double t = r->failed() || !std::isfinite(r->final.test_loss) ? inf : r->final.test_loss;
      const double l = r->failed() || !std::isfinite(r->final.test_lrfit) ? inf : r->final.test_lrfit;
      a.test += t;
      a.lrfit += l;
      a.wcd += r->final.wcd;
      ++a.n;
    }
    const bool has_step = members.front()->step.has_value();
    double best_t = std::numeric_limits<double>::infinity(), best_l = best_t;
    for (const auto& [step, a] : by_step) {  // ascending step: strict < keeps the smaller on ties
      const double n = static_cast<double>(a.n);
      if (a.test / n < best_t) {
        best_t = a.test / n;
        if (has_step) cell.best_step_by_test = step;
        cell.test_loss_at_best = best_t;
        cell.test_lrfit_at_best_test = a.lrfit / n;
      }
      if (a.lrfit / n < best_l) {
        best_l = a.lrfit / n;
        if (has_step) cell.best_step_by_lrfit = step;
        cell.test_lrfit_at_best = best_l;
        cell.wcd_at_best_lrfit = a.wcd / n;
      }
    }
    out.push_back(cell);
  }
  return out;
}

std::string runs_csv(const std::vector<RunSummary>& runs) {
  std::ostringstream ss;
  ss << "name,method,activation,tau0,step,N,M,seed,stop_reason,reached_target,iterations,train_loss,test_loss,"
        "test_lrfit,wcd,sigma_star_A,record_file,record_checksum\n";
  for (const auto& r : runs) {
    ss << r.name << ',' << to_string(r.method) << ',' << r.activation << ',' << fmt_num(r.tau0) << ','
       << (r.step ? fmt_num(*r.step) : "") << ',' << r.N << ',' << r.M << ',' << r.seed << ','
       << to_string(r.stop_reason) << ',' << (r.reached_target ? 1 : 0) << ',' << r.iterations << ','
       << fmt_num(r.final.train_loss) << ',' << fmt_num(r.final.test_loss) << ',' << fmt_num(r.final.test_lrfit)
       << ',' << fmt_num(r.final.wcd) << ',' << fmt_num(r.final.sigma_star_A) << ',' << r.record_file << ','
       << r.record_checksum << '\n';
  }
  return ss.str();
}

std::string cells_csv(const std::vector<CellSummary>& cells) {
  std::ostringstream ss;
  ss << "method,activation,tau0,N,M,runs,failed_runs,best_step_by_test,test_loss_at_best,test_lrfit_at_best_test,"
        "best_step_by_lrfit,test_lrfit_at_best,wcd_at_best_lrfit,flag\n";
  for (const auto& c : cells) {
    ss << to_string(c.method) << ',' << c.activation << ',' << fmt_num(c.tau0) << ',' << c.N << ',' << c.M << ','
       << c.runs << ',' << c.failed_runs << ',' << (c.best_step_by_test ? fmt_num(*c.best_step_by_test) : "") << ','
       << fmt_num(c.test_loss_at_best) << ',' << fmt_num(c.test_lrfit_at_best_test) << ','
       << (c.best_step_by_lrfit ? fmt_num(*c.best_step_by_lrfit) : "") << ',' << fmt_num(c.test_lrfit_at_best) << ','
       << fmt_num(c.wcd_at_best_lrfit) << ',' << (c.failed_runs > 0 ? "failed_runs" : "") << '\n';
  }
  return ss.str();
}

SweepResult run_sweep(const SweepSpec& spec, int parallelism, const std::filesystem::path& out_dir) {
  const std::vector<RunConfig> configs = expand_sweep(spec);
  std::clog << "gnfeat: sweep '" << spec.name << "' has " << configs.size() << " runs\n";
  std::filesystem::create_directories(out_dir);

  std::vector<RunSummary> rows(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      RunRecord rec = run_experiment(configs[i]);
      std::string file, sum;
      try {
        const auto path = write_run_record(rec, out_dir);
        file = path.filename().string();
        sum = record_content_checksum(path);
      } catch (const Error& e) {
        rec.stop_reason = StopReason::Failed;
        rec.error = e.what();
      }
      rows[i] = summarize(rec, file, sum);
    }
  };
  const int workers = std::max(1, std::min<int>(parallelism, static_cast<int>(configs.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  SweepResult result;
  result.runs = std::move(rows);
  result.cells = summarize_cells(result.runs);
  result.runs_csv = out_dir / "runs.csv";
  result.summary_csv = out_dir / "summary.csv";
  write_bytes(result.runs_csv, runs_csv(result.runs));
  write_bytes(result.summary_csv, cells_csv(result.cells));
  return result;
}

void validate_sweep_dir(const std::filesystem::path& dir) {
  std::istringstream in(read_bytes(dir / "runs.csv"));
  std::string line;
  std::getline(in, line);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cols.push_back(cell);
    if (line.back() == ',') cols.emplace_back();
    if (cols.size() != 18) throw MalformedFileError("runs.csv row " + std::to_string(row) + ": wrong column count");
    const std::string& file = cols[16];
    if (file.empty()) throw Error("runs.csv row " + std::to_string(row) + ": run has no record");
    const auto path = dir / file;
    if (!std::filesystem::exists(path)) throw Error("missing record " + path.string());
    if (record_content_checksum(path) != cols[17]) throw ChecksumError(path.string() + ": checksum mismatch");
    read_run_record(path);
  }
}

std::vector<RunRecord> load_records(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 12 && name.ends_with(".record.json")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RunRecord> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(read_run_record(f));
  return out;
}

}  // namespace gnfeat
