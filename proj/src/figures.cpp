#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "gnfeat/error.hpp"
#include "gnfeat/experiments.hpp"

namespace gnfeat {

namespace {

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string opt_num(const std::optional<double>& x) { return x ? num(*x) : ""; }

std::vector<RunSummary> summaries(const std::vector<RunRecord>& records) {
  std::vector<RunSummary> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(summarize(r));
  return out;
}

// Every (method, tau0, step) point implied by the grid must have a record.
void require_complete(const std::vector<RunSummary>& runs, const std::set<double>& tau0s) {
  std::map<Method, std::set<double>> steps;
  std::set<std::tuple<Method, double, double>> present;
  for (const auto& r : runs) {
    steps[r.method].insert(r.step.value_or(0.0));
    present.insert({r.method, r.tau0, r.step.value_or(0.0)});
  }
  std::vector<std::string> missing;
  for (const auto& [m, ss] : steps) {
    for (double t : tau0s) {
      for (double s : ss) {
        if (present.count({m, t, s})) continue;
        std::string cell = "(" + to_string(m) + ", tau0=" + num(t);
        if (m != Method::RF) cell += ", step=" + num(s);
        missing.push_back(cell + ")");
      }
    }
  }
  if (missing.empty()) return;
  std::string msg = "missing series:";
  for (const auto& c : missing) msg += " " + c;
  throw Error(msg);
}

std::set<double> all_tau0(const std::vector<RunSummary>& runs) {
  std::set<double> out;
  for (const auto& r : runs) out.insert(r.tau0);
  return out;
}

std::string fig1_left(const std::vector<RunRecord>& records) {
  const auto runs = summaries(records);
  require_complete(runs, all_tau0(runs));
  std::ostringstream ss;
  ss << "method,activation,N,M,tau0,runs,failed_runs,best_step_by_test,test_loss,test_lrfit_at_best_test,"
        "best_step_by_lrfit,test_lrfit,wcd_at_best_lrfit\n";
  for (const auto& c : summarize_cells(runs)) {
    ss << to_string(c.method) << ',' << c.activation << ',' << c.N << ',' << c.M << ',' << num(c.tau0) << ','
       << c.runs << ',' << c.failed_runs << ',' << opt_num(c.best_step_by_test) << ',' << num(c.test_loss_at_best)
       << ',' << num(c.test_lrfit_at_best_test) << ',' << opt_num(c.best_step_by_lrfit) << ','
       << num(c.test_lrfit_at_best) << ',' << num(c.wcd_at_best_lrfit) << '\n';
  }
  return ss.str();
}

std::string fig1_right(const std::vector<RunRecord>& records, const FigureOptions& opts) {
  auto runs = summaries(records);
  const auto tau0s = all_tau0(runs);
  if (tau0s.empty()) return "method,activation,N,M,tau0,step,seeds,failed_runs,train_loss,test_loss,test_lrfit,wcd\n";
  const double tau0 = opts.tau0.value_or(*tau0s.begin());
  if (!tau0s.count(tau0)) throw Error("missing series: no runs at tau0=" + num(tau0));
  require_complete(runs, {tau0});
  std::erase_if(runs, [&](const RunSummary& r) { return r.tau0 != tau0; });

  struct Agg {
    double train = 0, test = 0, lrfit = 0, wcd = 0;
    std::size_t n = 0, failed = 0;
  };
  using Key = std::tuple<std::string, std::string, Eigen::Index, Eigen::Index, double>;
  std::map<Key, Agg> groups;
  std::map<Key, bool> has_step;
  for (const auto& r : runs) {
    Key k{to_string(r.method), r.activation, r.N, r.M, r.step.value_or(0.0)};
    Agg& a = groups[k];
    has_step[k] = r.step.has_value();
    a.train += r.final.train_loss;
    a.test += r.final.test_loss;
    a.lrfit += r.final.test_lrfit;
    a.wcd += r.final.wcd;
    ++a.n;
    if (r.failed()) ++a.failed;
  }
  std::ostringstream ss;
  ss << "method,activation,N,M,tau0,step,seeds,failed_runs,train_loss,test_loss,test_lrfit,wcd\n";
  for (const auto& [k, a] : groups) {
    const double n = static_cast<double>(a.n);
    ss << std::get<0>(k) << ',' << std::get<1>(k) << ',' << std::get<2>(k) << ',' << std::get<3>(k) << ','
       << num(tau0) << ',' << (has_step[k] ? num(std::get<4>(k)) : "") << ',' << a.n << ',' << a.failed << ','
       << num(a.train / n) << ',' << num(a.test / n) << ',' << num(a.lrfit / n) << ',' << num(a.wcd / n) << '\n';
  }
  return ss.str();
}

std::string fig2(const std::vector<RunRecord>& records) {
  std::ostringstream ss;
  ss << "run,method,tau0,step,seed,iter,wall_seconds,train_loss,test_loss,test_lrfit,wcd,sigma_star_A\n";
  for (const auto& r : records) {
    const std::string step = r.config.method == Method::RF ? "" : num(r.config.train.step_size);
    for (const auto& e : r.trace.entries) {
      ss << r.config.name << ',' << to_string(r.config.method) << ',' << num(r.config.student.tau0) << ',' << step
         << ',' << r.config.student.init_seed << ',' << e.iter << ',' << num(e.wall_seconds) << ','
         << num(e.train_loss) << ',' << num(e.test_loss) << ',' << num(e.test_lrfit) << ',' << num(e.wcd) << ','
         << num(e.sigma_star_A) << '\n';
    }
  }
  return ss.str();
}

std::string fig4_right(const std::vector<RunRecord>& records, const FigureOptions& opts) {
  std::ostringstream ss;
  ss << "run,tau0,step,seed,iter,sigma_star_A\n";
  for (const auto& r : records) {
    if (r.config.method != Method::GN) continue;
    if (opts.tau0 && r.config.student.tau0 != *opts.tau0) continue;
    for (const auto& e : r.trace.entries) {
      ss << r.config.name << ',' << num(r.config.student.tau0) << ',' << num(r.config.train.step_size) << ','
         << r.config.student.init_seed << ',' << e.iter << ',' << num(e.sigma_star_A) << '\n';
    }
  }
  return ss.str();
}

std::string fig5(const std::vector<RunRecord>& records) {
  const auto runs = summaries(records);
  // Series: (method, activation, tau0, M); one point per N at the best step.
  using Series = std::tuple<std::string, std::string, double, Eigen::Index>;
  std::map<Series, std::vector<RunSummary>> series;
  for (const auto& r : runs) series[{to_string(r.method), r.activation, r.tau0, r.M}].push_back(r);

  std::ostringstream ss;
  ss << "method,activation,tau0,M,N,best_step,test_loss,log_N,log_test_loss,slope,intercept\n";
  for (const auto& [key, members] : series) {
    std::vector<CellSummary> cells = summarize_cells(members);
    std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) { return a.N < b.N; });
    std::vector<double> xs, ys;
    for (const auto& c : cells) {
      if (std::isfinite(c.test_loss_at_best) && c.test_loss_at_best > 0.0) {
        xs.push_back(std::log(static_cast<double>(c.N)));
        ys.push_back(std::log(c.test_loss_at_best));
      }
    }
    double slope = std::nan(""), intercept = std::nan("");
    if (xs.size() >= 2) std::tie(slope, intercept) = fit_line(xs, ys);
    for (const auto& c : cells) {
      const double logn = std::log(static_cast<double>(c.N));
      const double logl = c.test_loss_at_best > 0.0 ? std::log(c.test_loss_at_best) : std::nan("");
      ss << std::get<0>(key) << ',' << std::get<1>(key) << ',' << num(std::get<2>(key)) << ',' << std::get<3>(key)
         << ',' << c.N << ',' << opt_num(c.best_step_by_test) << ',' << num(c.test_loss_at_best) << ',' << num(logn)
         << ',' << num(logl) << ',' << num(slope) << ',' << num(intercept) << '\n';
    }
  }
  return ss.str();
}

const std::vector<std::string> kFigures{"fig1-left", "fig1-right", "fig2", "fig4-right", "fig5"};

}  // namespace

std::pair<double, double> fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DimensionError("fit_line: x has " + std::to_string(x.size()) +
                                                 " points but y has " + std::to_string(y.size()));
  if (x.size() < 2) throw InvalidArgument("fit_line needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw InvalidArgument("fit_line: all x values are equal");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

std::string figure_csv(const std::vector<RunRecord>& records, const std::string& figure, const FigureOptions& opts) {
  if (figure == "fig1-left") return fig1_left(records);
  if (figure == "fig1-right") return fig1_right(records, opts);
  if (figure == "fig2") return fig2(records);
  if (figure == "fig4-right") return fig4_right(records, opts);
  if (figure == "fig5") return fig5(records);
  throw InvalidArgument("unknown figure '" + figure + "' (expected fig1-left, fig1-right, fig2, fig4-right, fig5, all)");
}

std::vector<std::filesystem::path> emit_figures(const std::filesystem::path& records_dir, const std::string& figure,
                                                const std::filesystem::path& out_dir, const FigureOptions& opts) {
  const std::vector<RunRecord> records = load_records(records_dir);
  if (records.empty()) throw Error("no run records in " + records_dir.string());
  std::vector<std::string> ids = figure == "all" ? kFigures : std::vector<std::string>{figure};
  std::vector<std::string> bodies;
  for (const auto& id : ids) bodies.push_back(figure_csv(records, id, opts));  // fail before writing anything
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto p = out_dir / (ids[i] + ".csv");
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + p.string());
    f << bodies[i];
    out.push_back(p);
  }
  return out;
}

}  // namespace gnfeat
