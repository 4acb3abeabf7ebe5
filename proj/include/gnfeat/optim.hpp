#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "gnfeat/model.hpp"
#include "gnfeat/objective.hpp"

namespace gnfeat {

/// Damping eps(w) = max(alpha * sigma^2(w), floor), with sigma^2(w) the
/// smallest eigenvalue of the NTK matrix A_w.
struct DampingConfig {
  double alpha = 1.0;
  double floor = 1e-7;
  int recompute_every = 1;  // iterations between fresh sigma^2 evaluations

  void validate() const;
};

/// Cached eigen information carried between GN iterations.
struct DampingState {
  std::optional<double> sigma2;
  std::optional<Vector> eigenvector;  // warm start for inverse power iteration
  std::int64_t age = 0;               // iterations since sigma2 was computed
};

struct DampingValue {
  double epsilon = 0.0;
  double sigma2 = 0.0;
  bool fresh = false;  // sigma2 was recomputed for this call
};

/// Damping for the given NTK matrix. With alpha = 0 no eigenvalue is
/// computed and epsilon = floor. Otherwise sigma^2 is recomputed when the
/// cache is empty or older than recompute_every.
DampingValue damping_value(const Matrix& ntk, const DampingConfig& cfg, DampingState& state);

/// Convenience overload evaluating A_w itself. A supplied `cached_sigma2`
/// is used as is.
DampingValue damping_value(const TwoLayerNet& net, const Matrix& X, const DampingConfig& cfg,
                           std::optional<double> cached_sigma2 = std::nullopt);

enum class Method { GN, GD, RF };
std::string to_string(Method m);
Method parse_method(std::string_view name);

/// Largest training set for which gn_step will form and factor the N x N system.
inline constexpr Eigen::Index kGnSolveLimit = 20000;

struct GnDiagnostics {
  double epsilon = 0.0;
  double sigma2 = std::nan("");  // NaN when alpha = 0 (not computed)
  double residual_norm = 0.0;    // |f_w - y| before the step
  double loss = 0.0;             // loss before the step
  double shift_used = 0.0;       // damping actually used in the solve (after retries)
  int retries = 0;
};

struct GnDirection {
  Vector phi;  // flattened parameter-space direction
  GnDiagnostics diagnostics;
};

/// Gauss-Newton direction Phi = (J^T H J + eps I)^{-1} J^T grad, evaluated in
/// function space: solve (A + eps H^{-1}) z = H^{-1} grad, then Phi = J^T z.
GnDirection gn_direction(const TwoLayerNet& net, const Matrix& X, const Vector& Y, const DampingConfig& cfg,
                         HessianMode hessian, DampingState* state = nullptr);

struct GnStep {
  TwoLayerNet net;
  GnDiagnostics diagnostics;
};

GnStep gn_step(const TwoLayerNet& net, const Matrix& X, const Vector& Y, double step_size, const DampingConfig& cfg,
               HessianMode hessian, DampingState* state = nullptr);

/// Full parameter gradient J^T grad of w -> L(f_w).
Vector loss_gradient(const TwoLayerNet& net, const Matrix& X, const Vector& Y);

TwoLayerNet gd_step(const TwoLayerNet& net, const Matrix& X, const Vector& Y, double step_size);

struct LinearFit {
  Vector v;
  Eigen::Index rank = 0;
  double normal_residual = 0.0;  // |Gamma (model(v) - y)| / (|Gamma| |y|), ~0 at a least-squares optimum
  bool warning = false;          // normal_residual exceeded the tolerance
};

struct LinearFitOptions {
  std::optional<double> rel_cutoff;  // pseudo-inverse cutoff, default N * 2^-45
  bool literal_unscaled = false;     // drop the 1/alpha(M) factor (v = Gamma (Gamma^T Gamma)^+ y)
  double warn_tol = 1e-8;
};

/// Minimum-norm v whose model predictions alpha(M) Gamma(u)^T v are the
/// least-squares projection of `targets` onto the span of the hidden features.
LinearFit min_norm_linear_fit(const Matrix& u, const Activation& act, Scaling scaling, const Matrix& X,
                              const Vector& targets, const LinearFitOptions& opts = {});

struct TrainConfig {
  Method method = Method::GN;
  double step_size = 1.0;
  std::int64_t max_iters = 1000;
  double target_loss = 1e-5;
  double stop_loss = 1e-7;
  std::int64_t log_every = 1;
  DampingConfig damping;
  HessianMode hessian = HessianMode::Identity;

  void validate() const;
};

enum class StopReason { Converged, MaxIters, Diverged, Failed };
std::string to_string(StopReason r);
StopReason parse_stop_reason(std::string_view name);

inline constexpr double kDivergenceLoss = 1e12;

/// What a metric hook sees at a logged iteration.
struct IterationState {
  std::int64_t iter = 0;
  const TwoLayerNet& net;
  double train_loss = 0.0;
  std::optional<double> sigma2;  // smallest NTK eigenvalue, when freshly computed at this iterate
  bool final = false;
};

using MetricHook = std::function<void(const IterationState&)>;

struct TrainResult {
  TwoLayerNet net;
  StopReason stop_reason = StopReason::MaxIters;
  bool reached_target = false;
  std::int64_t iterations = 0;  // steps taken
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::string error;  // set when stop_reason == Failed
};

/// Runs GN or GD from net0. Stops when the loss drops below stop_loss, at
/// max_iters, or on divergence (non-finite loss or loss > 1e12). The hook is
/// called every log_every iterations and always at the final iterate.
TrainResult train(const TwoLayerNet& net0, const Matrix& X, const Vector& Y, const TrainConfig& cfg,
                  const MetricHook& hook = {});

}  // namespace gnfeat
