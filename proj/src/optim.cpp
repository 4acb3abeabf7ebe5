#include "gnfeat/optim.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "gnfeat/error.hpp"
#include "gnfeat/linalg.hpp"

namespace gnfeat {

namespace {

void check_data(const TwoLayerNet& net, const Matrix& X, const Vector& Y) {
  net.validate();
  if (X.cols() != net.input_dim()) {
    throw DimensionError("input has " + std::to_string(X.cols()) + " columns, network expects d=" +
                         std::to_string(net.input_dim()));
  }
  if (Y.size() != X.rows()) {
    throw DimensionError("targets have length " + std::to_string(Y.size()) + " but there are " +
                         std::to_string(X.rows()) + " inputs");
  }
}

// Function-space solve shared by gn_direction and train.
GnDirection gn_direction_at(const TwoLayerNet& net, const HiddenFeatures& h, const Matrix& X,
                            const LossAndGrad& lg, const Matrix& ntk, const DampingValue& damp,
                            HessianMode hessian) {
  const Eigen::Index N = X.rows();
  if (N > kGnSolveLimit) {
    throw InvalidArgument("N=" + std::to_string(N) + " exceeds the GN solve limit " + std::to_string(kGnSolveLimit));
  }
  // H = c I, so (A + eps H^{-1}) z = H^{-1} g  <=>  (A + (eps/c) I) z = g / c.
  const double c = hessian_scalar(hessian, N);
  GnDirection out;
  out.diagnostics.epsilon = damp.epsilon;
  out.diagnostics.loss = lg.loss;
  out.diagnostics.residual_norm = lg.grad.norm() * static_cast<double>(N);
  const linalg::SpdSolve solve = linalg::solve_shifted_spd(ntk, damp.epsilon / c, lg.grad / c);
  out.diagnostics.shift_used = solve.shift_used * c;
  out.diagnostics.retries = solve.retries;
  out.phi = jacobian_transpose_product(net, h, X, solve.solution);
  if (!out.phi.allFinite()) throw NumericalError("non-finite Gauss-Newton update");
  return out;
}

TwoLayerNet displaced(const TwoLayerNet& net, const Vector& direction, double step_size) {
  TwoLayerNet next = net;
  next.set_flat_params(net.flat_params() - step_size * direction);
  return next;
}

}  // namespace

void DampingConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw InvalidArgument("damping alpha must be >= 0");
  if (!(floor > 0.0) || !std::isfinite(floor)) throw InvalidArgument("damping floor must be > 0");
  if (recompute_every < 1) throw InvalidArgument("damping recompute_every must be >= 1");
}

DampingValue damping_value(const Matrix& ntk, const DampingConfig& cfg, DampingState& state) {
  cfg.validate();
  DampingValue out;
  if (cfg.alpha == 0.0) {
    out.epsilon = cfg.floor;
    out.sigma2 = std::nan("");
    return out;
  }
  if (!state.sigma2 || state.age >= cfg.recompute_every) {
    const linalg::Eigenpair pair = linalg::smallest_eigenpair(ntk, state.eigenvector);
    state.sigma2 = std::max(pair.value, 0.0);
    state.eigenvector = pair.vector;
    state.age = 0;
    out.fresh = true;
  }
  ++state.age;
  out.sigma2 = *state.sigma2;
  out.epsilon = std::max(cfg.alpha * out.sigma2, cfg.floor);
  return out;
}

DampingValue damping_value(const TwoLayerNet& net, const Matrix& X, const DampingConfig& cfg,
                           std::optional<double> cached_sigma2) {
  cfg.validate();
  if (cfg.alpha == 0.0) return {cfg.floor, std::nan(""), false};
  DampingState state;
  if (cached_sigma2) {
    state.sigma2 = *cached_sigma2;
    return damping_value(Matrix(), cfg, state);
  }
  return damping_value(ntk_matrix(net, X), cfg, state);
}

std::string to_string(Method m) {
  switch (m) {
    case Method::GN: return "GN";
    case Method::GD: return "GD";
    case Method::RF: return "RF";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "GN" || name == "gn") return Method::GN;
  if (name == "GD" || name == "gd") return Method::GD;
  if (name == "RF" || name == "rf") return Method::RF;
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

GnDirection gn_direction(const TwoLayerNet& net, const Matrix& X, const Vector& Y, const DampingConfig& cfg,
                         HessianMode hessian, DampingState* state) {
  check_data(net, X, Y);
  const HiddenFeatures h = hidden_features(net.u, net.act, X);
  const LossAndGrad lg = mse_loss_and_grad(forward(net, h), Y);
  const Matrix A = ntk_matrix(net, h, X);
  DampingState local;
  const DampingValue damp = damping_value(A, cfg, state ? *state : local);
  GnDirection dir = gn_direction_at(net, h, X, lg, A, damp, hessian);
  dir.diagnostics.sigma2 = damp.sigma2;
  return dir;
}

GnStep gn_step(const TwoLayerNet& net, const Matrix& X, const Vector& Y, double step_size, const DampingConfig& cfg,
               HessianMode hessian, DampingState* state) {
  GnDirection dir = gn_direction(net, X, Y, cfg, hessian, state);
  return {displaced(net, dir.phi, step_size), dir.diagnostics};
}

Vector loss_gradient(const TwoLayerNet& net, const Matrix& X, const Vector& Y) {
  check_data(net, X, Y);
  const HiddenFeatures h = hidden_features(net.u, net.act, X);
  const LossAndGrad lg = mse_loss_and_grad(forward(net, h), Y);
  return jacobian_transpose_product(net, h, X, lg.grad);
}

TwoLayerNet gd_step(const TwoLayerNet& net, const Matrix& X, const Vector& Y, double step_size) {
  const Vector grad = loss_gradient(net, X, Y);
  TwoLayerNet next = displaced(net, grad, step_size);
  if (!next.v.allFinite() || !next.u.allFinite()) throw NumericalError("non-finite gradient descent update");
  return next;
}

LinearFit min_norm_linear_fit(const Matrix& u, const Activation& act, Scaling scaling, const Matrix& X,
                              const Vector& targets, const LinearFitOptions& opts) {
  if (targets.size() != X.rows()) {
    throw DimensionError("targets have length " + std::to_string(targets.size()) + " but there are " +
                         std::to_string(X.rows()) + " inputs");
  }
  const HiddenFeatures h = hidden_features(u, act, X, false);
  const Matrix& F = h.values;  // N x M, i.e. Gamma(u)^T
  Matrix S = Matrix::Zero(F.rows(), F.rows());
  S.selfadjointView<Eigen::Lower>().rankUpdate(F);
  S.triangularView<Eigen::StrictlyUpper>() = S.transpose();
  const linalg::PinvSolve pinv = linalg::pinv_solve_psd(S, targets, opts.rel_cutoff);

  const double alpha = output_scale(scaling, u.rows());
  LinearFit out;
  out.v = F.transpose() * pinv.solution;
  if (!opts.literal_unscaled) out.v /= alpha;
  out.rank = pinv.rank;

  const Vector model = (opts.literal_unscaled ? 1.0 : alpha) * (F * out.v);
  const double denom = F.norm() * targets.norm();
  out.normal_residual = denom > 0.0 ? (F.transpose() * (model - targets)).norm() / denom : 0.0;
  out.warning = !opts.literal_unscaled && out.normal_residual > opts.warn_tol;
  return out;
}

void TrainConfig::validate() const {
  if (method == Method::RF) throw InvalidArgument("RF is a closed-form fit, not an iterative method");
  if (!(step_size > 0.0) || !std::isfinite(step_size)) throw InvalidArgument("step_size must be > 0");
  if (max_iters < 0) throw InvalidArgument("max_iters must be >= 0");
  if (!(stop_loss > 0.0) || !(target_loss > 0.0)) throw InvalidArgument("loss thresholds must be > 0");
  if (stop_loss > target_loss) throw InvalidArgument("stop_loss must not exceed target_loss");
  if (log_every < 1) throw InvalidArgument("log_every must be >= 1");
  damping.validate();
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::Converged: return "converged";
    case StopReason::MaxIters: return "max_iters";
    case StopReason::Diverged: return "diverged";
    case StopReason::Failed: return "failed";
  }
  return "?";
}

StopReason parse_stop_reason(std::string_view name) {
  if (name == "converged") return StopReason::Converged;
  if (name == "max_iters") return StopReason::MaxIters;
  if (name == "diverged") return StopReason::Diverged;
  if (name == "failed") return StopReason::Failed;
  throw InvalidArgument("unknown stop reason '" + std::string(name) + "'");
}

TrainResult train(const TwoLayerNet& net0, const Matrix& X, const Vector& Y, const TrainConfig& cfg,
                  const MetricHook& hook) {
  cfg.validate();
  check_data(net0, X, Y);
  TrainResult out;
  out.net = net0;
  TwoLayerNet& net = out.net;
  DampingState damping_state;

  for (std::int64_t k = 0;; ++k) {
    out.iterations = k;
    const HiddenFeatures h = hidden_features(net.u, net.act, X);
    const Vector preds = forward(net, h);
    if (!preds.allFinite()) {
      out.final_loss = std::numeric_limits<double>::infinity();
      out.stop_reason = StopReason::Diverged;
      break;
    }
    const LossAndGrad lg = mse_loss_and_grad(preds, Y);
    if (k == 0) out.initial_loss = lg.loss;
    out.final_loss = lg.loss;
    if (!std::isfinite(lg.loss) || lg.loss > kDivergenceLoss) {
      out.stop_reason = StopReason::Diverged;
      break;
    }
    const bool converged = lg.loss < cfg.stop_loss;
    if (converged || k >= cfg.max_iters) {
      out.stop_reason = converged ? StopReason::Converged : StopReason::MaxIters;
      if (hook) hook(IterationState{k, net, lg.loss, std::nullopt, true});
      break;
    }

    try {
      if (cfg.method == Method::GN) {
        const Matrix A = ntk_matrix(net, h, X);
        const DampingValue damp = damping_value(A, cfg.damping, damping_state);
        if (hook && k % cfg.log_every == 0) {
          hook(IterationState{k, net, lg.loss, damp.fresh ? std::optional<double>(damp.sigma2) : std::nullopt, false});
        }
        const GnDirection dir = gn_direction_at(net, h, X, lg, A, damp, cfg.hessian);
        net.set_flat_params(net.flat_params() - cfg.step_size * dir.phi);
      } else {
        if (hook && k % cfg.log_every == 0) hook(IterationState{k, net, lg.loss, std::nullopt, false});
        const Vector grad = jacobian_transpose_product(net, h, X, lg.grad);
        net.set_flat_params(net.flat_params() - cfg.step_size * grad);
      }
    } catch (const NumericalError& e) {
      out.stop_reason = StopReason::Failed;
      out.error = e.what();
      out.iterations = k;
      break;
    }
  }
  out.reached_target = out.final_loss < cfg.target_loss;
  return out;
}

}  // namespace gnfeat
