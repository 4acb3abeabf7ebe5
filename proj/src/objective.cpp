#include "gnfeat/objective.hpp"

#include <cmath>

#include "gnfeat/error.hpp"

namespace gnfeat {

namespace {

void check_length(Eigen::Index N, const Vector& vec) {
  if (vec.size() != N) {
    throw DimensionError("vector has length " + std::to_string(vec.size()) + ", expected N=" + std::to_string(N));
  }
}

}  // namespace

LossAndGrad mse_loss_and_grad(const Vector& predictions, const Vector& targets) {
  if (predictions.size() == 0 || targets.size() == 0) throw InvalidArgument("empty prediction or target vector");
  if (predictions.size() != targets.size()) {
    throw DimensionError("predictions have length " + std::to_string(predictions.size()) + " but targets have " +
                         std::to_string(targets.size()));
  }
  if (!predictions.allFinite() || !targets.allFinite()) throw InvalidArgument("non-finite entries in loss input");
  const double n = static_cast<double>(predictions.size());
  Vector residual = predictions - targets;
  const double loss = residual.squaredNorm() / (2.0 * n);
  return {loss, residual / n};
}

double mse_loss(const Vector& predictions, const Vector& targets) {
  return mse_loss_and_grad(predictions, targets).loss;
}

std::string to_string(HessianMode mode) { return mode == HessianMode::Identity ? "identity" : "mse_hessian"; }

HessianMode parse_hessian_mode(std::string_view name) {
  if (name == "identity" || name == "Identity") return HessianMode::Identity;
  if (name == "mse_hessian" || name == "MseHessian") return HessianMode::MseHessian;
  throw InvalidArgument("unknown hessian mode '" + std::string(name) + "'");
}

double hessian_scalar(HessianMode mode, Eigen::Index N) {
  if (N < 1) throw InvalidArgument("hessian needs N >= 1");
  return mode == HessianMode::Identity ? 1.0 : 1.0 / static_cast<double>(N);
}

HessianBounds hessian_bounds(HessianMode mode, Eigen::Index N) {
  const double c = hessian_scalar(mode, N);
  return {c, c};
}

Vector apply_hessian(HessianMode mode, Eigen::Index N, const Vector& vec) {
  check_length(N, vec);
  if (mode == HessianMode::Identity) return vec;
  return vec / static_cast<double>(N);
}

Vector apply_hessian_inverse(HessianMode mode, Eigen::Index N, const Vector& vec) {
  check_length(N, vec);
  if (mode == HessianMode::Identity) return vec;
  return vec * static_cast<double>(N);
}

Vector apply_hessian_inv_sqrt(HessianMode mode, Eigen::Index N, const Vector& vec) {
  check_length(N, vec);
  if (mode == HessianMode::Identity) return vec;
  return vec * std::sqrt(static_cast<double>(N));
}

}  // namespace gnfeat
