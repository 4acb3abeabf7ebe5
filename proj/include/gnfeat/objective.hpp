#pragma once

#include <string>
#include <string_view>

#include "gnfeat/model.hpp"

namespace gnfeat {

/// Function-space mean-squared error (1/2N) sum (f_n - y_n)^2 and its
/// gradient with respect to the prediction vector, in plain Euclidean
/// coordinates on R^N. Strong convexity and smoothness constants in this
/// convention are both 1/N.
struct LossAndGrad {
  double loss;
  Vector grad;
};

LossAndGrad mse_loss_and_grad(const Vector& predictions, const Vector& targets);
double mse_loss(const Vector& predictions, const Vector& targets);

/// Curvature operator H used by the Gauss-Newton field.
///   Identity   : H = I
///   MseHessian : H = (1/N) I, the Hessian of the MSE objective
enum class HessianMode { Identity, MseHessian };

std::string to_string(HessianMode mode);
HessianMode parse_hessian_mode(std::string_view name);

/// Eigenvalue bounds [mu_H, L_H] of H for a training set of size N.
struct HessianBounds {
  double mu_H;
  double L_H;
};
HessianBounds hessian_bounds(HessianMode mode, Eigen::Index N);

/// Both supported operators are scalar multiples of the identity.
double hessian_scalar(HessianMode mode, Eigen::Index N);

Vector apply_hessian(HessianMode mode, Eigen::Index N, const Vector& vec);
Vector apply_hessian_inverse(HessianMode mode, Eigen::Index N, const Vector& vec);
Vector apply_hessian_inv_sqrt(HessianMode mode, Eigen::Index N, const Vector& vec);

}  // namespace gnfeat
