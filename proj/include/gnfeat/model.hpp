#pragma once

#include <Eigen/Dense>
#include <string>
#include <string_view>

namespace gnfeat {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class ActivationKind { ReLU, SiLU };

/// Pointwise non-linearity. For SiLU, beta is the temperature in
/// x * sigmoid(beta * x); larger beta approaches ReLU.
struct Activation {
  ActivationKind kind = ActivationKind::ReLU;
  double beta = 1.0;

  static Activation relu() { return {ActivationKind::ReLU, 1.0}; }
  static Activation silu(double beta) { return {ActivationKind::SiLU, beta}; }

  void validate() const;
  bool operator==(const Activation&) const = default;
};

/// Output scaling factor of the network: 1/M (mean-field) or 1/sqrt(M) (NTK).
enum class Scaling { MeanField, NTK };

std::string to_string(ActivationKind kind);
std::string to_string(Scaling scaling);
ActivationKind parse_activation_kind(std::string_view name);
Scaling parse_scaling(std::string_view name);

double output_scale(Scaling scaling, Eigen::Index width);

struct ActivationValue {
  double value;
  double derivative;
};

/// Evaluates the activation and its derivative. ReLU'(0) is taken as 0.
/// Throws InvalidArgument on non-finite x.
ActivationValue activation(const Activation& act, double x);

/// One-hidden-layer network f(x) = alpha(M) * sum_i v_i * act(u_i . x).
///
/// The flattened parameter vector is v (length M) followed by the rows of u
/// (each of length d). Jacobian columns, GN updates and serialization all
/// use this order.
struct TwoLayerNet {
  Vector v;  // M
  Matrix u;  // M x d
  Scaling scaling = Scaling::MeanField;
  Activation act;

  TwoLayerNet() = default;
  TwoLayerNet(Vector v, Matrix u, Scaling scaling, Activation act);

  Eigen::Index width() const { return u.rows(); }
  Eigen::Index input_dim() const { return u.cols(); }
  Eigen::Index num_params() const { return u.rows() * (u.cols() + 1); }
  double alpha() const { return output_scale(scaling, width()); }

  /// Throws DimensionError when v and u disagree.
  void validate() const;

  Vector flat_params() const;
  void set_flat_params(const Vector& w);
};

/// Hidden pre-activations X u^T (N x M) mapped through the activation.
/// Returned as N x M (transpose of the M x N feature matrix Gamma(u)).
struct HiddenFeatures {
  Matrix values;       // act(u_i . x_n), N x M
  Matrix derivatives;  // act'(u_i . x_n), N x M
};

HiddenFeatures hidden_features(const Matrix& u, const Activation& act, const Matrix& X,
                               bool with_derivatives = true);

/// Predictions on the rows of X.
Vector forward(const TwoLayerNet& net, const Matrix& X);

// Variants reusing precomputed hidden features of the same (net, X) pair.
Vector forward(const TwoLayerNet& net, const HiddenFeatures& h);
Matrix ntk_matrix(const TwoLayerNet& net, const HiddenFeatures& h, const Matrix& X);

/// J^T z for the N x P Jacobian, in flattened parameter order, without
/// forming J.
Vector jacobian_transpose_product(const TwoLayerNet& net, const HiddenFeatures& h, const Matrix& X, const Vector& z);

/// N x P Jacobian of the predictions with respect to the flattened parameters.
Matrix jacobian(const TwoLayerNet& net, const Matrix& X);

/// NTK matrix A = J J^T evaluated from the closed-form kernel, without
/// materializing J. Exactly symmetric.
Matrix ntk_matrix(const TwoLayerNet& net, const Matrix& X);

/// Same quantity via an explicit Jacobian product. Kept for cross-checks.
Matrix ntk_matrix_from_jacobian(const TwoLayerNet& net, const Matrix& X);

/// Gram matrix G_{nn'} = (1/M) sum_i act(u_i . x_n) act(u_i . x_n').
Matrix gram_matrix(const Matrix& u, const Activation& act, const Matrix& X);

}  // namespace gnfeat
