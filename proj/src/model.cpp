#include "gnfeat/model.hpp"

#include <cmath>
#include <string>

#include "gnfeat/error.hpp"

namespace gnfeat {

namespace {

// Fills the lower triangle of `out` with `F F^T` and returns it.
Matrix lower_outer(const Matrix& F) {
  Matrix out = Matrix::Zero(F.rows(), F.rows());
  out.selfadjointView<Eigen::Lower>().rankUpdate(F);
  return out;
}

void mirror_lower(Matrix& A) { A.triangularView<Eigen::StrictlyUpper>() = A.transpose(); }

void check_inputs(const Matrix& u, const Matrix& X) {
  if (X.cols() != u.cols()) {
    throw DimensionError("input has " + std::to_string(X.cols()) + " columns but hidden weights expect d=" +
                         std::to_string(u.cols()));
  }
  if (!X.allFinite()) throw InvalidArgument("non-finite input");
}

}  // namespace

void Activation::validate() const {
  if (kind == ActivationKind::SiLU && !(beta > 0.0 && std::isfinite(beta))) {
    throw InvalidArgument("SiLU requires a finite beta > 0, got " + std::to_string(beta));
  }
}

std::string to_string(ActivationKind kind) { return kind == ActivationKind::ReLU ? "relu" : "silu"; }

std::string to_string(Scaling scaling) { return scaling == Scaling::MeanField ? "mean_field" : "ntk"; }

ActivationKind parse_activation_kind(std::string_view name) {
  if (name == "relu" || name == "ReLU") return ActivationKind::ReLU;
  if (name == "silu" || name == "SiLU") return ActivationKind::SiLU;
  throw InvalidArgument("unknown activation '" + std::string(name) + "'");
}

Scaling parse_scaling(std::string_view name) {
  if (name == "mean_field" || name == "MeanField") return Scaling::MeanField;
  if (name == "ntk" || name == "NTK") return Scaling::NTK;
  throw InvalidArgument("unknown scaling '" + std::string(name) + "'");
}

double output_scale(Scaling scaling, Eigen::Index width) {
  const double m = static_cast<double>(width);
  return scaling == Scaling::MeanField ? 1.0 / m : 1.0 / std::sqrt(m);
}

ActivationValue activation(const Activation& act, double x) {
  if (!std::isfinite(x)) throw InvalidArgument("non-finite input");
  act.validate();
  if (act.kind == ActivationKind::ReLU) {
    return x > 0.0 ? ActivationValue{x, 1.0} : ActivationValue{0.0, 0.0};
  }
  const double bx = act.beta * x;
  const double s = 1.0 / (1.0 + std::exp(-bx));
  return {x * s, s + bx * s * (1.0 - s)};
}

TwoLayerNet::TwoLayerNet(Vector v_, Matrix u_, Scaling scaling_, Activation act_)
    : v(std::move(v_)), u(std::move(u_)), scaling(scaling_), act(act_) {
  validate();
}

void TwoLayerNet::validate() const {
  if (u.rows() < 1 || u.cols() < 1) throw DimensionError("network needs M >= 1 and d >= 1");
  if (v.size() != u.rows()) {
    throw DimensionError("linear weights have length " + std::to_string(v.size()) + " but M=" +
                         std::to_string(u.rows()));
  }
  act.validate();
}

Vector TwoLayerNet::flat_params() const {
  Vector w(num_params());
  w.head(width()) = v;
  const Eigen::Index d = input_dim();
  for (Eigen::Index i = 0; i < width(); ++i) w.segment(width() + i * d, d) = u.row(i).transpose();
  return w;
}

void TwoLayerNet::set_flat_params(const Vector& w) {
  if (w.size() != num_params()) {
    throw DimensionError("parameter vector has length " + std::to_string(w.size()) + ", expected " +
                         std::to_string(num_params()));
  }
  v = w.head(width());
  const Eigen::Index d = input_dim();
  for (Eigen::Index i = 0; i < width(); ++i) u.row(i) = w.segment(width() + i * d, d).transpose();
}

HiddenFeatures hidden_features(const Matrix& u, const Activation& act, const Matrix& X, bool with_derivatives) {
  check_inputs(u, X);
  act.validate();
  HiddenFeatures out;
  Matrix pre = X * u.transpose();
  if (act.kind == ActivationKind::ReLU) {
    out.values = pre.cwiseMax(0.0);
    if (with_derivatives) out.derivatives = (pre.array() > 0.0).cast<double>().matrix();
    return out;
  }
  const double beta = act.beta;
  Eigen::ArrayXXd sig = 1.0 / (1.0 + (-beta * pre.array()).exp());
  out.values = (pre.array() * sig).matrix();
  if (with_derivatives) out.derivatives = (sig + beta * pre.array() * sig * (1.0 - sig)).matrix();
  return out;
}

Vector forward(const TwoLayerNet& net, const Matrix& X) {
  net.validate();
  const HiddenFeatures h = hidden_features(net.u, net.act, X, false);
  return forward(net, h);
}

Vector forward(const TwoLayerNet& net, const HiddenFeatures& h) { return net.alpha() * (h.values * net.v); }

Vector jacobian_transpose_product(const TwoLayerNet& net, const HiddenFeatures& h, const Matrix& X, const Vector& z) {
  if (z.size() != X.rows()) throw DimensionError("J^T z needs z of length N=" + std::to_string(X.rows()));
  const Eigen::Index M = net.width(), d = net.input_dim();
  const double a = net.alpha();
  Vector out(net.num_params());
  out.head(M) = a * (h.values.transpose() * z);
  // row i of the u-block: a * v_i * sum_n act'(u_i.x_n) z_n x_n
  const Matrix weighted = h.derivatives.transpose() * (z.asDiagonal() * X);  // M x d
  for (Eigen::Index i = 0; i < M; ++i) out.segment(M + i * d, d) = (a * net.v(i)) * weighted.row(i).transpose();
  return out;
}

Matrix jacobian(const TwoLayerNet& net, const Matrix& X) {
  net.validate();
  const HiddenFeatures h = hidden_features(net.u, net.act, X);
  const Eigen::Index N = X.rows(), M = net.width(), d = net.input_dim();
  const double a = net.alpha();
  Matrix J(N, net.num_params());
  J.leftCols(M) = a * h.values;
  for (Eigen::Index i = 0; i < M; ++i) {
    const Eigen::VectorXd coef = a * net.v(i) * h.derivatives.col(i);
    J.middleCols(M + i * d, d) = coef.asDiagonal() * X;
  }
  return J;
}

Matrix ntk_matrix(const TwoLayerNet& net, const Matrix& X) {
  net.validate();
  return ntk_matrix(net, hidden_features(net.u, net.act, X), X);
}

Matrix ntk_matrix(const TwoLayerNet& net, const HiddenFeatures& h, const Matrix& X) {
  const double a2 = net.alpha() * net.alpha();
  // sum_i act(u_i.x) act(u_i.x') + v_i^2 act'(u_i.x) act'(u_i.x') x.x'
  Matrix A = lower_outer(h.values);
  const Matrix B = h.derivatives * net.v.cwiseAbs().asDiagonal();
  Matrix C = lower_outer(B);
  const Matrix K = lower_outer(X);
  A.triangularView<Eigen::Lower>() += C.cwiseProduct(K);
  A *= a2;
  mirror_lower(A);
  return A;
}

Matrix ntk_matrix_from_jacobian(const TwoLayerNet& net, const Matrix& X) {
  const Matrix J = jacobian(net, X);
  Matrix A = lower_outer(J);
  mirror_lower(A);
  return A;
}

Matrix gram_matrix(const Matrix& u, const Activation& act, const Matrix& X) {
  if (u.rows() < 1) throw DimensionError("gram matrix needs at least one hidden unit");
  const HiddenFeatures h = hidden_features(u, act, X, false);
  Matrix G = lower_outer(h.values);
  G /= static_cast<double>(u.rows());
  mirror_lower(G);
  return G;
}

}  // namespace gnfeat
