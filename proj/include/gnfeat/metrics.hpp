#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gnfeat/model.hpp"

namespace gnfeat {

/// Weighted cosine distance between student hidden weights (M x d) and
/// teacher hidden weights (M* x d):
///   WCD = 2 sum_i p_i (1 - max_j cos(u_i, u*_j)),  p_i = |u_i|^2 / sum_k |u_k|^2.
/// Zero-norm student rows carry p_i = 0; zero-norm teacher rows are skipped.
/// Throws InvalidArgument when every student row is zero.
double wcd(const Matrix& u, const Matrix& u_star);

struct Split {
  const Matrix& X;
  const Vector& Y;
};

/// Test loss after refitting the linear layer on frozen hidden weights `u`:
/// minimum-norm fit on `train`, MSE on `test`.
double test_lrfit(const Matrix& u, const Activation& act, Scaling scaling, Split train, Split test);

/// Smallest eigenvalue of A_w = J J^T, clamped to 0 when it is within the
/// eigensolver's tolerance of zero (|lambda| <= N * eps * lambda_max).
double smallest_eig_ntk(const TwoLayerNet& net, const Matrix& X);
double smallest_eig_psd(const Matrix& A);

/// Frobenius norm of the pseudo-inverse of a full-row-rank J, computed as
/// sqrt(trace((J J^T)^{-1})). Throws NumericalError naming the numerical rank
/// when J is rank deficient.
double pinv_frobenius_norm(const Matrix& J);

/// Constants entering the convergence rate and the no-blow-up threshold.
/// C_R (a bound on the Jacobian's derivative over a ball) cannot be computed
/// and is supplied by the caller.
struct TheoryConstants {
  double mu = 1.0;
  double L_smooth = 1.0;
  double mu_H = 1.0;
  double L_H = 1.0;
  double alpha = 0.0;
  double sigma0 = 1.0;
  double R = 1.0;
  double C_R = 1.0;
  std::int64_t N = 1;

  void validate() const;
};

struct TheoryRates {
  double mu_GN;
  std::optional<double> mu_GF;
};

/// mu_GN = 2 mu / (L_H (1 + alpha / mu_H)); mu_GF = mu * sigma_w0 / 4 when the
/// smallest singular value of the initial NTK is supplied.
TheoryRates theory_rates(const TheoryConstants& tc, std::optional<double> sigma_w0 = std::nullopt);

/// eps = (mu mu_H mu_GN / (8 L N)) * min(R, 1/C_R) * min(sigma0, sigma0^2).
/// The initial gradient must be smaller than this for the flow to stay bounded.
double blowup_threshold(const TheoryConstants& tc);

struct PlTerms {
  double grad_norm_sq;  // |grad_v l(v)|^2 in the width-normalized linear coordinates
  double rhs;           // 2 mu sigma0^2 l(v)
  double residual() const { return grad_norm_sq - rhs; }
};

/// Both sides of the Polyak-Lojasiewicz inequality for v -> L(f_(v, u0)),
/// with mu = 1/N and sigma0^2 the smallest eigenvalue of G(u0). The output
/// scale alpha(M) is absorbed by differentiating with respect to
/// v~ = alpha(M) sqrt(M) v, for which d f / d v~ d f / d v~^T = G(u0).
PlTerms pl_terms(const Vector& v, const Matrix& u0, const Activation& act, Scaling scaling, const Matrix& X,
                 const Vector& Y);
double pl_residual(const Vector& v, const Matrix& u0, const Activation& act, Scaling scaling, const Matrix& X,
                   const Vector& Y);

/// One logged iteration of a training run. NaN marks a value that was not
/// evaluated (or could not be) at that iteration.
struct MetricEntry {
  std::int64_t iter = 0;
  double wall_seconds = 0.0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_lrfit = 0.0;
  double wcd = 0.0;
  double sigma_star_A = 0.0;
};

struct MetricTrace {
  std::vector<MetricEntry> entries;

  /// Appends, enforcing strictly increasing iteration numbers.
  void push(const MetricEntry& e);
};

}  // namespace gnfeat
