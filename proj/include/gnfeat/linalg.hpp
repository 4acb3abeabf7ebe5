#pragma once

#include <optional>

#include "gnfeat/model.hpp"

namespace gnfeat::linalg {

/// Relative cutoff used for pseudo-inverses of N x N PSD matrices:
/// eigenvalues below lambda_max * N * 2^-45 are treated as zero.
double default_pinv_cutoff(Eigen::Index n);

struct Eigenpair {
  double value = 0.0;
  Vector vector;
};

/// Smallest eigenpair of a symmetric matrix by full dense decomposition.
Eigenpair smallest_eigenpair_dense(const Matrix& A);

struct InversePowerOptions {
  double rel_tol = 1e-6;
  int max_iters = 500;
};

/// Smallest eigenpair of a symmetric PSD matrix by shifted inverse power
/// iteration. The shift is a tiny negative multiple of the trace so that a
/// singular A still factorizes. `warm_start` seeds the iteration when given.
Eigenpair smallest_eigenpair_inverse_power(const Matrix& A, const std::optional<Vector>& warm_start = std::nullopt,
                                           const InversePowerOptions& opts = {});

/// Chooses the dense path for n <= dense_limit and inverse power otherwise.
Eigenpair smallest_eigenpair(const Matrix& A, const std::optional<Vector>& warm_start = std::nullopt,
                             Eigen::Index dense_limit = 1000);

struct SpdSolve {
  Vector solution;
  double shift_used = 0.0;  // diagonal shift actually applied
  int retries = 0;
};

/// Solves (A + shift I) x = rhs by Cholesky. On factorization failure the
/// shift is multiplied by 10, up to `max_retries` times; afterwards throws
/// NumericalError reporting the smallest eigenvalue of A and the shift.
SpdSolve solve_shifted_spd(const Matrix& A, double shift, const Vector& rhs, int max_retries = 3);

struct PinvSolve {
  Vector solution;
  Eigen::Index rank = 0;
  double cutoff = 0.0;
};

/// x = S^+ rhs for symmetric PSD S, via eigendecomposition with the given
/// relative eigenvalue cutoff (defaults to default_pinv_cutoff).
PinvSolve pinv_solve_psd(const Matrix& S, const Vector& rhs, std::optional<double> rel_cutoff = std::nullopt);

}  // namespace gnfeat::linalg
