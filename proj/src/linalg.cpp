#include "gnfeat/linalg.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

#include "gnfeat/error.hpp"

namespace gnfeat::linalg {

namespace {

void check_square(const Matrix& A) {
  if (A.rows() != A.cols() || A.rows() == 0) {
    throw DimensionError("expected a non-empty square matrix, got " + std::to_string(A.rows()) + "x" +
                         std::to_string(A.cols()));
  }
}

}  // namespace

double default_pinv_cutoff(Eigen::Index n) { return static_cast<double>(n) * std::ldexp(1.0, -45); }

Eigenpair smallest_eigenpair_dense(const Matrix& A) {
  check_square(A);
  Eigen::SelfAdjointEigenSolver<Matrix> es(A);
  if (es.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "symmetric eigensolver failed on " << A.rows() << "x" << A.cols() << " matrix (|A|_F=" << A.norm()
        << ", finite=" << A.allFinite() << ")";
    throw NumericalError(msg.str());
  }
  return {es.eigenvalues()(0), es.eigenvectors().col(0)};
}

Eigenpair smallest_eigenpair_inverse_power(const Matrix& A, const std::optional<Vector>& warm_start,
                                           const InversePowerOptions& opts) {
  check_square(A);
  const Eigen::Index n = A.rows();
  const double scale = A.trace() / static_cast<double>(n);
  double shift = -1e-12 * std::max(scale, std::numeric_limits<double>::min());
  Eigen::LLT<Matrix> llt;
  for (int attempt = 0;; ++attempt) {
    llt.compute(A - shift * Matrix::Identity(n, n));
    if (llt.info() == Eigen::Success) break;
    if (attempt == 6) {
      throw NumericalError("inverse power iteration could not factor the shifted matrix (shift=" +
                           std::to_string(-shift) + ")");
    }
    shift *= 100.0;
  }

  Vector x = warm_start && warm_start->size() == n && warm_start->norm() > 0.0 ? *warm_start
                                                                               : Vector::Ones(n);
  x.normalize();
  double lambda = x.dot(A * x);
  for (int it = 0; it < opts.max_iters; ++it) {
    x = llt.solve(x);
    const double nx = x.norm();
    if (!std::isfinite(nx) || nx == 0.0) throw NumericalError("inverse power iteration broke down");
    x /= nx;
    const double next = x.dot(A * x);
    const bool done = std::abs(next - lambda) <= opts.rel_tol * std::abs(next);
    lambda = next;
    if (done) break;
  }
  return {lambda, x};
}

Eigenpair smallest_eigenpair(const Matrix& A, const std::optional<Vector>& warm_start, Eigen::Index dense_limit) {
  if (A.rows() <= dense_limit) return smallest_eigenpair_dense(A);
  return smallest_eigenpair_inverse_power(A, warm_start);
}

SpdSolve solve_shifted_spd(const Matrix& A, double shift, const Vector& rhs, int max_retries) {
  check_square(A);
  if (rhs.size() != A.rows()) throw DimensionError("right-hand side length does not match matrix size");
  const Eigen::Index n = A.rows();
  SpdSolve out;
  out.shift_used = shift;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    Matrix S = A;
    S.diagonal().array() += out.shift_used;
    Eigen::LLT<Matrix> llt(S);
    if (llt.info() == Eigen::Success) {
      out.solution = llt.solve(rhs);
      if (out.solution.allFinite()) return out;
    }
    if (attempt == max_retries) break;
    std::clog << "gnfeat: SPD factorization failed with shift " << out.shift_used << ", retrying with "
              << out.shift_used * 10.0 << "\n";
    out.shift_used *= 10.0;
    ++out.retries;
  }
  double smallest = std::nan("");
  try {
    smallest = smallest_eigenpair_dense(A).value;
  } catch (const NumericalError&) {
  }
  std::ostringstream msg;
  msg << "SPD solve failed after " << max_retries << " retries (size " << n << ", smallest eigenvalue " << smallest
      << ", damping " << shift << ", last shift " << out.shift_used << ")";
  throw NumericalError(msg.str());
}

PinvSolve pinv_solve_psd(const Matrix& S, const Vector& rhs, std::optional<double> rel_cutoff) {
  check_square(S);
  if (rhs.size() != S.rows()) throw DimensionError("right-hand side length does not match matrix size");
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed in pseudo-inverse");
  const Vector& lam = es.eigenvalues();
  const double top = std::max(std::abs(lam(0)), std::abs(lam(lam.size() - 1)));
  PinvSolve out;
  out.cutoff = top * rel_cutoff.value_or(default_pinv_cutoff(S.rows()));
  Vector coeffs = es.eigenvectors().transpose() * rhs;
  for (Eigen::Index k = 0; k < lam.size(); ++k) {
    if (lam(k) > out.cutoff) {
      coeffs(k) /= lam(k);
      ++out.rank;
    } else {
      coeffs(k) = 0.0;
    }
  }
  out.solution = es.eigenvectors() * coeffs;
  return out;
}

}  // namespace gnfeat::linalg
