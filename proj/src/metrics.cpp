#include "gnfeat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "gnfeat/error.hpp"
#include "gnfeat/objective.hpp"
#include "gnfeat/optim.hpp"

namespace gnfeat {

double wcd(const Matrix& u, const Matrix& u_star) {
  if (u.cols() != u_star.cols()) {
    throw DimensionError("student d=" + std::to_string(u.cols()) + " but teacher d=" + std::to_string(u_star.cols()));
  }
  std::vector<Eigen::Index> teacher_rows;
  for (Eigen::Index j = 0; j < u_star.rows(); ++j) {
    if (u_star.row(j).squaredNorm() > 0.0) teacher_rows.push_back(j);
  }
  if (teacher_rows.empty()) throw InvalidArgument("degenerate weights: every teacher row is zero");

  // (|u_i|^2, 1 - max_j cos) per student row; summed in sorted order so the
  // result does not depend on row order.
  std::vector<std::pair<double, double>> terms;
  terms.reserve(static_cast<std::size_t>(u.rows()));
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    const double sq = u.row(i).squaredNorm();
    if (sq == 0.0) continue;
    const double ni = std::sqrt(sq);
    double best = -1.0;
    for (Eigen::Index j : teacher_rows) {
      const double c = u.row(i).dot(u_star.row(j)) / (ni * u_star.row(j).norm());
      best = std::max(best, c);
    }
    best = std::clamp(best, -1.0, 1.0);
    terms.emplace_back(sq, 1.0 - best);
  }
  if (terms.empty()) throw InvalidArgument("degenerate weights: every student row is zero");
  std::sort(terms.begin(), terms.end());
  double total = 0.0, weighted = 0.0;
  for (const auto& [sq, dist] : terms) {
    total += sq;
    weighted += sq * dist;
  }
  return 2.0 * weighted / total;
}

double test_lrfit(const Matrix& u, const Activation& act, Scaling scaling, Split train, Split test) {
  const LinearFit fit = min_norm_linear_fit(u, act, scaling, train.X, train.Y);
  const TwoLayerNet refit(fit.v, u, scaling, act);
  return mse_loss(forward(refit, test.X), test.Y);
}

double smallest_eig_psd(const Matrix& A) {
  if (A.rows() != A.cols() || A.rows() == 0) throw DimensionError("expected a non-empty square matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> es(A, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed on NTK matrix");
  const Vector& lam = es.eigenvalues();
  const double top = std::max(std::abs(lam(0)), std::abs(lam(lam.size() - 1)));
  const double tol = static_cast<double>(A.rows()) * std::numeric_limits<double>::epsilon() * top;
  const double smallest = lam(0);
  return std::abs(smallest) <= tol ? 0.0 : std::max(smallest, 0.0);
}

double smallest_eig_ntk(const TwoLayerNet& net, const Matrix& X) { return smallest_eig_psd(ntk_matrix(net, X)); }

double pinv_frobenius_norm(const Matrix& J) {
  if (J.rows() == 0 || J.cols() == 0) throw DimensionError("empty Jacobian");
  if (J.rows() > J.cols()) {
    throw NumericalError("Jacobian with " + std::to_string(J.rows()) + " rows and " + std::to_string(J.cols()) +
                         " columns cannot have full row rank");
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(J.transpose());
  if (qr.rank() < J.rows()) {
    throw NumericalError("Jacobian is rank deficient: numerical rank " + std::to_string(qr.rank()) + " < " +
                         std::to_string(J.rows()) + " rows");
  }
  const Matrix S = J * J.transpose();
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() != Eigen::Success) throw NumericalError("J J^T is not positive definite");
  // trace(S^{-1}) = |L^{-1}|_F^2 for S = L L^T
  const Matrix Linv = llt.matrixL().solve(Matrix::Identity(S.rows(), S.cols()));
  return Linv.norm();
}

void TheoryConstants::validate() const {
  auto positive = [](double x, const char* name) {
    if (!(x > 0.0)) throw InvalidArgument(std::string(name) + " must be > 0");
  };
  positive(mu, "mu");
  positive(L_smooth, "L_smooth");
  positive(mu_H, "mu_H");
  positive(L_H, "L_H");
  positive(sigma0, "sigma0");
  positive(R, "R");
  positive(C_R, "C_R");
  if (!(alpha >= 0.0)) throw InvalidArgument("alpha must be >= 0");
  if (N < 1) throw InvalidArgument("N must be >= 1");
  if (mu > L_smooth) throw InvalidArgument("mu must not exceed L_smooth");
  if (mu_H > L_H) throw InvalidArgument("mu_H must not exceed L_H");
}

TheoryRates theory_rates(const TheoryConstants& tc, std::optional<double> sigma_w0) {
  tc.validate();
  TheoryRates out{2.0 * tc.mu / (tc.L_H * (1.0 + tc.alpha / tc.mu_H)), std::nullopt};
  if (sigma_w0) {
    if (!(*sigma_w0 >= 0.0)) throw InvalidArgument("sigma_w0 must be >= 0");
    out.mu_GF = tc.mu * *sigma_w0 / 4.0;
  }
  return out;
}

double blowup_threshold(const TheoryConstants& tc) {
  const double mu_gn = theory_rates(tc).mu_GN;
  const double lead = tc.mu * tc.mu_H * mu_gn / (8.0 * tc.L_smooth * static_cast<double>(tc.N));
  return lead * std::min(tc.R, 1.0 / tc.C_R) * std::min(tc.sigma0, tc.sigma0 * tc.sigma0);
}

PlTerms pl_terms(const Vector& v, const Matrix& u0, const Activation& act, Scaling scaling, const Matrix& X,
                 const Vector& Y) {
  const TwoLayerNet net(v, u0, scaling, act);
  const HiddenFeatures h = hidden_features(u0, act, X, false);
  const LossAndGrad lg = mse_loss_and_grad(forward(net, h), Y);
  const double m = static_cast<double>(u0.rows());
  const double mu = 1.0 / static_cast<double>(X.rows());

  // f = (1/sqrt(M)) F v~, so grad_{v~} l = F^T g / sqrt(M).
  const Vector grad = h.values.transpose() * lg.grad / std::sqrt(m);
  const double sigma0_sq = smallest_eig_psd(gram_matrix(u0, act, X));
  return {grad.squaredNorm(), 2.0 * mu * sigma0_sq * lg.loss};
}

double pl_residual(const Vector& v, const Matrix& u0, const Activation& act, Scaling scaling, const Matrix& X,
                   const Vector& Y) {
  return pl_terms(v, u0, act, scaling, X, Y).residual();
}

void MetricTrace::push(const MetricEntry& e) {
  if (!entries.empty() && e.iter <= entries.back().iter) {
    throw InvalidArgument("trace iterations must be strictly increasing (" + std::to_string(e.iter) +
                          " after " + std::to_string(entries.back().iter) + ")");
  }
  entries.push_back(e);
}

}  // namespace gnfeat
