#include <doctest.h>

#include "gnfeat/data.hpp"
#include "gnfeat/error.hpp"
#include "gnfeat/metrics.hpp"
#include "gnfeat/optim.hpp"
#include "oracles.hpp"

using namespace gnfeat;

TEST_CASE("WCD hand cases") {
  const Matrix teacher = (Matrix(2, 3) << 1, 0, 0, 0, 1, 0).finished();
  const Matrix parallel = (Matrix(3, 3) << 2, 0, 0, 0, 0.5, 0, 7, 0, 0).finished();
  CHECK(wcd(parallel, teacher) == 0.0);

  const Matrix orth = (Matrix(2, 3) << 0, 0, 1, 0, 0, -4).finished();
  CHECK(wcd(orth, teacher) == 2.0);

  // norms 1 and 3: p = (0.1, 0.9)
  const Matrix mixed = (Matrix(2, 3) << 1, 0, 0, 0, 0, 3).finished();
  CHECK(wcd(mixed, teacher) == doctest::Approx(1.8).epsilon(1e-15));

  // anti-parallel reaches the upper end of the range
  const Matrix t1 = (Matrix(1, 2) << 1, 0).finished();
  CHECK(wcd((Matrix(1, 2) << -3, 0).finished(), t1) == 4.0);

  // zero rows are ignored on both sides
  const Matrix with_zero = (Matrix(2, 3) << 0, 0, 0, 5, 0, 0).finished();
  const Matrix teacher_zero = (Matrix(2, 3) << 0, 0, 0, 1, 0, 0).finished();
  CHECK(wcd(with_zero, teacher_zero) == 0.0);

  CHECK_THROWS_WITH_AS(wcd(Matrix::Zero(3, 3), teacher), doctest::Contains("degenerate weights"), InvalidArgument);
  CHECK_THROWS_AS(wcd(Matrix::Ones(3, 2), teacher), DimensionError);
}

TEST_CASE("WCD invariances") {
  std::mt19937_64 rng(40);
  for (int t = 0; t < 20; ++t) {
    const Matrix u = oracle::randn(rng, 30, 4);
    Matrix ts = oracle::randn(rng, 5, 4);
    const double base = wcd(u, ts);
    CHECK(base >= 0.0);
    CHECK(base <= 4.0);

    // permutations of student and teacher rows: exact
    Eigen::PermutationMatrix<Eigen::Dynamic> ps(30), pt(5);
    ps.setIdentity();
    pt.setIdentity();
    std::shuffle(ps.indices().data(), ps.indices().data() + 30, rng);
    std::shuffle(pt.indices().data(), pt.indices().data() + 5, rng);
    CHECK(wcd(ps * u, ts) == base);
    CHECK(wcd(u, pt * ts) == base);

    // power-of-two rescaling of a teacher row is exact
    Matrix scaled = ts;
    scaled.row(t % 5) *= 8.0;
    CHECK(wcd(u, scaled) == base);
    // other positive factors agree to rounding of the cosine
    scaled = ts;
    scaled.row(t % 5) *= 3.7;
    CHECK(std::abs(wcd(u, scaled) - base) <= 1e-15 * 4);
  }
}

TEST_CASE("Test-LRfit") {
  TeacherSpec spec;
  spec.d = 4;
  spec.M_star = 3;
  spec.seed = 5;
  const Dataset ds = make_teacher_dataset(spec, 12, 30, 6);

  // teacher units padded with zero rows
  const TwoLayerNet padded = embed_teacher(ds.teacher, 20, Scaling::MeanField);
  CHECK(test_lrfit(padded.u, padded.act, Scaling::MeanField, {ds.X_train, ds.Y_train}, {ds.X_test, ds.Y_test}) <
        1e-8);

  // random u: refit interpolates the training split
  std::mt19937_64 rng(41);
  const Matrix u = oracle::randn(rng, 50, 4);
  const auto fit = min_norm_linear_fit(u, Activation::relu(), Scaling::MeanField, ds.X_train, ds.Y_train);
  const TwoLayerNet refit(fit.v, u, Scaling::MeanField, Activation::relu());
  CHECK(mse_loss(forward(refit, ds.X_train), ds.Y_train) < 1e-8);

  // identical splits
  CHECK(test_lrfit(u, Activation::relu(), Scaling::MeanField, {ds.X_train, ds.Y_train}, {ds.X_train, ds.Y_train}) ==
        mse_loss(forward(refit, ds.X_train), ds.Y_train));

  // same computation as the RF baseline at initialization
  const double rf = mse_loss(forward(refit, ds.X_test), ds.Y_test);
  CHECK(test_lrfit(u, Activation::relu(), Scaling::MeanField, {ds.X_train, ds.Y_train}, {ds.X_test, ds.Y_test}) == rf);
}

TEST_CASE("smallest NTK eigenvalue") {
  TwoLayerNet net(Vector::Ones(1), (Matrix(1, 2) << 1, 0).finished(), Scaling::MeanField, Activation::relu());
  CHECK(smallest_eig_ntk(net, (Matrix(1, 2) << 1, 0).finished()) == 2.0);

  std::mt19937_64 rng(42);
  const auto r = oracle::random_net(rng, 10, 3, Activation::silu(1.0));
  Matrix X = oracle::randn(rng, 6, 3);
  const Matrix J = jacobian(r, X);
  Eigen::SelfAdjointEigenSolver<Matrix> es(J * J.transpose());
  CHECK(smallest_eig_ntk(r, X) == doctest::Approx(es.eigenvalues()(0)).epsilon(1e-8));

  X.row(4) = X.row(1);
  const Matrix A = ntk_matrix(r, X);
  CHECK(smallest_eig_ntk(r, X) <= 1e-8 * A.norm());
  CHECK(smallest_eig_ntk(r, X) >= 0.0);
}

TEST_CASE("pseudo-inverse Frobenius norm") {
  CHECK(pinv_frobenius_norm((Matrix(1, 1) << 2).finished()) == 0.5);
  std::mt19937_64 rng(43);
  for (int t = 0; t < 10; ++t) {
    const Matrix J = oracle::randn(rng, 4, 20);
    Eigen::JacobiSVD<Matrix> svd(J);
    const double ref = std::sqrt(svd.singularValues().cwiseInverse().cwiseAbs2().sum());
    CHECK(std::abs(pinv_frobenius_norm(J) - ref) <= 1e-10 * ref);
  }
  Matrix deficient = oracle::randn(rng, 4, 10);
  deficient.row(3) = deficient.row(0) + deficient.row(1);
  CHECK_THROWS_WITH_AS(pinv_frobenius_norm(deficient), doctest::Contains("rank 3"), NumericalError);
  CHECK_THROWS_AS(pinv_frobenius_norm(oracle::randn(rng, 5, 3)), NumericalError);
}

TEST_CASE("theory rates") {
  TheoryConstants tc;
  tc.mu = tc.L_smooth = 1.0 / 500;
  CHECK(theory_rates(tc).mu_GN == doctest::Approx(0.004).epsilon(1e-15));
  CHECK(!theory_rates(tc).mu_GF.has_value());
  tc.mu = 0.3;
  tc.L_smooth = 1.0;
  CHECK(theory_rates(tc).mu_GN == 2 * 0.3);
  CHECK(*theory_rates(tc, 0.0).mu_GF == 0.0);
  CHECK(*theory_rates(tc, 2.0).mu_GF == 0.3 * 2.0 / 4.0);
  tc.alpha = 1.0;
  tc.mu_H = tc.L_H = 0.5;
  CHECK(theory_rates(tc).mu_GN == doctest::Approx(2 * 0.3 / (0.5 * 3.0)));

  TheoryConstants bad;
  bad.mu = 2.0;
  CHECK_THROWS_AS(theory_rates(bad), InvalidArgument);
}

TEST_CASE("blow-up threshold") {
  TheoryConstants tc;
  tc.N = 10;
  CHECK(blowup_threshold(tc) == doctest::Approx(0.025).epsilon(1e-15));

  tc.sigma0 = 0.25;
  const double e1 = blowup_threshold(tc);
  tc.sigma0 = 0.5;
  CHECK(blowup_threshold(tc) == doctest::Approx(4 * e1).epsilon(1e-15));

  tc.R = 1e300;
  tc.C_R = 2.0;
  tc.sigma0 = 1.0;
  CHECK(blowup_threshold(tc) == doctest::Approx(0.025 * 0.5).epsilon(1e-15));
}

TEST_CASE("PL inequality") {
  std::mt19937_64 rng(44);
  const Matrix u0 = oracle::randn(rng, 40, 3);
  const Matrix X = oracle::randn(rng, 8, 3);
  const Vector Y = oracle::randn_vec(rng, 8);
  for (auto sc : {Scaling::MeanField, Scaling::NTK}) {
    // interpolating v: both sides vanish
    const auto fit = min_norm_linear_fit(u0, Activation::relu(), sc, X, Y);
    const auto at_opt = pl_terms(fit.v, u0, Activation::relu(), sc, X, Y);
    CHECK(std::abs(at_opt.residual()) < 1e-10);

    // v = 0 with Y != 0: sides computed independently
    const auto at0 = pl_terms(Vector::Zero(40), u0, Activation::relu(), sc, X, Y);
    const Matrix G = oracle::naive_gram(u0, Activation::relu(), X);
    const Vector g = -Y / 8.0;
    CHECK(at0.grad_norm_sq == doctest::Approx(g.dot(G * g)).epsilon(1e-12));
    Eigen::SelfAdjointEigenSolver<Matrix> es(G);
    CHECK(at0.rhs == doctest::Approx(2.0 / 8.0 * es.eigenvalues()(0) * Y.squaredNorm() / 16.0).epsilon(1e-10));
    CHECK(at0.residual() >= 0.0);
  }
}

TEST_CASE("metric trace ordering") {
  MetricTrace t;
  t.push({0, 0, 1, 1, 1, 1, 1});
  t.push({5, 0, 1, 1, 1, 1, 1});
  CHECK_THROWS_AS(t.push({5, 0, 1, 1, 1, 1, 1}), InvalidArgument);
  CHECK(t.entries.size() == 2);
}
