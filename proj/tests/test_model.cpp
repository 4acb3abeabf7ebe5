#include <doctest.h>

#include "gnfeat/error.hpp"
#include "gnfeat/model.hpp"
#include "oracles.hpp"

using namespace gnfeat;

TEST_CASE("activation values and derivatives") {
  auto r = activation(Activation::relu(), -1.0);
  CHECK(r.value == 0.0);
  CHECK(r.derivative == 0.0);
  r = activation(Activation::relu(), 0.0);
  CHECK(r.derivative == 0.0);
  r = activation(Activation::relu(), 2.5);
  CHECK(r.value == 2.5);
  CHECK(r.derivative == 1.0);

  auto s = activation(Activation::silu(1.0), 0.0);
  CHECK(s.value == 0.0);
  CHECK(s.derivative == 0.5);

  s = activation(Activation::silu(1e6), 1.0);
  CHECK(std::abs(s.value - 1.0) < 1e-6);
  CHECK(std::abs(s.derivative - 1.0) < 1e-6);
  s = activation(Activation::silu(1e6), -1.0);
  CHECK(std::abs(s.value) < 1e-6);
  CHECK(std::abs(s.derivative) < 1e-6);

  // large |beta x| must not overflow
  s = activation(Activation::silu(1e3), -5.0);
  CHECK(std::isfinite(s.value));
  CHECK(std::isfinite(s.derivative));

  CHECK_THROWS_AS(activation(Activation::relu(), std::nan("")), InvalidArgument);
  CHECK_THROWS_WITH(activation(Activation::silu(1.0), INFINITY), doctest::Contains("non-finite input"));
  CHECK_THROWS_AS(Activation::silu(0.0).validate(), InvalidArgument);
  CHECK_THROWS_AS(Activation::silu(-1.0).validate(), InvalidArgument);
}

TEST_CASE("SiLU derivative matches finite differences") {
  for (double beta : {0.5, 1.0, 10.0}) {
    for (double x : {-3.0, -0.2, 0.0, 0.7, 4.0}) {
      const double h = 1e-6;
      const double fd = (activation(Activation::silu(beta), x + h).value -
                         activation(Activation::silu(beta), x - h).value) / (2 * h);
      CHECK(activation(Activation::silu(beta), x).derivative == doctest::Approx(fd).epsilon(1e-7));
    }
  }
}

TEST_CASE("enum names round-trip") {
  for (auto k : {ActivationKind::ReLU, ActivationKind::SiLU}) CHECK(parse_activation_kind(to_string(k)) == k);
  for (auto s : {Scaling::MeanField, Scaling::NTK}) CHECK(parse_scaling(to_string(s)) == s);
  CHECK_THROWS_AS(parse_scaling("bogus"), InvalidArgument);
}

TEST_CASE("forward hand examples") {
  Matrix X(1, 2);
  X << 3, 5;
  TwoLayerNet net(Vector::Constant(1, 2.0), (Matrix(1, 2) << 1, 0).finished(), Scaling::MeanField,
                  Activation::relu());
  CHECK(forward(net, X)(0) == 6.0);

  // M = 4, NTK, identical units: 4/sqrt(4) * act(u.x)
  Matrix u(4, 2);
  u.rowwise() = Eigen::RowVector2d(0.5, -0.25);
  TwoLayerNet ntk(Vector::Ones(4), u, Scaling::NTK, Activation::relu());
  Matrix X2(1, 2);
  X2 << 4, 2;
  CHECK(forward(ntk, X2)(0) == doctest::Approx(2.0 * 1.5));

  std::mt19937_64 rng(1);
  TwoLayerNet zero(Vector::Zero(7), oracle::randn(rng, 7, 3), Scaling::MeanField, Activation::relu());
  CHECK(forward(zero, oracle::randn(rng, 5, 3)).isZero(0.0));
}

TEST_CASE("forward matches the defining sum and is linear in v") {
  std::mt19937_64 rng(2);
  for (auto act : {Activation::relu(), Activation::silu(1.0), Activation::silu(10.0)}) {
    for (auto sc : {Scaling::MeanField, Scaling::NTK}) {
      const auto net = oracle::random_net(rng, 9, 4, act, sc);
      const Matrix X = oracle::randn(rng, 6, 4);
      CHECK(oracle::rel_err(forward(net, X), oracle::predict_all(net, X)) < 1e-13);
    }
  }
  const Matrix u = oracle::randn(rng, 8, 3);
  const Matrix X = oracle::randn(rng, 5, 3);
  // Dyadic v values keep every sum exact.
  Vector v1(8), v2(8);
  v1 << 1, -2, 0.5, 3, 0, 1, 2, -1;
  v2 << 0.25, 1, -1, 2, 4, -0.5, 1, 1;
  const auto f = [&](const Vector& v) { return forward(TwoLayerNet(v, u, Scaling::MeanField, Activation::relu()), X); };
  CHECK((f(v1 + v2) - (f(v1) + f(v2))).cwiseAbs().maxCoeff() <= 1e-15 * f(v1 + v2).cwiseAbs().maxCoeff() * 8);
}

TEST_CASE("scaling consistency between mean-field and NTK") {
  std::mt19937_64 rng(3);
  const auto mf = oracle::random_net(rng, 16, 3, Activation::silu(2.0), Scaling::MeanField);
  TwoLayerNet ntk = mf;
  ntk.scaling = Scaling::NTK;
  const Matrix X = oracle::randn(rng, 4, 3);
  CHECK(oracle::rel_err(forward(mf, X), forward(ntk, X) / 4.0) < 1e-15);
}

TEST_CASE("dimension errors") {
  std::mt19937_64 rng(4);
  const auto net = oracle::random_net(rng, 3, 2, Activation::relu());
  CHECK_THROWS_AS(forward(net, oracle::randn(rng, 2, 3)), DimensionError);
  CHECK_THROWS_AS(jacobian(net, oracle::randn(rng, 2, 3)), DimensionError);
  CHECK_THROWS_AS(ntk_matrix(net, oracle::randn(rng, 2, 3)), DimensionError);
  CHECK_THROWS_AS(gram_matrix(net.u, net.act, oracle::randn(rng, 2, 5)), DimensionError);
  CHECK_THROWS_AS(TwoLayerNet(Vector::Zero(2), Matrix::Zero(3, 2), Scaling::MeanField, Activation::relu()),
                  DimensionError);
}

TEST_CASE("flat parameter order is v then rows of u") {
  Matrix u(2, 3);
  u << 1, 2, 3, 4, 5, 6;
  TwoLayerNet net((Vector(2) << -1, -2).finished(), u, Scaling::MeanField, Activation::relu());
  Vector w = net.flat_params();
  REQUIRE(w.size() == 8);
  CHECK(w(0) == -1);
  CHECK(w(1) == -2);
  CHECK(w(2) == 1);
  CHECK(w(4) == 3);
  CHECK(w(5) == 4);
  w(7) = 60;
  net.set_flat_params(w);
  CHECK(net.u(1, 2) == 60);
  CHECK_THROWS_AS(net.set_flat_params(Vector::Zero(5)), DimensionError);
}

TEST_CASE("jacobian hand example and zero-v block") {
  TwoLayerNet net(Vector::Ones(1), (Matrix(1, 2) << 1, 0).finished(), Scaling::MeanField, Activation::relu());
  const Matrix X = (Matrix(1, 2) << 2, 7).finished();
  const Matrix J = jacobian(net, X);
  REQUIRE(J.cols() == 3);
  CHECK(J(0, 0) == 2.0);
  CHECK(J(0, 1) == 2.0);
  CHECK(J(0, 2) == 7.0);

  std::mt19937_64 rng(5);
  TwoLayerNet z(Vector::Zero(6), oracle::randn(rng, 6, 3), Scaling::MeanField, Activation::silu(1.0));
  const Matrix Jz = jacobian(z, oracle::randn(rng, 4, 3));
  CHECK(Jz.rightCols(18).isZero(0.0));
}

TEST_CASE("jacobian matches central finite differences for SiLU") {
  std::mt19937_64 rng(6);
  for (double beta : {1.0, 10.0, 1000.0}) {
    const auto net = oracle::random_net(rng, 5, 3, Activation::silu(beta));
    const Matrix X = oracle::randn(rng, 4, 3);
    const Matrix J = jacobian(net, X);
    const Matrix Jfd = oracle::fd_jacobian(net, X, beta > 100 ? 1e-7 : 1e-5);
    const double scale = J.cwiseAbs().maxCoeff();
    CHECK((J - Jfd).cwiseAbs().maxCoeff() / scale < 1e-5);
  }
}

TEST_CASE("J^T z without forming J") {
  std::mt19937_64 rng(7);
  const auto net = oracle::random_net(rng, 7, 3, Activation::silu(3.0), Scaling::NTK);
  const Matrix X = oracle::randn(rng, 5, 3);
  const Vector z = oracle::randn_vec(rng, 5);
  const auto h = hidden_features(net.u, net.act, X);
  CHECK(oracle::rel_err(jacobian_transpose_product(net, h, X, z), jacobian(net, X).transpose() * z) < 1e-13);
}

TEST_CASE("NTK matrix") {
  TwoLayerNet net(Vector::Ones(1), (Matrix(1, 2) << 1, 0).finished(), Scaling::MeanField, Activation::relu());
  const Matrix A = ntk_matrix(net, (Matrix(1, 2) << 1, 0).finished());
  CHECK(A(0, 0) == 2.0);

  std::mt19937_64 rng(8);
  for (auto act : {Activation::relu(), Activation::silu(1.0)}) {
    const auto r = oracle::random_net(rng, 6, 3, act);
    const Matrix X = oracle::randn(rng, 5, 3);
    const Matrix K = ntk_matrix(r, X);
    const Matrix J = jacobian(r, X);
    const Matrix JJ = J * J.transpose();
    CHECK(((K - JJ).cwiseAbs().array() / JJ.cwiseAbs().maxCoeff()).maxCoeff() < 1e-10);
    CHECK(K == K.transpose());
    CHECK(oracle::rel_err(ntk_matrix_from_jacobian(r, X), JJ) < 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> es(K);
    CHECK(es.eigenvalues()(0) >= -1e-10 * es.eigenvalues().maxCoeff());
  }
}

TEST_CASE("gram matrix") {
  const Matrix u = (Matrix(1, 2) << 1, 0).finished();
  const Matrix X = (Matrix(2, 2) << 1, 0, -1, 0).finished();
  const Matrix G = gram_matrix(u, Activation::relu(), X);
  CHECK(G(0, 0) == 1.0);
  CHECK(G(0, 1) == 0.0);
  CHECK(G(1, 0) == 0.0);
  CHECK(G(1, 1) == 0.0);

  std::mt19937_64 rng(9);
  const Matrix u8 = oracle::randn(rng, 8, 3);
  const Matrix X5 = oracle::randn(rng, 5, 3);
  for (auto act : {Activation::relu(), Activation::silu(1.0)}) {
    const Matrix G8 = gram_matrix(u8, act, X5);
    CHECK((G8 - oracle::naive_gram(u8, act, X5)).cwiseAbs().maxCoeff() < 1e-12);
    // (1/M) Gamma^T Gamma with Gamma the M x N feature matrix
    const Matrix Gamma = hidden_features(u8, act, X5, false).values.transpose();
    CHECK(oracle::rel_err(G8, Gamma.transpose() * Gamma / 8.0) < 1e-14);
    CHECK(G8 == G8.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(G8);
    CHECK(es.eigenvalues()(0) >= -1e-10 * es.eigenvalues().maxCoeff());
  }
}
