#include "test_support.hpp"

#include <gtest/gtest.h>
#include <unsupported/Eigen/KroneckerProduct>

using namespace jt;

namespace {

Generator two_state() {
  Mat pi(2, 2);
  pi << -1, 1, 1, -1;
  return validate_generator(pi);
}

}  // namespace

TEST(CoupledLyapunov, ScalarSingleRegime) {
  const auto P = coupled_lyapunov_solve(MatFamily{m1(-1)}, validate_generator(Mat::Zero(1, 1)), MatFamily{m1(1)});
  EXPECT_NEAR(P[0](0, 0), 0.5, 1e-14);
}

TEST(CoupledLyapunov, TwoRegimeScalar) {
  // −3p₁ + p₂ + 1 = 0, p₁ − 5p₂ + 1 = 0.
  const auto P = coupled_lyapunov_solve(MatFamily{m1(-1), m1(-2)}, two_state(), MatFamily{m1(1), m1(1)});
  EXPECT_NEAR(P[0](0, 0), 3.0 / 7.0, 1e-10);
  EXPECT_NEAR(P[1](0, 0), 2.0 / 7.0, 1e-10);
}

TEST(CoupledLyapunov, ClosedLoopOfLq3MatchesKroneckerOracle) {
  const auto p = lq3();
  const auto theta = reference_family("lq3_reference.json", "Theta");
  const auto Acl = closed_loop(p.A, p.B, theta);
  const auto W = MatFamily::filled(3, Mat::Identity(3, 3));
  const auto P = coupled_lyapunov_solve(Acl, p.gen, W);
  const auto oracle = kron_lyapunov(Acl, p.gen.matrix(), W);
  EXPECT_LT(max_abs_diff(P, oracle), 1e-10);
  for (const auto& blk : P) EXPECT_TRUE(is_positive_definite(blk, 0.0));
  const auto res = coupled_lyapunov_residual({Acl, p.gen, W}, P);
  for (double r : res) EXPECT_LT(r, 1e-10 * (1 + std::sqrt(3.0)));
}

TEST(CoupledLyapunov, SingleRegimeAgreesWithPlainLyapunov) {
  Mat a(2, 2);
  a << -1, 2, 0, -3;
  Mat w(2, 2);
  w << 2, 0.5, 0.5, 1;
  const auto P = coupled_lyapunov_solve(MatFamily{a}, validate_generator(Mat::Zero(1, 1)), MatFamily{w});
  // Independent solve of PA + AᵀP + W = 0 through the Kronecker form.
  const Mat K = Eigen::kroneckerProduct(a.transpose(), Mat::Identity(2, 2)).eval() +
                Eigen::kroneckerProduct(Mat::Identity(2, 2), a.transpose()).eval();
  const Vec x = K.fullPivLu().solve(Vec(-w.reshaped()));
  EXPECT_LT((P[0] - x.reshaped(2, 2)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(CoupledLyapunov, SingularOperatorReported) {
  try {
    coupled_lyapunov_solve(MatFamily{m1(0)}, validate_generator(Mat::Zero(1, 1)), MatFamily{m1(1)});
    FAIL() << "expected SingularOperator";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SingularOperator);
  }
}

TEST(CoupledLyapunov, OperatorMatchesDefinition) {
  const auto p = lq3();
  const auto P = reference_family("lq3_reference.json", "P");
  const auto op = coupled_lyapunov_operator(p.A, p.gen, P);
  for (std::size_t i = 0; i < 3; ++i) {
    Mat expect = P[i] * p.A[i] + p.A[i].transpose() * P[i];
    for (std::size_t j = 0; j < 3; ++j) expect += p.gen.rate(i, j) * P[j];
    EXPECT_LT((op[i] - expect).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(SpectralAbscissa, Scalars) {
  const auto g = validate_generator(Mat::Zero(1, 1));
  EXPECT_NEAR(coupled_spectral_abscissa(MatFamily{m1(-1)}, g), -2.0, 1e-14);
  EXPECT_NEAR(coupled_spectral_abscissa(MatFamily{m1(0.5)}, g), 1.0, 1e-14);
}

TEST(SpectralAbscissa, TwoRegimeScalar) {
  // Eigenvalues of [[−3,1],[1,−5]] are −4 ± √2.
  const double a = coupled_spectral_abscissa(MatFamily{m1(-1), m1(-2)}, two_state());
  EXPECT_NEAR(a, -4.0 + std::sqrt(2.0), 1e-12);
  EXPECT_GT(a, -6.0);
  EXPECT_LT(a, -2.0);
}

TEST(PositiveDefinite, Boundaries) {
  EXPECT_TRUE(is_positive_definite(Mat::Identity(3, 3), 1e-10));
  Mat d = Mat::Zero(2, 2);
  d(0, 0) = 1;
  d(1, 1) = -1e-6;
  EXPECT_FALSE(is_positive_definite(d, 0.0));
  EXPECT_TRUE(is_positive_definite(Mat::Zero(2, 2), -1e-12));
}
