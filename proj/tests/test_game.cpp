#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace jt;

namespace {

const double kP = (std::sqrt(3.0) - 1.0) / 2.0;

MatFamily ref_game3(const std::string& key) { return reference_family("game3_reference.json", key); }

GameSignal game3_signal(double q1_scale, double q2_scale) {
  GameSignal s;
  s.kappa = 0.8;
  s.b = VecFamily{Vec::Ones(3), Vec::Zero(3), Vec::LinSpaced(3, -1, 1)};
  s.q[0] = VecFamily{q1_scale * Vec::Ones(3), q1_scale * Vec::LinSpaced(3, 0, 1), Vec::Zero(3)};
  s.q[1] = VecFamily{q2_scale * Vec::LinSpaced(3, 1, -1), Vec::Zero(3), q2_scale * Vec::Ones(3)};
  for (int k = 0; k < 2; ++k)
    for (int l = 0; l < 2; ++l) s.rho[k][l] = VecFamily::zeros(3, 2);
  return s;
}

}  // namespace

TEST(GameOperator, ZeroValueFunctions) {
  const auto p = game3();
  const auto ops = game_operator(MatFamily::zeros(3, 3, 3), MatFamily::zeros(3, 3, 3), p);
  for (std::size_t i = 0; i < 3; ++i)
    for (int k = 0; k < 2; ++k) {
      EXPECT_EQ((ops.M[k][i] - p.cost[k].Q[i]).norm(), 0.0);
      for (int l = 0; l < 2; ++l) EXPECT_EQ((ops.L[k][l][i] - p.cost[l].S[k][i].transpose()).norm(), 0.0);
    }
}

TEST(GameOperator, SymmetricScalarSubstitution) {
  const auto p = symmetric_game();
  const double x = 0.4;
  const auto ops = game_operator(MatFamily{m1(x)}, MatFamily{m1(x)}, p);
  for (int k = 0; k < 2; ++k) {
    EXPECT_DOUBLE_EQ(ops.M[k][0](0, 0), -2 * x + 1);
    for (int l = 0; l < 2; ++l) EXPECT_DOUBLE_EQ(ops.L[k][l][0](0, 0), x);
  }
}

TEST(GameOperator, PrintedSolutionOfGame3) {
  const auto p = game3();
  const auto [E1, E2] = game_residuals(ref_game3("P1"), ref_game3("P2"), ref_game3("Theta1"), ref_game3("Theta2"), p);
  for (double r : frobenius_norms(E1)) EXPECT_LE(r, 1.1e-7);
  for (double r : frobenius_norms(E2)) EXPECT_LE(r, 1.1e-7);
}

TEST(GainConstraint, SymmetricScalar) {
  const auto [T1, T2] = solve_gain_constraint(MatFamily{m1(kP)}, MatFamily{m1(kP)}, symmetric_game());
  EXPECT_NEAR(T1[0](0, 0), -kP, 1e-15);
  EXPECT_NEAR(T2[0](0, 0), -kP, 1e-15);
}

TEST(GainConstraint, Game3PrintedGains) {
  const auto p = game3();
  const auto [T1, T2] = solve_gain_constraint(ref_game3("P1"), ref_game3("P2"), p);
  EXPECT_LE(max_abs_diff(T1, ref_game3("Theta1")), 1e-6);
  EXPECT_LE(max_abs_diff(T2, ref_game3("Theta2")), 1e-6);
  EXPECT_LE(constraint_residual(ref_game3("P1"), ref_game3("P2"), T1, T2, p), 1e-12);
}

TEST(GainConstraint, SingularBlock) {
  auto in = symmetric_game_input();
  in.cost[0].R12 = {m1(1)};
  in.cost[1].R12 = {m1(1)};
  const auto p = validate_game_problem(in);
  try {
    solve_gain_constraint(MatFamily{m1(0.1)}, MatFamily{m1(0.1)}, p);
    FAIL() << "expected SingularConstraintBlock";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SingularConstraintBlock);
  }
}

TEST(GameResiduals, SymmetricClosedForm) {
  // 2p² + 2p − 1 = 0 after substituting θ = −p.
  const auto [E1, E2] = game_residuals(MatFamily{m1(kP)}, MatFamily{m1(kP)}, MatFamily{m1(-kP)},
                                       MatFamily{m1(-kP)}, symmetric_game());
  EXPECT_LT(std::abs(E1[0](0, 0)), 1e-12);
  EXPECT_LT(std::abs(E2[0](0, 0)), 1e-12);
}

TEST(GameResiduals, ZeroEverything) {
  const auto p = game3();
  const auto Z = MatFamily::zeros(3, 3, 3);
  const auto T = MatFamily::zeros(3, 2, 3);
  auto [E1, E2] = game_residuals(Z, Z, T, T, p);
  // With zero P the residual is Qᵏ − S_kᵏᵀR_kkᵏ⁻¹S_kᵏ; with S = 0 it is Qᵏ.
  for (std::size_t i = 0; i < 3; ++i) {
    const Mat e1 = p.cost[0].Q[i] - p.cost[0].S[0][i].transpose() * p.cost[0].Rb[0][0][i].inverse() * p.cost[0].S[0][i];
    EXPECT_LT((E1[i] - e1).cwiseAbs().maxCoeff(), 1e-13);
  }
  const auto sp = symmetric_game();
  auto [F1, F2] = game_residuals(MatFamily{m1(0)}, MatFamily{m1(0)}, MatFamily{m1(0)}, MatFamily{m1(0)}, sp);
  EXPECT_EQ(F1[0](0, 0), 1.0);
  EXPECT_EQ(F2[0](0, 0), 1.0);
}

TEST(SolveGame, SymmetricScalar) {
  const auto sol = solve_game(symmetric_game());
  EXPECT_NEAR(sol.P1[0](0, 0), kP, 1e-9);
  EXPECT_NEAR(sol.P2[0](0, 0), kP, 1e-9);
  EXPECT_NEAR(sol.Theta1[0](0, 0), -kP, 1e-9);
  EXPECT_NEAR(sol.Theta2[0](0, 0), -kP, 1e-9);
  EXPECT_TRUE(sol.certificate.feasible);
}

TEST(SolveGame, Game3MatchesPrintedBlocks) {
  GameOptions o;
  o.tol = 1e-7;
  const auto p = game3();
  const auto sol = solve_game(p, o);
  EXPECT_LE(max_of(sol.residual_norms_1), 1.5e-7);
  EXPECT_LE(max_of(sol.residual_norms_2), 1.5e-7);
  EXPECT_LE(max_abs_diff(sol.P1, ref_game3("P1")), 1e-6);
  EXPECT_LE(max_abs_diff(sol.P2, ref_game3("P2")), 1e-6);
  EXPECT_LE(max_abs_diff(sol.Theta1, ref_game3("Theta1")), 1e-6);
  EXPECT_LE(max_abs_diff(sol.Theta2, ref_game3("Theta2")), 1e-6);
  EXPECT_TRUE(sol.certificate.feasible);
  EXPECT_LE(sol.constraint_residual, o.tol);
}

TEST(SolveGame, DecouplesWhenSecondPlayerHasNoInput) {
  auto in = to_input(game3());
  for (auto& b : in.B[1]) b.setZero();
  in.cost[0].R12 = std::vector<Mat>(3, Mat::Zero(2, 2));
  in.cost[0].R21.clear();
  in.cost[0].S[1] = std::vector<Mat>(3, Mat::Zero(2, 3));
  in.cost[1].R12 = std::vector<Mat>(3, Mat::Zero(2, 2));
  in.cost[1].R21.clear();
  in.cost[1].S[1] = std::vector<Mat>(3, Mat::Zero(2, 3));
  in.cost[0].R22 = std::vector<Mat>(3, Mat::Identity(2, 2));
  in.cost[1].R22 = std::vector<Mat>(3, Mat::Identity(2, 2));
  const auto p = validate_game_problem(in);
  const auto sol = solve_game(p);

  LqProblemInput lq;
  lq.generator = p.gen.matrix();
  lq.A = p.A.entries();
  lq.B = p.B[0].entries();
  lq.Q = p.cost[0].Q.entries();
  lq.S = p.cost[0].S[0].entries();
  lq.R = p.cost[0].Rb[0][0].entries();
  const auto care = solve_care(validate_lq_problem(lq));
  EXPECT_LE(max_abs_diff(sol.P1, care.P), 1e-8);
  for (const auto& t : sol.Theta2) EXPECT_LE(t.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(SolveGame, ReductionIdentity) {
  const auto p = game3();
  const auto sol = solve_game(p);
  for (int k = 0; k < 2; ++k) {
    const auto eff = effective_player_problem(p, k, k == 0 ? sol.Theta2 : sol.Theta1);
    const auto reduced = care_residual(k == 0 ? sol.P1 : sol.P2, eff);
    const auto [E1, E2] = game_residuals(sol.P1, sol.P2, sol.Theta1, sol.Theta2, p);
    EXPECT_LE(max_abs_diff(reduced, k == 0 ? E1 : E2), 1e-10);
  }
}

TEST(Feedforward, HomogeneousGameIsZero) {
  const auto p = game3();
  const auto eta = solve_game_feedforward(solve_game(p), p, std::nullopt);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(eta.h1[i].norm(), 0.0);
    EXPECT_EQ(eta.h2[i].norm(), 0.0);
    EXPECT_EQ(eta.nu1[i].norm(), 0.0);
    EXPECT_EQ(eta.nu2[i].norm(), 0.0);
  }
}

TEST(Feedforward, SymmetricForcedScalar) {
  const auto p = symmetric_forced_game();
  const auto eta = solve_game_feedforward(solve_game(p), p, p.inhomog);
  // Player 1's best response to u2 = −pX − e^{−t}h: a scalar LQ with drift
  // −1 − p, forcing 1 − h and linear state cost ph from its weight on u2, so
  // (2 + 2p)h = p(1 − h) + ph.
  const double h = kP / (2.0 + 2.0 * kP);
  EXPECT_NEAR(eta.h1[0](0), h, 1e-9);
  EXPECT_NEAR(eta.h2[0](0), eta.h1[0](0), 1e-12);
  EXPECT_NEAR(eta.nu1[0](0), -h, 1e-9);
  EXPECT_NEAR(eta.nu2[0](0), eta.nu1[0](0), 1e-12);
  EXPECT_LE(eta.residual, 1e-12);
}

TEST(Feedforward, OneSilentPlayerStillCoupled) {
  auto p = game3();
  const auto sol = solve_game(p);
  const auto sig = game3_signal(1.0, 0.0);
  const auto eta = solve_game_feedforward(sol, p, sig);
  EXPECT_LE(eta.constraint_residual, 1e-9);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& c1 = p.cost[0].Rb;
    const auto& c2 = p.cost[1].Rb;
    const Vec r1 = c1[0][0][i] * eta.nu1[i] + c1[0][1][i] * eta.nu2[i] + p.B[0][i].transpose() * eta.h1[i];
    const Vec r2 = c2[1][0][i] * eta.nu1[i] + c2[1][1][i] * eta.nu2[i] + p.B[1][i].transpose() * eta.h2[i];
    EXPECT_LE(r1.norm(), 1e-9);
    EXPECT_LE(r2.norm(), 1e-9);
  }
  double nu2 = 0.0;
  for (const auto& v : eta.nu2) nu2 += v.norm();
  EXPECT_GT(nu2, 0.0);
}

TEST(Feedforward, PrintedFormCoincidesWithoutCrossWeights) {
  const auto p = symmetric_forced_game();
  const auto sol = solve_game(p);
  const auto a = solve_game_feedforward(sol, p, p.inhomog, FeedforwardForm::BestResponse);
  const auto b = solve_game_feedforward(sol, p, p.inhomog, FeedforwardForm::AsPrinted);
  EXPECT_NEAR(a.h1[0](0), b.h1[0](0), 1e-14);
  EXPECT_NEAR(a.nu1[0](0), b.nu1[0](0), 1e-14);
}

TEST(Feedforward, PrintedFormDiffersWithCrossWeights) {
  const auto p = game3();
  const auto sol = solve_game(p);
  const auto sig = game3_signal(1.0, 1.0);
  const auto a = solve_game_feedforward(sol, p, sig, FeedforwardForm::BestResponse);
  const auto b = solve_game_feedforward(sol, p, sig, FeedforwardForm::AsPrinted);
  double diff = 0.0;
  for (std::size_t i = 0; i < 3; ++i) diff = std::max(diff, (a.h1[i] - b.h1[i]).norm());
  EXPECT_GT(diff, 1e-6);
  // Both forms satisfy the feedforward constraint rows.
  EXPECT_LE(a.constraint_residual, 1e-9);
  EXPECT_LE(b.constraint_residual, 1e-9);
}
