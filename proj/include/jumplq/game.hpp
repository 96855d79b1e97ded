#pragma once

#include "jumplq/policy.hpp"

#include <array>
#include <optional>
#include <sstream>

namespace jumplq {

/// ℳ_k(P_k,i) and ℒ_k^l(P_l,i) = P_l(i)B_k(i) + S_k^l(i)ᵀ, indexed L[k][l]
/// (k: control, l: player).
struct GameOperators {
  std::array<MatFamily, 2> M;
  std::array<std::array<MatFamily, 2>, 2> L;
};

inline GameOperators game_operator(const MatFamily& P1, const MatFamily& P2, const MjlsGameProblem& problem) {
  const auto d = problem.regimes();
  require_shape(P1, d, problem.n, problem.n, "P1");
  require_shape(P2, d, problem.n, problem.n, "P2");
  const std::array<const MatFamily*, 2> P{&P1, &P2};
  GameOperators ops;
  for (int l = 0; l < 2; ++l) {
    const MatFamily lyap = coupled_lyapunov_operator(problem.A, problem.gen, *P[l]);
    ops.M[l] = lyap.map([&](const Mat& m, std::size_t i) -> Mat { return m + problem.cost[l].Q[i]; });
    for (int k = 0; k < 2; ++k) {
      ops.L[k][l] = P[l]->map([&](const Mat& p, std::size_t i) -> Mat {
        return p * problem.B[k][i] + problem.cost[l].S[k][i].transpose();
      });
    }
  }
  return ops;
}

namespace detail {

/// Stacked per-regime block [[R11¹, R12¹], [R21², R22²]].
inline Mat constraint_block(const MjlsGameProblem& problem, std::size_t i) {
  const auto m1 = problem.m[0];
  const auto m2 = problem.m[1];
  Mat K(m1 + m2, m1 + m2);
  K.topLeftCorner(m1, m1) = problem.cost[0].Rb[0][0][i];
  K.topRightCorner(m1, m2) = problem.cost[0].Rb[0][1][i];
  K.bottomLeftCorner(m2, m1) = problem.cost[1].Rb[1][0][i];
  K.bottomRightCorner(m2, m2) = problem.cost[1].Rb[1][1][i];
  return K;
}

}  // namespace detail

/// Solves R11¹Θ1 + R12¹Θ2 + ℒ₁¹ᵀ = 0, R21²Θ1 + R22²Θ2 + ℒ₂²ᵀ = 0 per regime.
inline std::pair<MatFamily, MatFamily> solve_gain_constraint(const MatFamily& P1, const MatFamily& P2,
                                                             const MjlsGameProblem& problem) {
  const auto ops = game_operator(P1, P2, problem);
  const auto d = problem.regimes();
  const auto m1 = problem.m[0];
  const auto m2 = problem.m[1];
  std::vector<Mat> T1(d), T2(d);
  for (std::size_t i = 0; i < d; ++i) {
    const Mat K = detail::constraint_block(problem, i);
    Eigen::JacobiSVD<Mat> svd(K, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double rel = detail::relative_min_singular(svd);
    if (rel < 1e-12) {
      std::ostringstream os;
      os << "regime " << i + 1 << ": constraint block relative smallest singular value " << rel;
      throw Error(Errc::SingularConstraintBlock, os.str());
    }
    Mat rhs(m1 + m2, problem.n);
    rhs.topRows(m1) = -ops.L[0][0][i].transpose();
    rhs.bottomRows(m2) = -ops.L[1][1][i].transpose();
    const Mat sol = K.fullPivLu().solve(rhs);
    T1[i] = sol.topRows(m1);
    T2[i] = sol.bottomRows(m2);
  }
  return {MatFamily(std::move(T1)), MatFamily(std::move(T2))};
}

/// Largest per-regime Frobenius norm of the gain-constraint residual.
inline double constraint_residual(const MatFamily& P1, const MatFamily& P2, const MatFamily& T1,
                                  const MatFamily& T2, const MjlsGameProblem& problem) {
  const auto ops = game_operator(P1, P2, problem);
  double r = 0.0;
  for (std::size_t i = 0; i < problem.regimes(); ++i) {
    const auto& c1 = problem.cost[0].Rb;
    const auto& c2 = problem.cost[1].Rb;
    const Mat r1 = c1[0][0][i] * T1[i] + c1[0][1][i] * T2[i] + ops.L[0][0][i].transpose();
    const Mat r2 = c2[1][0][i] * T1[i] + c2[1][1][i] * T2[i] + ops.L[1][1][i].transpose();
    r = std::max(r, std::sqrt(r1.squaredNorm() + r2.squaredNorm()));
  }
  return r;
}

/// Right-hand sides of both cross-coupled Riccati equations, evaluated verbatim.
inline std::pair<MatFamily, MatFamily> game_residuals(const MatFamily& P1, const MatFamily& P2,
                                                      const MatFamily& T1, const MatFamily& T2,
                                                      const MjlsGameProblem& problem) {
  const auto ops = game_operator(P1, P2, problem);
  const std::array<const MatFamily*, 2> T{&T1, &T2};
  std::array<std::vector<Mat>, 2> E;
  for (int k = 0; k < 2; ++k) {
    const int l = 1 - k;
    const auto& R = problem.cost[k].Rb;
    for (std::size_t i = 0; i < problem.regimes(); ++i) {
      const Mat& Lkk = ops.L[k][k][i];
      const Mat& Llk = ops.L[l][k][i];
      const auto Rkk = R[k][k][i].llt();
      const Mat& Th = (*T[l])[i];
      const Mat K = Llk - Lkk * Rkk.solve(R[k][l][i]);
      const Mat schur = R[l][l][i] - R[l][k][i] * Rkk.solve(R[k][l][i]);
      E[k].push_back(ops.M[k][i] - Lkk * Rkk.solve(Lkk.transpose()) + K * Th + Th.transpose() * K.transpose() +
                     Th.transpose() * schur * Th);
    }
  }
  return {MatFamily(std::move(E[0])), MatFamily(std::move(E[1]))};
}

/// Player k's single-player problem with the other player's gain Θ_l frozen:
/// Â = A + B_lΘ_l, Q̂ = Qᵏ + S_lᵏᵀΘ_l + Θ_lᵀS_lᵏ + Θ_lᵀR_llᵏΘ_l,
/// Ŝ = S_kᵏ + R_klᵏΘ_l, R̂ = R_kkᵏ. Player index k is 0-based.
inline MjlsLqProblem effective_player_problem(const MjlsGameProblem& problem, int k, const MatFamily& theta_other) {
  if (k != 0 && k != 1) throw Error(Errc::InvalidArgument, "player index must be 0 or 1");
  const int l = 1 - k;
  require_shape(theta_other, problem.regimes(), problem.m[l], problem.n, "Theta_other");
  const auto& c = problem.cost[k];
  MjlsLqProblem out;
  out.gen = problem.gen;
  out.n = problem.n;
  out.m = problem.m[k];
  out.A = problem.A.map([&](const Mat& a, std::size_t i) -> Mat { return a + problem.B[l][i] * theta_other[i]; });
  out.B = problem.B[k];
  out.Q = c.Q.map([&](const Mat& q, std::size_t i) -> Mat {
    const Mat& T = theta_other[i];
    const Mat cross = c.S[l][i].transpose() * T;
    return symmetrize(q + cross + cross.transpose() + T.transpose() * c.Rb[l][l][i] * T);
  });
  out.S = c.S[k].map([&](const Mat& s, std::size_t i) -> Mat { return s + c.Rb[k][l][i] * theta_other[i]; });
  out.R = c.Rb[k][k];
  return out;
}

struct GameOptions {
  double tol = 1e-9;
  int max_iter = 100;
  double relaxation = 1.0;
  int inner_max_iter = 100;
};

struct GameSolution {
  MatFamily P1, P2;
  MatFamily Theta1, Theta2;
  MatFamily E1, E2;
  std::vector<double> residual_norms_1, residual_norms_2;
  double constraint_residual = 0.0;
  int iterations = 0;
  StabilityCertificate certificate;
  /// max(‖E1‖, ‖E2‖, constraint residual) after each outer iteration.
  std::vector<double> history;
};

namespace detail {

inline MatFamily best_response(const MjlsGameProblem& problem, int k, const MatFamily& theta_other,
                               const MatFamily& warm, double tol, int max_iter, int outer, MatFamily& P_out) {
  const auto eff = effective_player_problem(problem, k, theta_other);
  MatFamily start = warm;
  if (!is_stabilizer(start, eff).feasible) {
    try {
      start = synthesize_stabilizer(eff);
    } catch (const Error& e) {
      throw Error(Errc::InnerCareFailed, "player " + std::to_string(k + 1) + ", sweep " +
                                             std::to_string(outer) + ": " + e.detail());
    }
  }
  NewtonResult nk;
  try {
    nk = newton_kleinman(RiccatiData::from(eff), start, tol, max_iter);
  } catch (const Error& e) {
    throw Error(Errc::InnerCareFailed, "player " + std::to_string(k + 1) + ", sweep " +
                                           std::to_string(outer) + ": " + e.detail());
  }
  // Newton may stall at rounding level below the requested inner tolerance.
  if (!nk.converged && !(max_of(nk.residual_norms) <= 10.0 * tol)) {
    std::ostringstream os;
    os << "player " << k + 1 << ", sweep " << outer << ": best residual " << max_of(nk.residual_norms);
    throw Error(Errc::InnerCareFailed, os.str());
  }
  P_out = std::move(nk.P);
  return nk.Theta;
}

}  // namespace detail

/// Gauss–Seidel best response over the two players' reduced problems, with
/// the joint gain-constraint solve closing each sweep.
inline GameSolution solve_game(const MjlsGameProblem& problem, const GameOptions& opts = {}) {
  if (!(opts.tol > 0.0)) throw Error(Errc::InvalidArgument, "tol must be positive");
  if (opts.max_iter < 1) throw Error(Errc::InvalidArgument, "max_iter must be at least 1");
  if (!(opts.relaxation > 0.0 && opts.relaxation <= 1.0))
    throw Error(Errc::InvalidArgument, "relaxation must lie in (0, 1]");
  const auto d = problem.regimes();
  const auto n = problem.n;
  const auto m1 = problem.m[0];
  const auto m2 = problem.m[1];

  MatFamily T1 = MatFamily::zeros(d, m1, n);
  MatFamily T2 = MatFamily::zeros(d, m2, n);
  if (!check_condition_a(problem.A, problem.gen).feasible) {
    const MatFamily Bj = problem.B[0].map([&](const Mat& b1, std::size_t i) -> Mat {
      Mat b(n, m1 + m2);
      b << b1, problem.B[1][i];
      return b;
    });
    MatFamily joint;
    try {
      joint = synthesize_stabilizer(problem.gen, problem.A, Bj);
    } catch (const Error& e) {
      throw Error(Errc::StabilizerSynthesisFailed, e.detail());
    }
    T1 = joint.map([&](const Mat& t, std::size_t) -> Mat { return t.topRows(m1); });
    T2 = joint.map([&](const Mat& t, std::size_t) -> Mat { return t.bottomRows(m2); });
  }

  const double inner_tol = 0.1 * opts.tol;
  double omega = opts.relaxation;
  double previous = std::numeric_limits<double>::infinity();
  GameSolution best;
  double best_r = std::numeric_limits<double>::infinity();
  std::vector<double> history;

  for (int it = 1; it <= opts.max_iter; ++it) {
    MatFamily P1, P2;
    const MatFamily br1 = detail::best_response(problem, 0, T2, T1, inner_tol, opts.inner_max_iter, it, P1);
    detail::best_response(problem, 1, br1, T2, inner_tol, opts.inner_max_iter, it, P2);
    auto [N1, N2] = solve_gain_constraint(P1, P2, problem);
    if (omega < 1.0) {
      T1 = T1.map([&](const Mat& t, std::size_t i) -> Mat { return (1.0 - omega) * t + omega * N1[i]; });
      T2 = T2.map([&](const Mat& t, std::size_t i) -> Mat { return (1.0 - omega) * t + omega * N2[i]; });
    } else {
      T1 = std::move(N1);
      T2 = std::move(N2);
    }

    auto [E1, E2] = game_residuals(P1, P2, T1, T2, problem);
    const auto n1 = frobenius_norms(E1);
    const auto n2 = frobenius_norms(E2);
    const double c = constraint_residual(P1, P2, T1, T2, problem);
    const double r = std::max({max_of(n1), max_of(n2), c});
    history.push_back(r);
    if (r < best_r) {
      best_r = r;
      best.P1 = P1;
      best.P2 = P2;
      best.Theta1 = T1;
      best.Theta2 = T2;
      best.E1 = std::move(E1);
      best.E2 = std::move(E2);
      best.residual_norms_1 = n1;
      best.residual_norms_2 = n2;
      best.constraint_residual = c;
      best.iterations = it;
    }
    if (r <= opts.tol) {
      best.history = std::move(history);
      best.certificate = is_game_stabilizer(best.Theta1, best.Theta2, problem);
      return best;
    }
    if (!std::isfinite(r)) break;
    if (r > previous) omega = std::max(omega * 0.5, 1.0 / 64.0);
    previous = r;
  }
  std::ostringstream os;
  os << "best-response iteration stopped after " << history.size() << " sweeps, best residual " << best_r;
  throw Error(Errc::NotConverged, os.str());
}

// ---------------------------------------------------------------------------
// Feedforward

/// How player 1's feedforward drift is read. BestResponse applies the
/// single-player BSDE to player 1's reduced problem, giving (ℒ₁¹ + Θ₂ᵀR₂₁¹)
/// and (ρ₁¹ + R₁₂¹ν₂) in the ρ term, the same pattern player 2's equation
/// carries. AsPrinted uses (ℒ₁¹ − Θ₂ᵀR₂₁¹) and (ρ₁¹ − R₁₂¹ν₂) there instead.
enum class FeedforwardForm { BestResponse, AsPrinted };

/// η_k(t) = e^{−κt}h_k(α_t), ν̂_k(t) = e^{−κt}ν̄_k(α_t).
struct GameEtaSolution {
  VecFamily h1, h2;
  VecFamily nu1, nu2;
  double kappa = 1.0;
  double residual = 0.0;
  double constraint_residual = 0.0;
};

namespace detail {

struct GameSignalView {
  double kappa;
  VecFamily b;
  std::array<VecFamily, 2> q;
  std::array<std::array<VecFamily, 2>, 2> rho;
};

inline GameSignalView signal_view(const MjlsGameProblem& problem, const std::optional<GameSignal>& sig) {
  const auto d = problem.regimes();
  if (sig) return {sig->kappa, sig->b, sig->q, sig->rho};
  GameSignalView v{1.0, VecFamily::zeros(d, problem.n), {}, {}};
  for (int k = 0; k < 2; ++k) {
    v.q[k] = VecFamily::zeros(d, problem.n);
    for (int l = 0; l < 2; ++l) v.rho[k][l] = VecFamily::zeros(d, problem.m[l]);
  }
  return v;
}

}  // namespace detail

/// Stacks both players' drift-matching equations and both constraint rows over
/// all regimes into one dense system in (h1, h2, ν̄1, ν̄2).
inline GameEtaSolution solve_game_feedforward(const GameSolution& gsol, const MjlsGameProblem& problem,
                                              const std::optional<GameSignal>& signal,
                                              FeedforwardForm form = FeedforwardForm::BestResponse) {
  const auto sig = detail::signal_view(problem, signal);
  if (!(sig.kappa > 0.0)) throw Error(Errc::InvalidArgument, "kappa must be positive");
  const auto d = problem.regimes();
  const auto n = problem.n;
  const std::array<Eigen::Index, 2> m = problem.m;
  const Eigen::Index per = 2 * n + m[0] + m[1];
  const Eigen::Index dim = static_cast<Eigen::Index>(d) * per;
  const std::array<const MatFamily*, 2> P{&gsol.P1, &gsol.P2};
  const std::array<const MatFamily*, 2> Th{&gsol.Theta1, &gsol.Theta2};
  const auto ops = game_operator(gsol.P1, gsol.P2, problem);

  // Column offsets within a regime's unknown block.
  const std::array<Eigen::Index, 2> off_h{0, n};
  const std::array<Eigen::Index, 2> off_nu{2 * n, 2 * n + m[0]};
  auto col = [&](std::size_t j, Eigen::Index o) { return static_cast<Eigen::Index>(j) * per + o; };

  Mat op = Mat::Zero(dim, dim);
  Vec rhs = Vec::Zero(dim);
  for (std::size_t i = 0; i < d; ++i) {
    const Eigen::Index row0 = static_cast<Eigen::Index>(i) * per;
    for (int k = 0; k < 2; ++k) {
      const int l = 1 - k;
      const auto& c = problem.cost[k];
      const Mat& T = (*Th[l])[i];
      const Mat& Pk = (*P[k])[i];
      const auto Rkk = c.Rb[k][k][i].llt();
      const Mat Ahat = problem.A[i] + problem.B[l][i] * T;
      const Mat Lplus = ops.L[k][k][i] + T.transpose() * c.Rb[l][k][i];
      const bool printed = form == FeedforwardForm::AsPrinted && k == 0;
      const Mat Lrho = printed ? Mat(ops.L[k][k][i] - T.transpose() * c.Rb[l][k][i]) : Lplus;
      const double sgn = printed ? -1.0 : 1.0;
      const Mat G = Lplus * Rkk.solve(problem.B[k][i].transpose()) - Ahat.transpose();
      // drift = G h_k − P_k(B_l ν_l + b̄) + Lrho R⁻¹(ρ̄_k^k ± R_kl ν_l) − q̄^k − Θ_lᵀρ̄_l^k − (S_l^kᵀ + Θ_lᵀR_ll^k)ν_l
      // equation: −κh_k(i) + Σ_j π_ij h_k(j) − drift = 0
      const Eigen::Index r = row0 + off_h[k];
      for (std::size_t j = 0; j < d; ++j)
        op.block(r, col(j, off_h[k]), n, n) += problem.gen.rate(i, j) * Mat::Identity(n, n);
      op.block(r, col(i, off_h[k]), n, n) += -sig.kappa * Mat::Identity(n, n) - G;
      const Mat nu_coef = -Pk * problem.B[l][i] + sgn * Lrho * Rkk.solve(c.Rb[k][l][i]) -
                          (c.S[l][i].transpose() + T.transpose() * c.Rb[l][l][i]);
      op.block(r, col(i, off_nu[l]), n, m[l]) -= nu_coef;
      const Vec drift0 = -Pk * sig.b[i] + Lrho * Rkk.solve(sig.rho[k][k][i]) - sig.q[k][i] -
                         T.transpose() * sig.rho[k][l][i];
      rhs.segment(r, n) = drift0;

      // Constraint: R_k1^k ν̄1 + R_k2^k ν̄2 + B_kᵀh_k + ρ̄_k^k = 0.
      const Eigen::Index rc = row0 + off_nu[k];
      op.block(rc, col(i, off_nu[0]), m[k], m[0]) = c.Rb[k][0][i];
      op.block(rc, col(i, off_nu[1]), m[k], m[1]) = c.Rb[k][1][i];
      op.block(rc, col(i, off_h[k]), m[k], n) = problem.B[k][i].transpose();
      rhs.segment(rc, m[k]) = -sig.rho[k][k][i];
    }
  }

  Eigen::JacobiSVD<Mat> svd(op, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double rel = detail::relative_min_singular(svd);
  if (rel < 1e-12) {
    std::ostringstream os;
    os << "feedforward system is singular (relative smallest singular value " << rel << ")";
    throw Error(Errc::SingularFeedforwardSystem, os.str());
  }
  const Vec sol = svd.solve(rhs);
  const Vec res = op * sol - rhs;

  GameEtaSolution out;
  out.kappa = sig.kappa;
  std::vector<Vec> h1(d), h2(d), nu1(d), nu2(d);
  for (std::size_t i = 0; i < d; ++i) {
    h1[i] = sol.segment(col(i, off_h[0]), n);
    h2[i] = sol.segment(col(i, off_h[1]), n);
    nu1[i] = sol.segment(col(i, off_nu[0]), m[0]);
    nu2[i] = sol.segment(col(i, off_nu[1]), m[1]);
    for (int k = 0; k < 2; ++k) {
      out.residual = std::max(out.residual, res.segment(col(i, off_h[k]), n).norm());
      out.constraint_residual = std::max(out.constraint_residual, res.segment(col(i, off_nu[k]), m[k]).norm());
    }
  }
  out.h1 = VecFamily(std::move(h1));
  out.h2 = VecFamily(std::move(h2));
  out.nu1 = VecFamily(std::move(nu1));
  out.nu2 = VecFamily(std::move(nu2));
  return out;
}

/// Player policies u_k(t) = Θ_k(α_t)X(t) + e^{−κt}ν̄_k(α_t).
struct GamePolicy {
  std::array<ClosedLoopPolicy, 2> player;
};

inline GamePolicy assemble_game_policy(const GameSolution& gsol, const MjlsGameProblem& problem,
                                       const std::optional<GameEtaSolution>& eta = std::nullopt) {
  GamePolicy pol;
  pol.player[0] = {gsol.Theta1, VecFamily::zeros(problem.regimes(), problem.m[0]), 1.0};
  pol.player[1] = {gsol.Theta2, VecFamily::zeros(problem.regimes(), problem.m[1]), 1.0};
  if (eta) {
    pol.player[0].nu_bar = eta->nu1;
    pol.player[1].nu_bar = eta->nu2;
    pol.player[0].kappa = pol.player[1].kappa = eta->kappa;
  }
  return pol;
}

}  // namespace jumplq
