#pragma once

#include "jumplq/riccati.hpp"

#include <optional>

namespace jumplq {

struct StabilityCertificate {
  bool feasible = false;
  std::optional<MatFamily> P;  // PD witness when feasible
  double abscissa = 0.0;
  /// Smallest eigenvalue over regimes of −[PA + AᵀP + ΣπP]; NaN without witness.
  double margin = std::numeric_limits<double>::quiet_NaN();
};

/// Condition (A) for the family A: feasible iff the W = I coupled Lyapunov
/// equality has a positive definite solution and the coupled abscissa is negative.
inline StabilityCertificate check_condition_a(const MatFamily& A, const Generator& gen) {
  StabilityCertificate cert;
  cert.abscissa = coupled_spectral_abscissa(A, gen);
  const auto d = gen.regimes();
  const auto n = A.rows();
  MatFamily P;
  try {
    P = coupled_lyapunov_solve(A, gen, MatFamily::filled(d, Mat::Identity(n, n)));
  } catch (const Error&) {
    return cert;
  }
  bool pd = true;
  for (const auto& p : P) pd = pd && is_positive_definite(p, 0.0);
  if (!pd) return cert;

  const MatFamily lhs = coupled_lyapunov_operator(A, gen, P);
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& m : lhs) margin = std::min(margin, min_sym_eigenvalue(-m));
  cert.margin = margin;
  cert.feasible = cert.abscissa < 0.0 && margin > 0.0;
  cert.P = std::move(P);
  return cert;
}

inline MatFamily closed_loop(const MatFamily& A, const MatFamily& B, const MatFamily& Theta) {
  return A.map([&](const Mat& a, std::size_t i) -> Mat { return a + B[i] * Theta[i]; });
}

inline StabilityCertificate is_stabilizer(const MatFamily& Theta, const MjlsLqProblem& problem) {
  require_shape(Theta, problem.regimes(), problem.m, problem.n, "Theta");
  return check_condition_a(closed_loop(problem.A, problem.B, Theta), problem.gen);
}

inline StabilityCertificate is_game_stabilizer(const MatFamily& Theta1, const MatFamily& Theta2,
                                               const MjlsGameProblem& problem) {
  require_shape(Theta1, problem.regimes(), problem.m[0], problem.n, "Theta1");
  require_shape(Theta2, problem.regimes(), problem.m[1], problem.n, "Theta2");
  const MatFamily Acl = problem.A.map([&](const Mat& a, std::size_t i) -> Mat {
    return a + problem.B[0][i] * Theta1[i] + problem.B[1][i] * Theta2[i];
  });
  return check_condition_a(Acl, problem.gen);
}

/// A gain family stabilizing (A, B) under gen. Returns zero gains when the
/// open loop already satisfies Condition (A). Otherwise follows the
/// stabilizing solutions of the auxiliary Riccati problem (A − sI, B, I, 0, I)
/// as the shift s decreases to 0, warm-starting each Newton solve from the
/// previous gain.
inline MatFamily synthesize_stabilizer(const Generator& gen, const MatFamily& A, const MatFamily& B) {
  const auto d = gen.regimes();
  const auto n = A.rows();
  const auto m = B.cols();
  MatFamily theta = MatFamily::zeros(d, m, n);
  const auto open = check_condition_a(A, gen);
  if (open.feasible) return theta;

  auto shifted = [&](double s) {
    return RiccatiData{gen, A.map([&](const Mat& a, std::size_t) -> Mat { return a - s * Mat::Identity(n, n); }),
                       B, MatFamily::filled(d, Mat::Identity(n, n)), MatFamily::zeros(d, m, n),
                       MatFamily::filled(d, Mat::Identity(m, m))};
  };
  auto stabilizes = [&](const RiccatiData& aux, const MatFamily& t) {
    return check_condition_a(closed_loop(aux.A, aux.B, t), gen).feasible;
  };

  // The shift moves the coupled abscissa by −2s.
  double s = std::max(0.0, 0.5 * open.abscissa) + 1.0;
  double step = s;
  for (int guard = 0; guard < 400; ++guard) {
    const auto aux = shifted(s);
    if (!stabilizes(aux, theta)) {
      step *= 0.5;
      if (step < 1e-9) break;
      s += step;
      continue;
    }
    NewtonResult nk;
    try {
      nk = newton_kleinman(aux, theta, 1e-10, 200);
    } catch (const Error&) {
      break;
    }
    if (stabilizes(aux, nk.Theta)) theta = nk.Theta;
    if (s == 0.0) break;
    s = std::max(0.0, s - step);
  }
  if (check_condition_a(closed_loop(A, B, theta), gen).feasible) return theta;
  throw Error(Errc::SynthesisFailed, "no stabilizing gain found for the given (A, B) family");
}

inline MatFamily synthesize_stabilizer(const MjlsLqProblem& problem) {
  return synthesize_stabilizer(problem.gen, problem.A, problem.B);
}

}  // namespace jumplq
