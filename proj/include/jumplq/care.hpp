#pragma once

#include "jumplq/stability.hpp"

#include <optional>
#include <sstream>

namespace jumplq {

struct CareOptions {
  double tol = 1e-9;
  int max_iter = 100;
  std::optional<MatFamily> theta0;
};

struct CareSolution {
  MatFamily P;
  MatFamily Theta;
  MatFamily residuals;
  std::vector<double> residual_norms;
  int iterations = 0;
  StabilityCertificate certificate;
  std::vector<double> history;
};

inline RiccatiOperators care_operator(const MatFamily& P, const MjlsLqProblem& problem) {
  return riccati_operators(RiccatiData::from(problem), P);
}

inline MatFamily care_residual(const MatFamily& P, const MjlsLqProblem& problem) {
  return riccati_residual(RiccatiData::from(problem), P);
}

inline MatFamily care_gain(const MatFamily& P, const MjlsLqProblem& problem) {
  return riccati_gain(RiccatiData::from(problem), P);
}

inline CareSolution solve_care(const MjlsLqProblem& problem, const CareOptions& opts = {}) {
  if (!(opts.tol > 0.0)) throw Error(Errc::InvalidArgument, "tol must be positive");
  if (opts.max_iter < 1) throw Error(Errc::InvalidArgument, "max_iter must be at least 1");
  MatFamily theta0;
  if (opts.theta0) {
    require_shape(*opts.theta0, problem.regimes(), problem.m, problem.n, "theta0");
    theta0 = *opts.theta0;
  } else {
    try {
      theta0 = synthesize_stabilizer(problem);
    } catch (const Error& e) {
      throw Error(Errc::StabilizerSynthesisFailed, e.detail());
    }
  }

  auto nk = newton_kleinman(RiccatiData::from(problem), std::move(theta0), opts.tol, opts.max_iter);
  if (!nk.converged) {
    std::ostringstream os;
    os << "Newton-Kleinman stopped after " << nk.history.size() << " sweeps, best residual "
       << max_of(nk.residual_norms);
    throw Error(Errc::NotConverged, os.str());
  }
  CareSolution sol;
  sol.P = std::move(nk.P);
  sol.Theta = std::move(nk.Theta);
  sol.residuals = std::move(nk.residual);
  sol.residual_norms = std::move(nk.residual_norms);
  sol.iterations = nk.iterations;
  sol.history = std::move(nk.history);
  sol.certificate = is_stabilizer(sol.Theta, problem);
  return sol;
}

/// P belongs to 𝒢 when every block [ℳ(P,i), ℒ(P,i); ℒ(P,i)ᵀ, R(i)] is
/// positive semidefinite (smallest eigenvalue ≥ tol).
inline bool membership_in_G(const MatFamily& P, const MjlsLqProblem& problem, double tol = -1e-8) {
  const auto ops = care_operator(P, problem);
  const auto n = problem.n;
  const auto m = problem.m;
  for (std::size_t i = 0; i < problem.regimes(); ++i) {
    Mat blk(n + m, n + m);
    blk.topLeftCorner(n, n) = ops.M[i];
    blk.topRightCorner(n, m) = ops.L[i];
    blk.bottomLeftCorner(m, n) = ops.L[i].transpose();
    blk.bottomRightCorner(m, m) = problem.R[i];
    if (min_sym_eigenvalue(blk) < tol) return false;
  }
  return true;
}

}  // namespace jumplq
