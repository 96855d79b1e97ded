#pragma once

#include "jumplq/linalg.hpp"

#include <sstream>

namespace jumplq {

/// Coefficient view of a single-player problem: enough to evaluate the
/// coupled Riccati operators and run Newton–Kleinman sweeps.
struct RiccatiData {
  Generator gen;
  MatFamily A, B, Q, S, R;

  static RiccatiData from(const MjlsLqProblem& p) { return {p.gen, p.A, p.B, p.Q, p.S, p.R}; }
};

struct RiccatiOperators {
  MatFamily M;  // ℳ(P,i) = PA + AᵀP + Q + Σ_j π_ij P(j)
  MatFamily L;  // ℒ(P,i) = PB + Sᵀ
};

inline RiccatiOperators riccati_operators(const RiccatiData& data, const MatFamily& P) {
  const auto d = data.gen.regimes();
  require_shape(P, d, data.A.rows(), data.A.rows(), "P");
  MatFamily lyap = coupled_lyapunov_operator(data.A, data.gen, P);
  std::vector<Mat> M(d), L(d);
  for (std::size_t i = 0; i < d; ++i) {
    M[i] = lyap[i] + data.Q[i];
    L[i] = P[i] * data.B[i] + data.S[i].transpose();
  }
  return {MatFamily(std::move(M)), MatFamily(std::move(L))};
}

inline MatFamily riccati_residual(const RiccatiData& data, const MatFamily& P) {
  const auto ops = riccati_operators(data, P);
  return ops.M.map([&](const Mat& M, std::size_t i) -> Mat {
    return M - ops.L[i] * data.R[i].llt().solve(ops.L[i].transpose());
  });
}

/// Θ(i) = −R(i)⁻¹ℒ(P,i)ᵀ.
inline MatFamily riccati_gain(const RiccatiData& data, const MatFamily& P) {
  const auto ops = riccati_operators(data, P);
  return ops.L.map([&](const Mat& L, std::size_t i) -> Mat {
    return -data.R[i].llt().solve(L.transpose());
  });
}

inline std::vector<double> frobenius_norms(const MatFamily& f) {
  std::vector<double> out;
  out.reserve(f.size());
  for (const auto& m : f) out.push_back(m.norm());
  return out;
}

inline double max_of(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, x);
  return m;
}

struct NewtonResult {
  bool converged = false;
  MatFamily P;
  MatFamily Theta;
  MatFamily residual;
  std::vector<double> residual_norms;
  int iterations = 0;
  /// Max residual norm after each sweep.
  std::vector<double> history;
};

/// Newton–Kleinman sweeps from a stabilizing Θ⁰. Each sweep solves
/// P A_Θ + A_Θᵀ P + Σπ P + Q_Θ = 0 and resets Θ = −R⁻¹ℒ(P)ᵀ.
/// Returns the best iterate seen; throws LyapunovSingular if a sweep's
/// closed loop admits no unique solution.
inline NewtonResult newton_kleinman(const RiccatiData& data, MatFamily theta, double tol, int max_iter) {
  const auto d = data.gen.regimes();
  NewtonResult best;
  double best_norm = std::numeric_limits<double>::infinity();
  for (int sweep = 1; sweep <= max_iter; ++sweep) {
    std::vector<Mat> Acl(d), Qcl(d);
    for (std::size_t i = 0; i < d; ++i) {
      const Mat& T = theta[i];
      Acl[i] = data.A[i] + data.B[i] * T;
      const Mat cross = data.S[i].transpose() * T;
      Qcl[i] = symmetrize(data.Q[i] + cross + cross.transpose() + T.transpose() * data.R[i] * T);
    }
    MatFamily P;
    try {
      P = coupled_lyapunov_solve(MatFamily(std::move(Acl)), data.gen, MatFamily(std::move(Qcl)));
    } catch (const Error& e) {
      if (e.code() != Errc::SingularOperator) throw;
      throw Error(Errc::LyapunovSingular, "sweep " + std::to_string(sweep) + ": " + e.detail());
    }
    theta = riccati_gain(data, P);
    MatFamily E = riccati_residual(data, P);
    auto norms = frobenius_norms(E);
    const double r = max_of(norms);
    best.history.push_back(r);
    if (r < best_norm || best.P.empty()) {
      best_norm = r;
      best.P = P;
      best.Theta = theta;
      best.residual = std::move(E);
      best.residual_norms = std::move(norms);
      best.iterations = sweep;
    }
    if (r <= tol) {
      best.converged = true;
      return best;
    }
    if (!std::isfinite(r)) break;
  }
  return best;
}

}  // namespace jumplq
