#pragma once

#include "jumplq/bsde.hpp"

#include <optional>

namespace jumplq {

/// u(t) = Θ(α_t)X(t) + e^{−κt}ν̄(α_t).
struct ClosedLoopPolicy {
  MatFamily Theta;
  VecFamily nu_bar;
  double kappa = 1.0;

  Vec control(double t, std::size_t regime, const Vec& x) const {
    return Theta[regime] * x + std::exp(-kappa * t) * nu_bar[regime];
  }
};

/// ν̄(i) = −R(i)⁻¹[B(i)ᵀh(i) + ρ̄(i)]; ν̄ = 0 without a feedforward solution.
inline ClosedLoopPolicy assemble_closed_loop(const CareSolution& sol, const MjlsLqProblem& problem,
                                             const std::optional<EtaSolution>& eta = std::nullopt) {
  ClosedLoopPolicy pol;
  pol.Theta = sol.Theta;
  pol.nu_bar = VecFamily::zeros(problem.regimes(), problem.m);
  if (!eta) return pol;
  require_shape(eta->h, problem.regimes(), problem.n, "h");
  pol.kappa = eta->kappa;
  pol.nu_bar = eta->h.map([&](const Vec& h, std::size_t i) -> Vec {
    Vec r = problem.B[i].transpose() * h;
    if (problem.inhomog) r += problem.inhomog->rho[i];
    return -problem.R[i].llt().solve(r);
  });
  return pol;
}

/// ⟨P(i)x,x⟩, plus 2⟨h(i),x⟩ + [(2κI − Π)⁻¹g](i) for decaying signals with
/// g(j) = 2⟨h(j),b̄(j)⟩ − ⟨R(j)⁻¹r̃(j),r̃(j)⟩ and r̃ = Bᵀh + ρ̄.
inline double value_function(const CareSolution& sol, const MjlsLqProblem& problem,
                             const std::optional<EtaSolution>& eta, const Vec& x, std::size_t regime) {
  if (regime >= problem.regimes())
    throw Error(Errc::InvalidArgument, "regime index out of range");
  if (x.size() != problem.n) throw Error(Errc::DimensionMismatch, "x has wrong length");
  double v = x.dot(sol.P[regime] * x);
  if (!eta) return v;

  const auto d = problem.regimes();
  const double kappa = eta->kappa;
  Vec g(static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < d; ++j) {
    Vec rt = problem.B[j].transpose() * eta->h[j];
    double hb = 0.0;
    if (problem.inhomog) {
      rt += problem.inhomog->rho[j];
      hb = eta->h[j].dot(problem.inhomog->b[j]);
    }
    g(static_cast<Eigen::Index>(j)) = 2.0 * hb - rt.dot(problem.R[j].llt().solve(rt));
  }
  const Mat res = 2.0 * kappa * Mat::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)) -
                  problem.gen.matrix();
  Eigen::JacobiSVD<Mat> svd(res, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (detail::relative_min_singular(svd) < 1e-12)
    throw Error(Errc::ResolventSingular, "2 kappa I - Pi is singular");
  const Vec tail = svd.solve(g);
  return v + 2.0 * eta->h[regime].dot(x) + tail(static_cast<Eigen::Index>(regime));
}

}  // namespace jumplq
