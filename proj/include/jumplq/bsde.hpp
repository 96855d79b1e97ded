#pragma once

#include "jumplq/care.hpp"

#include <functional>
#include <sstream>

namespace jumplq {

/// η(t) = e^{−κt} h(α_t). The jump integrand is implicit:
/// z_j(t) = e^{−κt}[h(j) − h(α_{t−})].
struct EtaSolution {
  VecFamily h;
  double kappa = 1.0;
  double residual = 0.0;

  Vec eta(double t, std::size_t regime) const { return std::exp(-kappa * t) * h[regime]; }
  Vec z(double t, std::size_t target, std::size_t before) const {
    return std::exp(-kappa * t) * (h[target] - h[before]);
  }
};

namespace detail {

/// Per-regime residual (F(i) − κI)h(i) + Σ_j π_ij h(j) + c(i).
inline VecFamily shifted_residual(const MatFamily& F, const Generator& gen, const VecFamily& c,
                                  double kappa, const VecFamily& h) {
  return h.map([&](const Vec& hi, std::size_t i) -> Vec {
    Vec r = F[i] * hi - kappa * hi + c[i];
    for (std::size_t j = 0; j < gen.regimes(); ++j) r += gen.rate(i, j) * h[j];
    return r;
  });
}

}  // namespace detail

/// Solves (F(i) − κI)h(i) + Σ_j π_ij h(j) + c(i) = 0, the algebraic form of
/// dY = −[F Y + e^{−κt}c(α)]dt + Γ·dÑ under Y = e^{−κt}h(α).
inline EtaSolution solve_linear_bsde_stationary(const MatFamily& F, const Generator& gen,
                                                const VecFamily& c, double kappa) {
  if (!(kappa > 0.0)) throw Error(Errc::InvalidArgument, "kappa must be positive");
  const auto d = gen.regimes();
  const auto n = F.rows();
  require_shape(F, d, n, n, "F");
  require_shape(c, d, n, "c");

  const Eigen::Index dim = static_cast<Eigen::Index>(d) * n;
  Mat op = Mat::Zero(dim, dim);
  Vec rhs(dim);
  for (std::size_t i = 0; i < d; ++i) {
    const auto bi = static_cast<Eigen::Index>(i) * n;
    for (std::size_t j = 0; j < d; ++j)
      op.block(bi, static_cast<Eigen::Index>(j) * n, n, n) = gen.rate(i, j) * Mat::Identity(n, n);
    op.block(bi, bi, n, n) += F[i] - kappa * Mat::Identity(n, n);
    rhs.segment(bi, n) = -c[i];
  }
  Eigen::JacobiSVD<Mat> svd(op, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double rel = detail::relative_min_singular(svd);
  if (rel < 1e-12) {
    std::ostringstream os;
    os << "shifted operator is singular (relative smallest singular value " << rel << ")";
    throw Error(Errc::SingularShiftedOperator, os.str());
  }
  const Vec sol = svd.solve(rhs);
  std::vector<Vec> h(d);
  for (std::size_t i = 0; i < d; ++i) h[i] = sol.segment(static_cast<Eigen::Index>(i) * n, n);

  EtaSolution out;
  out.h = VecFamily(std::move(h));
  out.kappa = kappa;
  out.residual = max_norm(detail::shifted_residual(F, gen, c, kappa, out.h));
  return out;
}

struct TruncatedBsde {
  std::vector<double> t;       // uniform grid 0 = t_0 < ... < t_steps = T
  std::vector<VecFamily> y;    // y[k][i] ≈ Y(t_k) in regime i
};

using BsdeForcing = std::function<Vec(double t, std::size_t regime)>;

/// Backward RK4 on ẏ(t,i) = −F(i)y(t,i) − Σ_j π_ij y(t,j) − φ(t,i), y(T,·) = 0.
inline TruncatedBsde solve_linear_bsde_truncated(const MatFamily& F, const Generator& gen,
                                                 const BsdeForcing& phi, double T, int steps) {
  if (!(T > 0.0)) throw Error(Errc::InvalidArgument, "horizon T must be positive");
  if (steps < 10) throw Error(Errc::InvalidArgument, "steps must be at least 10");
  const auto d = gen.regimes();
  const auto n = F.rows();
  require_shape(F, d, n, n, "F");

  // In reversed time s = T − t the system reads dy/ds = F y + Σπ y + φ(T − s).
  auto rhs = [&](double t, const VecFamily& y) {
    return y.map([&](const Vec& yi, std::size_t i) -> Vec {
      Vec r = F[i] * yi + phi(t, i);
      for (std::size_t j = 0; j < d; ++j) r += gen.rate(i, j) * y[j];
      return r;
    });
  };
  auto axpy = [](const VecFamily& y, double a, const VecFamily& k) {
    return y.map([&](const Vec& yi, std::size_t i) -> Vec { return yi + a * k[i]; });
  };

  const double h = T / steps;
  TruncatedBsde out;
  out.t.resize(static_cast<std::size_t>(steps) + 1);
  out.y.resize(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) out.t[static_cast<std::size_t>(k)] = h * k;
  VecFamily y = VecFamily::zeros(d, n);
  out.y.back() = y;
  for (int k = steps; k > 0; --k) {
    const double t = h * k;
    const auto k1 = rhs(t, y);
    const auto k2 = rhs(t - 0.5 * h, axpy(y, 0.5 * h, k1));
    const auto k3 = rhs(t - 0.5 * h, axpy(y, 0.5 * h, k2));
    const auto k4 = rhs(t - h, axpy(y, h, k3));
    y = y.map([&](const Vec& yi, std::size_t i) -> Vec {
      return yi + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    });
    out.y[static_cast<std::size_t>(k - 1)] = y;
  }
  return out;
}

/// φ(t,i) = e^{−κt}c(i).
inline TruncatedBsde solve_linear_bsde_truncated(const MatFamily& F, const Generator& gen,
                                                 const VecFamily& c, double kappa, double T, int steps) {
  return solve_linear_bsde_truncated(
      F, gen, [&](double t, std::size_t i) -> Vec { return std::exp(-kappa * t) * c[i]; }, T, steps);
}

/// Smallest step count keeping the RK4 step h with h·max‖F(i)‖ ≤ 0.1.
inline int default_truncation_steps(const MatFamily& F, const Generator& gen, double T) {
  double scale = 0.0;
  for (std::size_t i = 0; i < F.size(); ++i)
    scale = std::max(scale, F[i].norm() + std::abs(gen.rate(i, i)));
  return std::max(10, static_cast<int>(std::ceil(T * scale / 0.1)));
}

struct LinearBsdeData {
  MatFamily F;
  VecFamily c;
  double kappa = 1.0;
};

/// F(i) = A(i)ᵀ − ℒ(P,i)R(i)⁻¹B(i)ᵀ and c(i) = P(i)b̄(i) − ℒ(P,i)R(i)⁻¹ρ̄(i) + q̄(i).
inline LinearBsdeData build_eta_system_lq(const CareSolution& sol, const MjlsLqProblem& problem,
                                          const LqSignal& sig) {
  const auto d = problem.regimes();
  require_shape(sol.P, d, problem.n, problem.n, "P");
  require_shape(sig.b, d, problem.n, "b");
  require_shape(sig.q, d, problem.n, "q");
  require_shape(sig.rho, d, problem.m, "rho");
  const auto ops = care_operator(sol.P, problem);
  LinearBsdeData out;
  out.kappa = sig.kappa;
  out.F = problem.A.map([&](const Mat& a, std::size_t i) -> Mat {
    return a.transpose() - ops.L[i] * problem.R[i].llt().solve(problem.B[i].transpose());
  });
  out.c = sig.b.map([&](const Vec& b, std::size_t i) -> Vec {
    return sol.P[i] * b - ops.L[i] * problem.R[i].llt().solve(sig.rho[i]) + sig.q[i];
  });
  return out;
}

/// Feedforward BSDE of a solved LQ problem; zero when the problem is homogeneous.
inline EtaSolution solve_eta_lq(const CareSolution& sol, const MjlsLqProblem& problem) {
  if (!problem.inhomog) {
    EtaSolution zero;
    zero.h = VecFamily::zeros(problem.regimes(), problem.n);
    return zero;
  }
  const auto sys = build_eta_system_lq(sol, problem, *problem.inhomog);
  return solve_linear_bsde_stationary(sys.F, problem.gen, sys.c, sys.kappa);
}

}  // namespace jumplq
