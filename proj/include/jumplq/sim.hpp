#pragma once

#include "jumplq/game.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

namespace jumplq {

// ---------------------------------------------------------------------------
// Random streams

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of stream `index` under `base`; independent of evaluation order.
inline std::uint64_t stream_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(splitmix64(base) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

/// mt19937_64 with portable uniform and normal draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = uniform();
    while (u <= 0.0) u = uniform();
    const double v = uniform();
    const double r = std::sqrt(-2.0 * std::log(u));
    const double a = 2.0 * 3.14159265358979323846 * v;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Chain paths

struct ChainPath {
  std::size_t i0 = 0;
  std::vector<double> jump_times;
  std::vector<std::size_t> regimes_after;
  double horizon = 0.0;

  std::size_t regime_at(double t) const {
    const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
    const auto k = static_cast<std::size_t>(it - jump_times.begin());
    return k == 0 ? i0 : regimes_after[k - 1];
  }

  /// Time spent in each regime on [0, horizon].
  Vec occupation(std::size_t regimes) const {
    Vec occ = Vec::Zero(static_cast<Eigen::Index>(regimes));
    double t = 0.0;
    std::size_t r = i0;
    for (std::size_t k = 0; k < jump_times.size(); ++k) {
      occ(static_cast<Eigen::Index>(r)) += jump_times[k] - t;
      t = jump_times[k];
      r = regimes_after[k];
    }
    occ(static_cast<Eigen::Index>(r)) += horizon - t;
    return occ;
  }
};

/// Gillespie sampling on [0, T]. Paths of one stream are prefix-consistent in T.
inline ChainPath sample_chain(const Generator& gen, std::size_t i0, double T, Rng& rng) {
  if (!(T > 0.0)) throw Error(Errc::InvalidArgument, "horizon must be positive");
  if (i0 >= gen.regimes()) throw Error(Errc::InvalidArgument, "initial regime out of range");
  ChainPath path;
  path.i0 = i0;
  path.horizon = T;
  std::size_t i = i0;
  double t = 0.0;
  for (;;) {
    const double rate = gen.exit_rate(i);
    if (!(rate > 0.0)) break;
    t += rng.exponential(rate);
    if (t > T) break;
    const double target = rng.uniform() * rate;
    double acc = 0.0;
    std::size_t next = i;
    // Falls back to the last reachable regime if rounding leaves target >= acc.
    for (std::size_t j = 0; j < gen.regimes(); ++j) {
      if (j == i || gen.rate(i, j) <= 0.0) continue;
      acc += gen.rate(i, j);
      next = j;
      if (target < acc) break;
    }
    path.jump_times.push_back(t);
    path.regimes_after.push_back(next);
    i = next;
  }
  return path;
}

inline ChainPath sample_chain(const Generator& gen, std::size_t i0, double T, std::uint64_t seed) {
  Rng rng(seed);
  return sample_chain(gen, i0, T, rng);
}

// ---------------------------------------------------------------------------
// Affine closed loops and quadratic running costs

/// Ẋ = A_cl(α_t)X + e^{−κt}d(α_t), integrated through the augmented state
/// z = (X, e^{−κt}) whose dynamics are linear with matrix [[A_cl, d], [0, −κ]].
struct AffineSystem {
  Generator gen;
  MatFamily Acl;
  VecFamily d;
  double kappa = 1.0;

  Eigen::Index n() const { return Acl.rows(); }

  Mat augmented(std::size_t i) const {
    const auto nn = n();
    Mat M = Mat::Zero(nn + 1, nn + 1);
    M.topLeftCorner(nn, nn) = Acl[i];
    M.topRightCorner(nn, 1) = d[i];
    M(nn, nn) = -kappa;
    return M;
  }
};

namespace detail {

/// W = CᵀHC + e_w ℓᵀC + Cᵀℓ e_wᵀ, so that zᵀWz equals the running cost
/// ⟨H v, v⟩ + 2w⟨ℓ, v⟩ with v = C z and w the last component of z.
inline Mat running_weight(const Mat& H, const Vec& lin, const Mat& C) {
  const auto k = C.cols();
  Mat W = C.transpose() * H * C;
  const Vec lc = C.transpose() * lin;
  W.row(k - 1) += lc.transpose();
  W.col(k - 1) += lc;
  return symmetrize(W);
}

inline bool same_kappa(double a, double b) { return std::abs(a - b) <= 1e-14 * std::max(1.0, std::abs(a)); }

}  // namespace detail

inline AffineSystem lq_closed_loop_system(const MjlsLqProblem& problem, const ClosedLoopPolicy& policy) {
  require_shape(policy.Theta, problem.regimes(), problem.m, problem.n, "Theta");
  require_shape(policy.nu_bar, problem.regimes(), problem.m, "nu_bar");
  AffineSystem sys;
  sys.gen = problem.gen;
  sys.Acl = closed_loop(problem.A, problem.B, policy.Theta);
  sys.kappa = policy.kappa;
  sys.d = policy.nu_bar.map([&](const Vec& nu, std::size_t i) -> Vec { return problem.B[i] * nu; });
  if (problem.inhomog) {
    if (!detail::same_kappa(problem.inhomog->kappa, policy.kappa))
      throw Error(Errc::InvalidArgument, "policy and signal decay rates differ");
    sys.d = sys.d.map([&](const Vec& v, std::size_t i) -> Vec { return v + problem.inhomog->b[i]; });
  }
  return sys;
}

/// Running-cost weight of the single-player cost under `policy`.
inline MatFamily lq_cost_weight(const MjlsLqProblem& problem, const ClosedLoopPolicy& policy) {
  const auto n = problem.n;
  const auto m = problem.m;
  std::vector<Mat> W(problem.regimes());
  for (std::size_t i = 0; i < problem.regimes(); ++i) {
    Mat H(n + m, n + m);
    H << problem.Q[i], problem.S[i].transpose(), problem.S[i], problem.R[i];
    Vec lin = Vec::Zero(n + m);
    if (problem.inhomog) lin << problem.inhomog->q[i], problem.inhomog->rho[i];
    Mat C = Mat::Zero(n + m, n + 1);
    C.topLeftCorner(n, n).setIdentity();
    C.bottomLeftCorner(m, n) = policy.Theta[i];
    C.bottomRightCorner(m, 1) = policy.nu_bar[i];
    W[i] = detail::running_weight(H, lin, C);
  }
  return MatFamily(std::move(W));
}

/// Weight of the cost-representation integrand for a symmetric family P̃:
/// ⟨ℳ(P̃)X,X⟩ + 2⟨ℒ(P̃)u,X⟩ + ⟨Ru,u⟩ + 2⟨P̃b + q, X⟩ + 2⟨ρ,u⟩.
inline MatFamily lq_representation_weight(const MjlsLqProblem& problem, const MatFamily& P_tilde,
                                          const ClosedLoopPolicy& policy) {
  const auto ops = care_operator(P_tilde, problem);
  const auto n = problem.n;
  const auto m = problem.m;
  std::vector<Mat> W(problem.regimes());
  for (std::size_t i = 0; i < problem.regimes(); ++i) {
    Mat H(n + m, n + m);
    H << ops.M[i], ops.L[i], ops.L[i].transpose(), problem.R[i];
    Vec lin = Vec::Zero(n + m);
    if (problem.inhomog)
      lin << P_tilde[i] * problem.inhomog->b[i] + problem.inhomog->q[i], problem.inhomog->rho[i];
    Mat C = Mat::Zero(n + m, n + 1);
    C.topLeftCorner(n, n).setIdentity();
    C.bottomLeftCorner(m, n) = policy.Theta[i];
    C.bottomRightCorner(m, 1) = policy.nu_bar[i];
    W[i] = detail::running_weight(H, lin, C);
  }
  return MatFamily(std::move(W));
}

inline AffineSystem game_closed_loop_system(const MjlsGameProblem& problem, const GamePolicy& policy) {
  const auto d = problem.regimes();
  for (int k = 0; k < 2; ++k) {
    require_shape(policy.player[k].Theta, d, problem.m[k], problem.n, "Theta");
    require_shape(policy.player[k].nu_bar, d, problem.m[k], "nu_bar");
  }
  if (!detail::same_kappa(policy.player[0].kappa, policy.player[1].kappa))
    throw Error(Errc::InvalidArgument, "players' feedforward decay rates differ");
  AffineSystem sys;
  sys.gen = problem.gen;
  sys.kappa = policy.player[0].kappa;
  sys.Acl = problem.A.map([&](const Mat& a, std::size_t i) -> Mat {
    return a + problem.B[0][i] * policy.player[0].Theta[i] + problem.B[1][i] * policy.player[1].Theta[i];
  });
  sys.d = problem.A.map([&](const Mat&, std::size_t i) -> Vec {
    Vec v = problem.B[0][i] * policy.player[0].nu_bar[i] + problem.B[1][i] * policy.player[1].nu_bar[i];
    if (problem.inhomog) v += problem.inhomog->b[i];
    return v;
  });
  if (problem.inhomog && !detail::same_kappa(problem.inhomog->kappa, sys.kappa))
    throw Error(Errc::InvalidArgument, "policy and signal decay rates differ");
  return sys;
}

/// Running-cost weight of player k (0-based) under the joint policy.
inline MatFamily game_cost_weight(const MjlsGameProblem& problem, const GamePolicy& policy, int k) {
  const auto n = problem.n;
  const auto m1 = problem.m[0];
  const auto m2 = problem.m[1];
  const auto& c = problem.cost[k];
  std::vector<Mat> W(problem.regimes());
  for (std::size_t i = 0; i < problem.regimes(); ++i) {
    const auto tot = n + m1 + m2;
    Mat H(tot, tot);
    H << c.Q[i], c.S[0][i].transpose(), c.S[1][i].transpose(),
         c.S[0][i], c.Rb[0][0][i], c.Rb[0][1][i],
         c.S[1][i], c.Rb[1][0][i], c.Rb[1][1][i];
    Vec lin = Vec::Zero(tot);
    if (problem.inhomog) lin << problem.inhomog->q[k][i], problem.inhomog->rho[k][0][i], problem.inhomog->rho[k][1][i];
    Mat C = Mat::Zero(tot, n + 1);
    C.topLeftCorner(n, n).setIdentity();
    C.block(n, 0, m1, n) = policy.player[0].Theta[i];
    C.block(n, n, m1, 1) = policy.player[0].nu_bar[i];
    C.block(n + m1, 0, m2, n) = policy.player[1].Theta[i];
    C.block(n + m1, n, m2, 1) = policy.player[1].nu_bar[i];
    W[i] = detail::running_weight(H, lin, C);
  }
  return MatFamily(std::move(W));
}

// ---------------------------------------------------------------------------
// Path integration

struct QuadratureOptions {
  /// Longest sub-interval handled by one precomputed exponential; shortened
  /// further to 2/‖M‖ so the block exponential stays well conditioned.
  double max_step = 1.0;
};

struct Segment {
  double t0 = 0.0;
  double t1 = 0.0;
  std::size_t regime = 0;
  Vec z0;  // augmented state (X, e^{−κt0}) at t0
};

struct TrajectorySample {
  ChainPath path;
  std::vector<Segment> segments;
  std::vector<double> costs;  // one per weight family
  Vec terminal;               // X(T)

  /// Exact state X(t) for t in [0, T].
  Vec state_at(const AffineSystem& sys, double t) const {
    std::size_t k = 0;
    while (k + 1 < segments.size() && segments[k + 1].t0 <= t) ++k;
    const auto& s = segments[k];
    const Vec z = (sys.augmented(s.regime) * (t - s.t0)).exp() * s.z0;
    return z.head(sys.n());
  }
};

namespace detail {

/// E = e^{Mτ} and G_c = ∫₀^τ e^{Mᵀs}W_c e^{Ms} ds, read off one exponential of the
/// block upper-triangular matrix with diagonal (−Mᵀ, ..., −Mᵀ, M) and W_c in the last column.
struct ExactStep {
  Mat E;
  std::vector<Mat> G;
};

inline ExactStep exact_step(const Mat& M, const std::vector<Mat>& W, double tau) {
  const auto k = M.rows();
  const auto C = static_cast<Eigen::Index>(W.size());
  Mat big = Mat::Zero((C + 1) * k, (C + 1) * k);
  for (Eigen::Index c = 0; c < C; ++c) {
    big.block(c * k, c * k, k, k) = -M.transpose();
    big.block(c * k, C * k, k, k) = W[static_cast<std::size_t>(c)];
  }
  big.block(C * k, C * k, k, k) = M;
  const Mat F = (big * tau).exp();
  ExactStep out;
  out.E = F.block(C * k, C * k, k, k);
  for (Eigen::Index c = 0; c < C; ++c) out.G.push_back(symmetrize(out.E.transpose() * F.block(c * k, C * k, k, k)));
  return out;
}

/// Per-regime step data shared by every path of one simulation. Segment
/// lengths are covered by whole steps of h followed by the binary expansion of
/// the remainder over h/2, h/4, ..., so paths need no exponentials of their own.
struct CostIntegrator {
  static constexpr int kLevels = 53;

  std::vector<double> h;
  std::vector<std::vector<ExactStep>> ladder;  // ladder[i][j]: step of length h_i·2^{−j}
  Eigen::Index n = 0;
  std::size_t weights = 0;

  CostIntegrator(const AffineSystem& sys, const std::vector<MatFamily>& W, const QuadratureOptions& quad)
      : n(sys.n()), weights(W.size()) {
    for (std::size_t i = 0; i < sys.gen.regimes(); ++i) {
      const Mat M = sys.augmented(i);
      std::vector<Mat> wi;
      for (const auto& w : W) wi.push_back(w[i]);
      const double norm = M.cwiseAbs().colwise().sum().maxCoeff();
      h.push_back(norm > 0.0 ? std::min(quad.max_step, 2.0 / norm) : quad.max_step);
      std::vector<ExactStep> steps;
      for (int j = 0; j < kLevels; ++j) steps.push_back(exact_step(M, wi, std::ldexp(h.back(), -j)));
      ladder.push_back(std::move(steps));
    }
  }

  /// Advances z across a segment of length len in regime i, adding the exact costs.
  void advance(std::size_t i, double len, Vec& z, Vec& tmp, std::vector<double>& costs) const {
    auto apply = [&](const ExactStep& f) {
      for (std::size_t c = 0; c < costs.size(); ++c) {
        tmp.noalias() = f.G[c] * z;
        costs[c] += z.dot(tmp);
      }
      tmp.noalias() = f.E * z;
      z.swap(tmp);
    };
    const auto whole = static_cast<long>(std::floor(len / h[i]));
    for (long s = 0; s < whole; ++s) apply(ladder[i][0]);
    double rest = len - static_cast<double>(whole) * h[i];
    for (int j = 1; j < kLevels && rest > 0.0; ++j) {
      const double tau = std::ldexp(h[i], -j);
      if (rest >= tau) {
        apply(ladder[i][static_cast<std::size_t>(j)]);
        rest -= tau;
      }
    }
  }
};

}  // namespace detail

/// Propagates x0 along `path` exactly and integrates each zᵀW_c(α)z exactly on
/// every regime segment.
inline TrajectorySample simulate_closed_loop(const detail::CostIntegrator& integ, const Vec& x0,
                                             const ChainPath& path, bool keep_segments = true) {
  const auto n = integ.n;
  if (x0.size() != n) throw Error(Errc::DimensionMismatch, "x0 has wrong length");
  TrajectorySample out;
  out.costs.assign(integ.weights, 0.0);
  Vec z(n + 1), tmp(n + 1);
  z << x0, 1.0;

  std::size_t regime = path.i0;
  double t = 0.0;
  for (std::size_t k = 0; k <= path.jump_times.size(); ++k) {
    const double t1 = k < path.jump_times.size() ? path.jump_times[k] : path.horizon;
    if (keep_segments) out.segments.push_back({t, t1, regime, z});
    if (t1 > t) integ.advance(regime, t1 - t, z, tmp, out.costs);
    t = t1;
    if (k < path.jump_times.size()) regime = path.regimes_after[k];
  }
  out.terminal = z.head(n);
  if (keep_segments) out.path = path;
  return out;
}

inline TrajectorySample simulate_closed_loop(const AffineSystem& sys, const std::vector<MatFamily>& weights,
                                             const Vec& x0, const ChainPath& path,
                                             const QuadratureOptions& quad = {}, bool keep_segments = true) {
  return simulate_closed_loop(detail::CostIntegrator(sys, weights, quad), x0, path, keep_segments);
}

// ---------------------------------------------------------------------------
// Parallel Monte Carlo

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

/// Calls f(p) for p in [0, count) on `threads` workers. Each index is handled
/// exactly once; callers store results by index, so output does not depend on
/// scheduling.
template <typename F>
void parallel_for(std::size_t count, unsigned threads, F&& f) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (threads == 1) {
    for (std::size_t p = 0; p < count; ++p) f(p);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t p = next.fetch_add(1);
        if (p >= count) return;
        try {
          f(p);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next.store(count);
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

struct SimOptions {
  std::size_t paths = 10000;
  double horizon = 30.0;
  std::uint64_t seed = 42;
  unsigned threads = 0;  // 0: hardware concurrency
  QuadratureOptions quad;
  bool check_tail = true;
};

struct Summary {
  double mean = 0.0;
  double stderr_ = 0.0;
};

/// Sample mean and standard error, reduced in index order.
inline Summary summarize(const std::vector<double>& xs) {
  Summary s;
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stderr_ = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  }
  return s;
}

/// Bound on |E∫_T^∞ zᵀW z dt| from the W = I Lyapunov witness of A_cl,
/// inflated by a factor 10. Infinite when A_cl has no certificate.
inline double tail_bound(const AffineSystem& sys, const std::vector<MatFamily>& weights, const Vec& x0,
                         std::size_t i0, double T) {
  const auto cert = check_condition_a(sys.Acl, sys.gen);
  if (!cert.feasible) return std::numeric_limits<double>::infinity();
  const auto& P = *cert.P;
  double lmax = 0.0;
  double c = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    Eigen::SelfAdjointEigenSolver<Mat> es(P[i], Eigen::EigenvaluesOnly);
    lmax = std::max(lmax, es.eigenvalues().maxCoeff());
    c = std::max(c, (P[i] * sys.d[i]).norm());
  }
  double wnorm = 0.0;
  for (const auto& fam : weights)
    for (const auto& w : fam) {
      Eigen::SelfAdjointEigenSolver<Mat> es(w, Eigen::EigenvaluesOnly);
      wnorm = std::max(wnorm, es.eigenvalues().cwiseAbs().maxCoeff());
    }
  const double v0 = x0.dot(P[i0] * x0);
  double state_tail;
  double forcing_tail = 0.0;
  if (c == 0.0) {
    // d/dt E⟨P X, X⟩ = −E|X|².
    state_tail = std::exp(-T / lmax) * v0;
  } else {
    // d/dt E V ≤ −a E V + β e^{−2κt} with a = 1/(2λmax), β = 2c².
    const double a = 0.5 / lmax;
    const double beta = 2.0 * c * c;
    const double k2 = 2.0 * sys.kappa;
    const double vT = std::exp(-a * T) * v0 +
                      (std::abs(a - k2) < 1e-12 ? beta * T * std::exp(-a * T)
                                                : beta * (std::exp(-k2 * T) - std::exp(-a * T)) / (a - k2));
    state_tail = 2.0 * vT + beta * std::exp(-k2 * T) / sys.kappa;
    forcing_tail = std::exp(-k2 * T) / k2;
  }
  return 10.0 * wnorm * (state_tail + forcing_tail);
}

struct CostEstimate {
  std::vector<double> mean;
  std::vector<double> stderr_;
  double tail_bound = 0.0;
  std::size_t paths = 0;
  /// per_path[p][c]: path p's truncated cost c.
  std::vector<std::vector<double>> per_path;
};

inline void require_horizon(const CostEstimate& est) {
  for (std::size_t c = 0; c < est.mean.size(); ++c) {
    const double allowed = 0.1 * est.stderr_[c] + 1e-12 * (1.0 + std::abs(est.mean[c]));
    if (!(est.tail_bound <= allowed)) {
      std::ostringstream os;
      os << "tail bound " << est.tail_bound << " exceeds " << allowed;
      throw Error(Errc::HorizonTooShort, os.str());
    }
  }
}

/// Monte Carlo estimate of E∫₀^T zᵀW_c z dt for every weight family c. Path p
/// draws its chain from stream p of opts.seed, so estimates that share a seed
/// share their chain paths.
inline CostEstimate estimate_costs(const AffineSystem& sys, const std::vector<MatFamily>& weights,
                                   const Vec& x0, std::size_t i0, const SimOptions& opts) {
  if (opts.paths < 1) throw Error(Errc::InvalidArgument, "paths must be at least 1");
  if (!(opts.horizon > 0.0)) throw Error(Errc::InvalidArgument, "horizon must be positive");
  if (i0 >= sys.gen.regimes()) throw Error(Errc::InvalidArgument, "initial regime out of range");
  CostEstimate est;
  est.paths = opts.paths;
  est.per_path.assign(opts.paths, {});
  const detail::CostIntegrator integ(sys, weights, opts.quad);
  parallel_for(opts.paths, resolve_threads(opts.threads), [&](std::size_t p) {
    const auto path = sample_chain(sys.gen, i0, opts.horizon, stream_seed(opts.seed, p));
    est.per_path[p] = simulate_closed_loop(integ, x0, path, false).costs;
  });
  for (std::size_t c = 0; c < weights.size(); ++c) {
    std::vector<double> col(opts.paths);
    for (std::size_t p = 0; p < opts.paths; ++p) col[p] = est.per_path[p][c];
    const auto s = summarize(col);
    est.mean.push_back(s.mean);
    est.stderr_.push_back(s.stderr_);
  }
  est.tail_bound = tail_bound(sys, weights, x0, i0, opts.horizon);
  if (opts.check_tail) require_horizon(est);
  return est;
}

inline CostEstimate estimate_cost(const MjlsLqProblem& problem, const ClosedLoopPolicy& policy, const Vec& x0,
                                  std::size_t i0, const SimOptions& opts) {
  return estimate_costs(lq_closed_loop_system(problem, policy), {lq_cost_weight(problem, policy)}, x0, i0, opts);
}

inline CostEstimate estimate_game_cost(const MjlsGameProblem& problem, const GamePolicy& policy, const Vec& x0,
                                       std::size_t i0, const SimOptions& opts) {
  return estimate_costs(game_closed_loop_system(problem, policy),
                        {game_cost_weight(problem, policy, 0), game_cost_weight(problem, policy, 1)}, x0, i0,
                        opts);
}

/// Samples `opts.paths` full trajectories with segment records.
inline std::vector<TrajectorySample> sample_trajectories(const AffineSystem& sys, const Vec& x0, std::size_t i0,
                                                         const SimOptions& opts) {
  std::vector<TrajectorySample> out(opts.paths);
  const detail::CostIntegrator integ(sys, {}, opts.quad);
  parallel_for(opts.paths, resolve_threads(opts.threads), [&](std::size_t p) {
    const auto path = sample_chain(sys.gen, i0, opts.horizon, stream_seed(opts.seed, p));
    out[p] = simulate_closed_loop(integ, x0, path, true);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Verification

struct StationarityReport {
  double max_residual = 0.0;
  std::size_t paths = 0;
  std::size_t grid_points = 0;
};

/// Evaluates (ℒ(P)ᵀ + RΘ)X + e^{−κt}[Bᵀh + Rν̄ + ρ̄] along sampled
/// trajectories on a uniform grid, i.e. BᵀY + S_ΘX + Rν̂ + ρ with Y = PX + η.
inline StationarityReport check_stationarity(const MjlsLqProblem& problem, const CareSolution& sol,
                                             const std::optional<EtaSolution>& eta, const Vec& x0, std::size_t i0,
                                             const SimOptions& opts, std::size_t grid_points = 101) {
  const auto policy = assemble_closed_loop(sol, problem, eta);
  const auto sys = lq_closed_loop_system(problem, policy);
  const auto ops = care_operator(sol.P, problem);
  const auto gain = ops.L.map([&](const Mat& L, std::size_t i) -> Mat {
    return L.transpose() + problem.R[i] * policy.Theta[i];
  });
  const auto offset = policy.nu_bar.map([&](const Vec& nu, std::size_t i) -> Vec {
    Vec v = problem.R[i] * nu;
    if (eta) v += problem.B[i].transpose() * eta->h[i];
    if (problem.inhomog) v += problem.inhomog->rho[i];
    return v;
  });
  const auto samples = sample_trajectories(sys, x0, i0, opts);
  StationarityReport rep;
  rep.paths = samples.size();
  rep.grid_points = grid_points;
  for (const auto& s : samples) {
    for (std::size_t g = 0; g < grid_points; ++g) {
      const double t = opts.horizon * static_cast<double>(g) / static_cast<double>(grid_points - 1);
      const auto i = s.path.regime_at(t);
      const Vec r = gain[i] * s.state_at(sys, t) + std::exp(-policy.kappa * t) * offset[i];
      rep.max_residual = std::max(rep.max_residual, r.norm());
    }
  }
  return rep;
}

struct MartingaleCheck {
  double t = 0.0;
  Vec mean;
  Vec stderr_;
  bool passed = false;
};

/// Empirical mean of η(t) − η(0) + ∫₀ᵗ[F(α)η + e^{−κs}c(α)]ds per component,
/// for η = e^{−κt}h(α_t); each must lie within 3 standard errors of 0.
inline std::vector<MartingaleCheck> check_bsde_martingale(const MatFamily& F, const Generator& gen,
                                                          const VecFamily& c, const EtaSolution& eta, std::size_t i0,
                                                          const std::vector<double>& times, const SimOptions& opts) {
  const double T = *std::max_element(times.begin(), times.end());
  const auto n = F.rows();
  const double kappa = eta.kappa;
  const auto drift = F.map([&](const Mat& f, std::size_t i) -> Vec { return f * eta.h[i] + c[i]; });
  std::vector<std::vector<Vec>> vals(times.size(), std::vector<Vec>(opts.paths));
  parallel_for(opts.paths, resolve_threads(opts.threads), [&](std::size_t p) {
    const auto path = sample_chain(gen, i0, T, stream_seed(opts.seed, p));
    for (std::size_t k = 0; k < times.size(); ++k) {
      const double tk = times[k];
      Vec integral = Vec::Zero(n);
      double a = 0.0;
      std::size_t r = path.i0;
      for (std::size_t j = 0; j <= path.jump_times.size(); ++j) {
        const double b = std::min(tk, j < path.jump_times.size() ? path.jump_times[j] : tk);
        if (b > a) integral += drift[r] * (std::exp(-kappa * a) - std::exp(-kappa * b)) / kappa;
        if (b >= tk) break;
        a = b;
        r = path.regimes_after[j];
      }
      vals[k][p] = eta.eta(tk, path.regime_at(tk)) - eta.eta(0.0, path.i0) + integral;
    }
  });
  std::vector<MartingaleCheck> out;
  for (std::size_t k = 0; k < times.size(); ++k) {
    MartingaleCheck m;
    m.t = times[k];
    m.mean = Vec::Zero(n);
    m.stderr_ = Vec::Zero(n);
    m.passed = true;
    for (Eigen::Index comp = 0; comp < n; ++comp) {
      std::vector<double> col(opts.paths);
      for (std::size_t p = 0; p < opts.paths; ++p) col[p] = vals[k][p](comp);
      const auto s = summarize(col);
      m.mean(comp) = s.mean;
      m.stderr_(comp) = s.stderr_;
      // The absolute floor covers rounding when the chain cannot jump.
      if (std::abs(s.mean) > 3.0 * s.stderr_ + 1e-12) m.passed = false;
    }
    out.push_back(std::move(m));
  }
  return out;
}

struct RepresentationCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double difference = 0.0;
  double stderr_ = 0.0;
  bool passed = false;
};

/// J(x,i;u) against ⟨P̃(i)x,x⟩ + E∫[representation integrand], on common paths.
inline RepresentationCheck check_cost_representation(const MjlsLqProblem& problem, const MatFamily& P_tilde,
                                                     const ClosedLoopPolicy& policy, const Vec& x0, std::size_t i0,
                                                     const SimOptions& opts) {
  const auto sys = lq_closed_loop_system(problem, policy);
  const auto est = estimate_costs(
      sys, {lq_cost_weight(problem, policy), lq_representation_weight(problem, P_tilde, policy)}, x0, i0, opts);
  const double base = x0.dot(P_tilde[i0] * x0);
  std::vector<double> diff(est.paths);
  for (std::size_t p = 0; p < est.paths; ++p) diff[p] = est.per_path[p][0] - (base + est.per_path[p][1]);
  const auto s = summarize(diff);
  RepresentationCheck out;
  out.lhs = est.mean[0];
  out.rhs = base + est.mean[1];
  out.difference = s.mean;
  out.stderr_ = s.stderr_;
  out.passed = std::abs(s.mean) <= 3.0 * s.stderr_ + 1e-12 * (1.0 + std::abs(out.lhs));
  return out;
}

enum class DeviationKind { Gain, Feedforward };

struct DeviationResult {
  int player = 0;  // 0-based
  DeviationKind kind = DeviationKind::Gain;
  double delta_J = 0.0;
  double stderr_ = 0.0;
  bool flagged = false;
};

struct EquilibriumReport {
  std::array<double, 2> equilibrium_cost{0.0, 0.0};
  std::array<double, 2> equilibrium_stderr{0.0, 0.0};
  double tail_bound = 0.0;
  std::vector<DeviationResult> deviations;
  std::size_t flags = 0;
};

struct DeviationOptions {
  int gain_deviations = 20;         // per player
  int feedforward_deviations = 20;  // per player
  double scale = 0.05;
  std::uint64_t seed = 7;
};

/// Unilateral deviation tests: player k plays (Θ_k + δ)X + e^{−κt}(ν̄_k + δν)
/// while the other player keeps feedback form on the deviating trajectory.
/// Each deviation shares chain paths with the equilibrium run.
inline EquilibriumReport verify_equilibrium_mc(const MjlsGameProblem& problem, const GameSolution& gsol,
                                               const std::optional<GameEtaSolution>& eta, const Vec& x0,
                                               std::size_t i0, const SimOptions& opts,
                                               const DeviationOptions& dev = {}) {
  const auto eq = assemble_game_policy(gsol, problem, eta);
  const auto base = estimate_game_cost(problem, eq, x0, i0, opts);
  EquilibriumReport rep;
  rep.tail_bound = base.tail_bound;
  for (int k = 0; k < 2; ++k) {
    rep.equilibrium_cost[k] = base.mean[static_cast<std::size_t>(k)];
    rep.equilibrium_stderr[k] = base.stderr_[static_cast<std::size_t>(k)];
  }
  const auto d = problem.regimes();
  std::uint64_t counter = 0;
  for (int k = 0; k < 2; ++k) {
    for (int kind = 0; kind < 2; ++kind) {
      const int count = kind == 0 ? dev.gain_deviations : dev.feedforward_deviations;
      for (int r = 0; r < count; ++r) {
        Rng rng(stream_seed(dev.seed, counter++));
        GamePolicy pol = eq;
        auto& me = pol.player[static_cast<std::size_t>(k)];
        bool admissible = false;
        if (kind == 0) {
          std::vector<Mat> delta(d);
          double norm2 = 0.0;
          for (auto& m : delta) {
            m = Mat(problem.m[static_cast<std::size_t>(k)], problem.n);
            for (Eigen::Index a = 0; a < m.size(); ++a) m.data()[a] = rng.normal();
            norm2 += m.squaredNorm();
          }
          double target = dev.scale * (1.0 + family_norm(me.Theta));
          for (int attempt = 0; attempt < 20 && !admissible; ++attempt, target *= 0.5) {
            const double f = target / std::sqrt(norm2);
            pol.player[static_cast<std::size_t>(k)].Theta =
                eq.player[static_cast<std::size_t>(k)].Theta.map([&](const Mat& t, std::size_t i) -> Mat {
                  return t + f * delta[i];
                });
            admissible = is_game_stabilizer(pol.player[0].Theta, pol.player[1].Theta, problem).feasible;
          }
        } else {
          std::vector<Vec> delta(d);
          double norm2 = 0.0;
          for (auto& v : delta) {
            v = Vec(problem.m[static_cast<std::size_t>(k)]);
            for (Eigen::Index a = 0; a < v.size(); ++a) v(a) = rng.normal();
            norm2 += v.squaredNorm();
          }
          const double f = dev.scale * (1.0 + family_norm(me.nu_bar)) / std::sqrt(norm2);
          me.nu_bar = me.nu_bar.map([&](const Vec& v, std::size_t i) -> Vec { return v + f * delta[i]; });
          admissible = true;
        }
        if (!admissible) continue;
        const auto est = estimate_game_cost(problem, pol, x0, i0, opts);
        std::vector<double> diff(est.paths);
        for (std::size_t p = 0; p < est.paths; ++p)
          diff[p] = est.per_path[p][static_cast<std::size_t>(k)] - base.per_path[p][static_cast<std::size_t>(k)];
        const auto s = summarize(diff);
        DeviationResult res;
        res.player = k;
        res.kind = kind == 0 ? DeviationKind::Gain : DeviationKind::Feedforward;
        res.delta_J = s.mean;
        res.stderr_ = s.stderr_;
        res.flagged = s.mean < -3.0 * s.stderr_ - 1e-12 * (1.0 + std::abs(rep.equilibrium_cost[k]));
        rep.flags += res.flagged ? 1 : 0;
        rep.deviations.push_back(res);
      }
    }
  }
  return rep;
}

}  // namespace jumplq
