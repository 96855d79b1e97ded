#pragma once

#include "jumplq/core.hpp"

#include <Eigen/Eigenvalues>

#include <array>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace jumplq {

struct ValidationOptions {
  double pd_tol = 1e-10;
  double psd_tol = 1e-8;
  double row_sum_repair = 1e-9;
  double transpose_tol = 1e-10;
};

/// Generator Π of the regime chain: π_ij >= 0 off the diagonal, rows sum to 0.
/// Only constructible through validate_generator().
class Generator {
 public:
  Generator() = default;

  std::size_t regimes() const noexcept { return static_cast<std::size_t>(pi_.rows()); }
  const Mat& matrix() const noexcept { return pi_; }
  double rate(std::size_t i, std::size_t j) const { return pi_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)); }
  /// Total exit rate −π_ii of regime i.
  double exit_rate(std::size_t i) const { return -rate(i, i); }

  /// True when every regime reaches every other one through positive rates.
  bool irreducible() const {
    const auto d = regimes();
    for (std::size_t s = 0; s < d; ++s) {
      std::vector<bool> seen(d, false);
      std::vector<std::size_t> stack{s};
      seen[s] = true;
      while (!stack.empty()) {
        auto i = stack.back();
        stack.pop_back();
        for (std::size_t j = 0; j < d; ++j) {
          if (j != i && rate(i, j) > 0.0 && !seen[j]) {
            seen[j] = true;
            stack.push_back(j);
          }
        }
      }
      for (bool b : seen)
        if (!b) return false;
    }
    return true;
  }

  /// Stationary distribution μ with μᵀΠ = 0, Σμ = 1 (least squares when reducible).
  Vec stationary_distribution() const {
    const auto d = static_cast<Eigen::Index>(regimes());
    Mat sys(d + 1, d);
    sys.topRows(d) = pi_.transpose();
    sys.row(d).setOnes();
    Vec rhs = Vec::Zero(d + 1);
    rhs(d) = 1.0;
    return sys.colPivHouseholderQr().solve(rhs);
  }

 private:
  explicit Generator(Mat pi) : pi_(std::move(pi)) {}
  friend Generator validate_generator(const Mat& raw, const ValidationOptions& opts);

  Mat pi_;
};

/// Square-integrable inhomogeneous data of the form e^{−κt}·bar(α_t).
struct LqSignal {
  double kappa = 1.0;
  VecFamily b;    // drift offset, n
  VecFamily q;    // linear state cost, n
  VecFamily rho;  // linear control cost, m
};

struct GameSignal {
  double kappa = 1.0;
  VecFamily b;                  // n
  std::array<VecFamily, 2> q;   // q^k, n
  /// rho[k][l] = ρ_l^k: player k's linear weight on u_l (length m_l).
  std::array<std::array<VecFamily, 2>, 2> rho;
};

struct MjlsLqProblem {
  Generator gen;
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  MatFamily A, B, Q, S, R;
  std::optional<LqSignal> inhomog;
  std::vector<std::string> warnings;

  std::size_t regimes() const noexcept { return gen.regimes(); }
};

/// Player k's quadratic cost blocks. S[l] = S_l^k (m_l × n); Rb[l1][l2] = R_{l1 l2}^k.
struct PlayerCost {
  MatFamily Q;
  std::array<MatFamily, 2> S;
  std::array<std::array<MatFamily, 2>, 2> Rb;
};

struct MjlsGameProblem {
  Generator gen;
  Eigen::Index n = 0;
  std::array<Eigen::Index, 2> m{0, 0};
  MatFamily A;
  std::array<MatFamily, 2> B;
  std::array<PlayerCost, 2> cost;
  std::optional<GameSignal> inhomog;
  std::vector<std::string> warnings;

  std::size_t regimes() const noexcept { return gen.regimes(); }
};

// ---------------------------------------------------------------------------
// Unvalidated input forms, as parsed from problem files.

struct LqSignalInput {
  double kappa = 1.0;
  std::vector<Vec> b, q, rho;
};

struct LqProblemInput {
  Mat generator;
  std::vector<Mat> A, B, Q, S, R;
  std::optional<LqSignalInput> inhomog;
};

struct GameSignalInput {
  double kappa = 1.0;
  std::vector<Vec> b;
  std::array<std::vector<Vec>, 2> q;
  std::array<std::array<std::vector<Vec>, 2>, 2> rho;
};

struct PlayerCostInput {
  std::vector<Mat> Q;
  std::array<std::vector<Mat>, 2> S;
  std::vector<Mat> R11, R12, R22;
  /// Optional; defaults to R12ᵀ when empty.
  std::vector<Mat> R21;
};

struct GameProblemInput {
  Mat generator;
  std::vector<Mat> A;
  std::array<std::vector<Mat>, 2> B;
  std::array<PlayerCostInput, 2> cost;
  std::optional<GameSignalInput> inhomog;
};

// ---------------------------------------------------------------------------

inline double min_sym_eigenvalue(const Mat& m) {
  if (m.size() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline Generator validate_generator(const Mat& raw, const ValidationOptions& opts = {}) {
  if (raw.rows() != raw.cols() || raw.rows() < 1) {
    throw Error(Errc::DimensionMismatch, "generator must be a non-empty square matrix, got " +
                                             std::to_string(raw.rows()) + "x" +
                                             std::to_string(raw.cols()));
  }
  if (!raw.allFinite()) throw Error(Errc::InvalidArgument, "generator has non-finite entries");
  const auto d = raw.rows();
  Mat pi = raw;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (i != j && pi(i, j) < 0.0) {
        std::ostringstream os;
        os << "pi(" << i + 1 << "," << j + 1 << ") = " << pi(i, j) << " < 0";
        throw Error(Errc::NegativeOffDiagonal, os.str());
      }
    }
    const double deviation = pi.row(i).sum();
    if (std::abs(deviation) >= opts.row_sum_repair) {
      std::ostringstream os;
      os << "row " << i + 1 << " sums to " << deviation;
      throw Error(Errc::RowSumViolation, os.str());
    }
    // Exact repair: the diagonal carries the negated off-diagonal mass.
    double off = 0.0;
    for (Eigen::Index j = 0; j < d; ++j)
      if (j != i) off += pi(i, j);
    pi(i, i) = -off;
  }
  return Generator(std::move(pi));
}

namespace detail {

inline MatFamily to_family(const std::vector<Mat>& blocks, std::size_t regimes, Eigen::Index rows,
                           Eigen::Index cols, const std::string& what) {
  if (blocks.size() != regimes) {
    throw Error(Errc::DimensionMismatch, what + ": expected " + std::to_string(regimes) +
                                             " regime blocks, got " + std::to_string(blocks.size()));
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].rows() != rows || blocks[i].cols() != cols) {
      throw Error(Errc::DimensionMismatch,
                  what + "(" + std::to_string(i + 1) + ") is " + std::to_string(blocks[i].rows()) +
                      "x" + std::to_string(blocks[i].cols()) + ", expected " +
                      std::to_string(rows) + "x" + std::to_string(cols));
    }
    if (!blocks[i].allFinite())
      throw Error(Errc::InvalidArgument, what + "(" + std::to_string(i + 1) + ") is not finite");
  }
  return MatFamily(blocks);
}

inline VecFamily to_family(const std::vector<Vec>& vs, std::size_t regimes, Eigen::Index rows,
                           const std::string& what) {
  if (vs.empty()) return VecFamily::zeros(regimes, rows);
  if (vs.size() != regimes) {
    throw Error(Errc::DimensionMismatch, what + ": expected " + std::to_string(regimes) +
                                             " regime vectors, got " + std::to_string(vs.size()));
  }
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (vs[i].size() != rows) {
      throw Error(Errc::DimensionMismatch, what + "(" + std::to_string(i + 1) + ") has length " +
                                               std::to_string(vs[i].size()) + ", expected " +
                                               std::to_string(rows));
    }
    if (!vs[i].allFinite())
      throw Error(Errc::InvalidArgument, what + "(" + std::to_string(i + 1) + ") is not finite");
  }
  return VecFamily(vs);
}

inline void require_pd(const MatFamily& family, const std::string& block, double tol) {
  for (std::size_t i = 0; i < family.size(); ++i) {
    const double e = min_sym_eigenvalue(family[i]);
    if (!(e > tol)) {
      std::ostringstream os;
      os << block << "(" << i + 1 << ") min eigenvalue " << e;
      throw Error(Errc::NotPositiveDefinite, os.str());
    }
  }
}

inline double check_kappa(double kappa) {
  if (!(kappa > 0.0) || !std::isfinite(kappa))
    throw Error(Errc::InvalidArgument, "signal decay rate kappa must be > 0");
  return kappa;
}

inline void warn_reducible(const Generator& gen, std::vector<std::string>& warnings) {
  if (!gen.irreducible()) warnings.emplace_back("generator is reducible");
}

inline std::vector<Mat> vec_of(const MatFamily& f) { return f.entries(); }
inline std::vector<Vec> vec_of(const VecFamily& f) { return f.entries(); }

}  // namespace detail

inline MjlsLqProblem validate_lq_problem(const LqProblemInput& in, const ValidationOptions& opts = {}) {
  MjlsLqProblem p;
  p.gen = validate_generator(in.generator, opts);
  const auto d = p.gen.regimes();
  if (in.A.empty() || in.B.empty())
    throw Error(Errc::DimensionMismatch, "problem needs A and B blocks");
  p.n = in.A.front().rows();
  p.m = in.B.front().cols();
  p.A = detail::to_family(in.A, d, p.n, p.n, "A");
  p.B = detail::to_family(in.B, d, p.n, p.m, "B");
  p.Q = detail::to_family(in.Q, d, p.n, p.n, "Q").map([](const Mat& q, std::size_t) -> Mat { return symmetrize(q); });
  p.S = in.S.empty() ? MatFamily::zeros(d, p.m, p.n) : detail::to_family(in.S, d, p.m, p.n, "S");
  p.R = detail::to_family(in.R, d, p.m, p.m, "R").map([](const Mat& r, std::size_t) -> Mat { return symmetrize(r); });

  detail::require_pd(p.R, "R", opts.pd_tol);
  for (std::size_t i = 0; i < d; ++i) {
    const Mat schur = p.Q[i] - p.S[i].transpose() * p.R[i].llt().solve(p.S[i]);
    const double e = min_sym_eigenvalue(schur);
    if (e < -opts.psd_tol) {
      std::ostringstream os;
      os << "Q - S'R^{-1}S in regime " << i + 1 << " has min eigenvalue " << e;
      throw Error(Errc::IndefiniteSchurComplement, os.str());
    }
  }
  if (in.inhomog) {
    const auto& s = *in.inhomog;
    p.inhomog = LqSignal{detail::check_kappa(s.kappa), detail::to_family(s.b, d, p.n, "b"),
                         detail::to_family(s.q, d, p.n, "q"), detail::to_family(s.rho, d, p.m, "rho")};
  }
  detail::warn_reducible(p.gen, p.warnings);
  return p;
}

inline LqProblemInput to_input(const MjlsLqProblem& p) {
  LqProblemInput in;
  in.generator = p.gen.matrix();
  in.A = p.A.entries();
  in.B = p.B.entries();
  in.Q = p.Q.entries();
  in.S = p.S.entries();
  in.R = p.R.entries();
  if (p.inhomog) {
    in.inhomog = LqSignalInput{p.inhomog->kappa, p.inhomog->b.entries(), p.inhomog->q.entries(),
                               p.inhomog->rho.entries()};
  }
  return in;
}

inline MjlsGameProblem validate_game_problem(const GameProblemInput& in,
                                             const ValidationOptions& opts = {}) {
  MjlsGameProblem p;
  p.gen = validate_generator(in.generator, opts);
  const auto d = p.gen.regimes();
  if (in.A.empty() || in.B[0].empty() || in.B[1].empty())
    throw Error(Errc::DimensionMismatch, "game problem needs A, B1 and B2 blocks");
  p.n = in.A.front().rows();
  p.m = {in.B[0].front().cols(), in.B[1].front().cols()};
  p.A = detail::to_family(in.A, d, p.n, p.n, "A");
  for (int l = 0; l < 2; ++l)
    p.B[l] = detail::to_family(in.B[l], d, p.n, p.m[l], "B" + std::to_string(l + 1));

  for (int k = 0; k < 2; ++k) {
    const auto& c = in.cost[k];
    auto& out = p.cost[k];
    const std::string sfx = "^" + std::to_string(k + 1);
    out.Q = detail::to_family(c.Q, d, p.n, p.n, "Q" + sfx).map([](const Mat& q, std::size_t) -> Mat { return symmetrize(q); });
    for (int l = 0; l < 2; ++l) {
      out.S[l] = c.S[l].empty() ? MatFamily::zeros(d, p.m[l], p.n)
                                : detail::to_family(c.S[l], d, p.m[l], p.n, "S" + std::to_string(l + 1) + sfx);
    }
    out.Rb[0][0] = detail::to_family(c.R11, d, p.m[0], p.m[0], "R11" + sfx).map([](const Mat& r, std::size_t) -> Mat { return symmetrize(r); });
    out.Rb[1][1] = detail::to_family(c.R22, d, p.m[1], p.m[1], "R22" + sfx).map([](const Mat& r, std::size_t) -> Mat { return symmetrize(r); });
    out.Rb[0][1] = c.R12.empty() ? MatFamily::zeros(d, p.m[0], p.m[1])
                                 : detail::to_family(c.R12, d, p.m[0], p.m[1], "R12" + sfx);
    if (c.R21.empty()) {
      out.Rb[1][0] = out.Rb[0][1].map([](const Mat& r, std::size_t) -> Mat { return r.transpose(); });
    } else {
      out.Rb[1][0] = detail::to_family(c.R21, d, p.m[1], p.m[0], "R21" + sfx);
      for (std::size_t i = 0; i < d; ++i) {
        const double dev = (out.Rb[0][1][i] - out.Rb[1][0][i].transpose()).cwiseAbs().maxCoeff();
        if (dev > opts.transpose_tol) {
          std::ostringstream os;
          os << "R12" << sfx << "(" << i + 1 << ") differs from R21" << sfx << "(" << i + 1
             << ")' by " << dev;
          throw Error(Errc::TransposeMismatch, os.str());
        }
      }
    }

    // Each player's own-control block is inverted by the equilibrium equations.
    detail::require_pd(out.Rb[k][k], "R" + std::to_string(k + 1) + std::to_string(k + 1) + sfx,
                       opts.pd_tol);
    const int other = 1 - k;
    for (std::size_t i = 0; i < d; ++i) {
      const double e = min_sym_eigenvalue(out.Rb[other][other][i]);
      if (!(e > opts.pd_tol)) {
        std::ostringstream os;
        os << "R" << other + 1 << other + 1 << sfx << "(" << i + 1
           << ") is not positive definite (min eigenvalue " << e << ")";
        p.warnings.push_back(os.str());
      }
      // The standing assumption as stated: Q^k − S_k^kᵀ R_kk^k S_k^k ⪰ 0.
      const Mat schur = out.Q[i] - out.S[k][i].transpose() * out.Rb[k][k][i] * out.S[k][i];
      const double s = min_sym_eigenvalue(schur);
      if (s < -opts.psd_tol) {
        std::ostringstream os;
        os << "Q" << sfx << " - S" << k + 1 << sfx << "'R" << k + 1 << k + 1 << sfx << "S" << k + 1
           << sfx << " in regime " << i + 1 << " has min eigenvalue " << s;
        throw Error(Errc::IndefiniteSchurComplement, os.str());
      }
    }
  }

  if (in.inhomog) {
    const auto& s = *in.inhomog;
    GameSignal g;
    g.kappa = detail::check_kappa(s.kappa);
    g.b = detail::to_family(s.b, d, p.n, "b");
    for (int k = 0; k < 2; ++k) {
      g.q[k] = detail::to_family(s.q[k], d, p.n, "q" + std::to_string(k + 1));
      for (int l = 0; l < 2; ++l)
        g.rho[k][l] = detail::to_family(s.rho[k][l], d, p.m[l],
                                        "rho" + std::to_string(l + 1) + "_" + std::to_string(k + 1));
    }
    p.inhomog = std::move(g);
  }
  detail::warn_reducible(p.gen, p.warnings);
  return p;
}

inline GameProblemInput to_input(const MjlsGameProblem& p) {
  GameProblemInput in;
  in.generator = p.gen.matrix();
  in.A = p.A.entries();
  for (int l = 0; l < 2; ++l) in.B[l] = p.B[l].entries();
  for (int k = 0; k < 2; ++k) {
    const auto& c = p.cost[k];
    auto& o = in.cost[k];
    o.Q = c.Q.entries();
    o.S = {c.S[0].entries(), c.S[1].entries()};
    o.R11 = c.Rb[0][0].entries();
    o.R12 = c.Rb[0][1].entries();
    o.R21 = c.Rb[1][0].entries();
    o.R22 = c.Rb[1][1].entries();
  }
  if (p.inhomog) {
    GameSignalInput s;
    s.kappa = p.inhomog->kappa;
    s.b = p.inhomog->b.entries();
    for (int k = 0; k < 2; ++k) {
      s.q[k] = p.inhomog->q[k].entries();
      for (int l = 0; l < 2; ++l) s.rho[k][l] = p.inhomog->rho[k][l].entries();
    }
    in.inhomog = std::move(s);
  }
  return in;
}

}  // namespace jumplq
