#pragma once

#include "jumplq/model.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <sstream>

namespace jumplq {

/// P(i)A(i) + A(i)ᵀP(i) + Σ_j π_ij P(j) + W(i) = 0 for all regimes i.
struct CoupledLyapunovSystem {
  MatFamily A;
  Generator gen;
  MatFamily W;
};

inline bool is_positive_definite(const Mat& m, double tol) {
  if (m.rows() != m.cols()) return false;
  return min_sym_eigenvalue(m) > tol;
}

/// Left-hand operator Σ-form P ↦ PA + AᵀP + Σ_j π_ij P(j), regime by regime.
inline MatFamily coupled_lyapunov_operator(const MatFamily& A, const Generator& gen, const MatFamily& P) {
  const auto d = gen.regimes();
  std::vector<Mat> out(d);
  for (std::size_t i = 0; i < d; ++i) {
    out[i] = P[i] * A[i] + A[i].transpose() * P[i];
    for (std::size_t j = 0; j < d; ++j) out[i] += gen.rate(i, j) * P[j];
  }
  return MatFamily(std::move(out));
}

/// Per-regime Frobenius norm of the equation residual.
inline std::vector<double> coupled_lyapunov_residual(const CoupledLyapunovSystem& sys, const MatFamily& P) {
  const auto lhs = coupled_lyapunov_operator(sys.A, sys.gen, P);
  std::vector<double> out(lhs.size());
  for (std::size_t i = 0; i < lhs.size(); ++i) out[i] = (lhs[i] + sys.W[i]).norm();
  return out;
}

namespace detail {

/// Upper-triangle index map of an n×n symmetric matrix, row-major over k <= l.
struct SymIndex {
  explicit SymIndex(Eigen::Index n) : n(n), size(n * (n + 1) / 2) {}

  Eigen::Index operator()(Eigen::Index k, Eigen::Index l) const {
    if (k > l) std::swap(k, l);
    return k * n - k * (k - 1) / 2 + (l - k);
  }

  Eigen::Index n;
  Eigen::Index size;
};

inline double relative_min_singular(const Eigen::JacobiSVD<Mat>& svd) {
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 0.0;
  const double top = s(0);
  return top > 0.0 ? s(s.size() - 1) / top : 0.0;
}

}  // namespace detail

inline MatFamily coupled_lyapunov_solve(const CoupledLyapunovSystem& sys) {
  const auto d = sys.gen.regimes();
  if (d == 0) throw Error(Errc::DimensionMismatch, "empty generator");
  const auto n = sys.A.rows();
  require_shape(sys.A, d, n, n, "A");
  require_shape(sys.W, d, n, n, "W");

  const detail::SymIndex idx(n);
  const Eigen::Index block = idx.size;
  const Eigen::Index dim = static_cast<Eigen::Index>(d) * block;
  Mat op = Mat::Zero(dim, dim);
  Vec rhs(dim);

  // Column (j, k, l) is the image of the symmetric basis matrix E_kl placed in regime j.
  for (std::size_t j = 0; j < d; ++j) {
    const auto& Aj = sys.A[j];
    for (Eigen::Index k = 0; k < n; ++k) {
      for (Eigen::Index l = k; l < n; ++l) {
        const Eigen::Index col = static_cast<Eigen::Index>(j) * block + idx(k, l);
        Mat E = Mat::Zero(n, n);
        E(k, l) = 1.0;
        E(l, k) = 1.0;
        const Mat own = E * Aj + Aj.transpose() * E;
        for (std::size_t i = 0; i < d; ++i) {
          const double pij = sys.gen.rate(i, j);
          const Eigen::Index row0 = static_cast<Eigen::Index>(i) * block;
          for (Eigen::Index r = 0; r < n; ++r) {
            for (Eigen::Index s = r; s < n; ++s) {
              double v = pij * E(r, s);
              if (i == j) v += own(r, s);
              op(row0 + idx(r, s), col) = v;
            }
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    const Mat Wi = symmetrize(sys.W[i]);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index s = r; s < n; ++s)
        rhs(static_cast<Eigen::Index>(i) * block + idx(r, s)) = -Wi(r, s);
  }

  Eigen::JacobiSVD<Mat> svd(op, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double rel = detail::relative_min_singular(svd);
  if (rel < 1e-12) {
    std::ostringstream os;
    os << "coupled Lyapunov operator is singular (relative smallest singular value " << rel << ")";
    throw Error(Errc::SingularOperator, os.str());
  }
  const Vec sol = svd.solve(rhs);

  std::vector<Mat> P(d, Mat(n, n));
  for (std::size_t i = 0; i < d; ++i) {
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index s = r; s < n; ++s) {
        const double v = sol(static_cast<Eigen::Index>(i) * block + idx(r, s));
        P[i](r, s) = v;
        P[i](s, r) = v;
      }
    }
  }
  return MatFamily(std::move(P));
}

inline MatFamily coupled_lyapunov_solve(const MatFamily& A, const Generator& gen, const MatFamily& W) {
  return coupled_lyapunov_solve(CoupledLyapunovSystem{A, gen, W});
}

/// The D·n² × D·n² coupled operator with diagonal blocks A⊕A + π_ii I and
/// off-diagonal blocks π_ij I.
inline Mat coupled_lyapunov_matrix(const MatFamily& A, const Generator& gen) {
  const auto d = gen.regimes();
  const auto n = A.rows();
  require_shape(A, d, n, n, "A");
  const Eigen::Index nn = n * n;
  const Mat I = Mat::Identity(n, n);
  Mat L = Mat::Zero(static_cast<Eigen::Index>(d) * nn, static_cast<Eigen::Index>(d) * nn);
  for (std::size_t i = 0; i < d; ++i) {
    const auto bi = static_cast<Eigen::Index>(i) * nn;
    Mat ksum(nn, nn);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < n; ++c)
        ksum.block(r * n, c * n, n, n) = A[i](r, c) * I + (r == c ? A[i] : Mat::Zero(n, n));
    for (std::size_t j = 0; j < d; ++j) {
      const auto bj = static_cast<Eigen::Index>(j) * nn;
      L.block(bi, bj, nn, nn) = gen.rate(i, j) * Mat::Identity(nn, nn);
    }
    L.block(bi, bi, nn, nn) += ksum;
  }
  return L;
}

inline double coupled_spectral_abscissa(const MatFamily& A, const Generator& gen) {
  const Mat L = coupled_lyapunov_matrix(A, gen);
  Eigen::EigenSolver<Mat> es(L, false);
  return es.eigenvalues().real().maxCoeff();
}

}  // namespace jumplq
