#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

namespace jumplq {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Error kinds raised by the library. The CLI maps each kind to an exit code
/// through error_category().
enum class Errc {
  // validation
  NegativeOffDiagonal,
  RowSumViolation,
  DimensionMismatch,
  NotPositiveDefinite,
  IndefiniteSchurComplement,
  TransposeMismatch,
  InvalidArgument,
  ParseError,
  // solvers
  SingularOperator,
  SynthesisFailed,
  StabilizerSynthesisFailed,
  NotConverged,
  LyapunovSingular,
  SingularShiftedOperator,
  ResolventSingular,
  SingularConstraintBlock,
  InnerCareFailed,
  SingularFeedforwardSystem,
  // verification
  HorizonTooShort,
};

enum class ErrorCategory { Validation, Solver, Verification };

constexpr std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::NegativeOffDiagonal: return "NegativeOffDiagonal";
    case Errc::RowSumViolation: return "RowSumViolation";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NotPositiveDefinite: return "NotPositiveDefinite";
    case Errc::IndefiniteSchurComplement: return "IndefiniteSchurComplement";
    case Errc::TransposeMismatch: return "TransposeMismatch";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::ParseError: return "ParseError";
    case Errc::SingularOperator: return "SingularOperator";
    case Errc::SynthesisFailed: return "SynthesisFailed";
    case Errc::StabilizerSynthesisFailed: return "StabilizerSynthesisFailed";
    case Errc::NotConverged: return "NotConverged";
    case Errc::LyapunovSingular: return "LyapunovSingular";
    case Errc::SingularShiftedOperator: return "SingularShiftedOperator";
    case Errc::ResolventSingular: return "ResolventSingular";
    case Errc::SingularConstraintBlock: return "SingularConstraintBlock";
    case Errc::InnerCareFailed: return "InnerCareFailed";
    case Errc::SingularFeedforwardSystem: return "SingularFeedforwardSystem";
    case Errc::HorizonTooShort: return "HorizonTooShort";
  }
  return "Unknown";
}

constexpr ErrorCategory error_category(Errc code) {
  switch (code) {
    case Errc::NegativeOffDiagonal:
    case Errc::RowSumViolation:
    case Errc::DimensionMismatch:
    case Errc::NotPositiveDefinite:
    case Errc::IndefiniteSchurComplement:
    case Errc::TransposeMismatch:
    case Errc::InvalidArgument:
    case Errc::ParseError:
      return ErrorCategory::Validation;
    case Errc::HorizonTooShort:
      return ErrorCategory::Verification;
    default:
      return ErrorCategory::Solver;
  }
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

/// A regime-indexed family Λ = [Λ(1), ..., Λ(D)] of equally shaped matrices
/// or vectors. Regimes are 0-based in code.
template <typename T>
class RegimeFamily {
 public:
  using value_type = T;

  RegimeFamily() = default;

  explicit RegimeFamily(std::vector<T> entries) : entries_(std::move(entries)) {
    check_uniform();
  }

  RegimeFamily(std::initializer_list<T> entries) : entries_(entries) {
    check_uniform();
  }

  /// D copies of `value`.
  static RegimeFamily filled(std::size_t regimes, const T& value) {
    return RegimeFamily(std::vector<T>(regimes, value));
  }

  static RegimeFamily zeros(std::size_t regimes, Eigen::Index rows,
                            Eigen::Index cols = 1) {
    if constexpr (T::ColsAtCompileTime == 1) {
      return filled(regimes, T::Zero(rows));
    } else {
      return filled(regimes, T::Zero(rows, cols));
    }
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  Eigen::Index rows() const { return entries_.empty() ? 0 : entries_.front().rows(); }
  Eigen::Index cols() const { return entries_.empty() ? 0 : entries_.front().cols(); }

  const T& operator[](std::size_t i) const { return entries_[i]; }
  T& operator[](std::size_t i) { return entries_[i]; }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  const std::vector<T>& entries() const noexcept { return entries_; }

  /// Elementwise map producing a new family.
  template <typename F>
  auto map(F&& f) const {
    using R = std::decay_t<decltype(f(entries_.front(), std::size_t{0}))>;
    std::vector<R> out;
    out.reserve(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) out.push_back(f(entries_[i], i));
    return RegimeFamily<R>(std::move(out));
  }

 private:
  void check_uniform() const {
    for (const auto& e : entries_) {
      if (e.rows() != entries_.front().rows() || e.cols() != entries_.front().cols()) {
        throw Error(Errc::DimensionMismatch,
                    "regime family entries have differing shapes (" +
                        std::to_string(entries_.front().rows()) + "x" +
                        std::to_string(entries_.front().cols()) + " vs " +
                        std::to_string(e.rows()) + "x" + std::to_string(e.cols()) + ")");
      }
    }
  }

  std::vector<T> entries_;
};

using MatFamily = RegimeFamily<Mat>;
using VecFamily = RegimeFamily<Vec>;

inline void require_shape(const MatFamily& family, std::size_t regimes, Eigen::Index rows,
                          Eigen::Index cols, std::string_view what) {
  if (family.size() != regimes || (regimes > 0 && (family.rows() != rows || family.cols() != cols))) {
    throw Error(Errc::DimensionMismatch,
                std::string(what) + ": expected " + std::to_string(regimes) + " blocks of " +
                    std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                    std::to_string(family.size()) + " blocks of " +
                    std::to_string(family.rows()) + "x" + std::to_string(family.cols()));
  }
}

inline void require_shape(const VecFamily& family, std::size_t regimes, Eigen::Index rows,
                          std::string_view what) {
  if (family.size() != regimes || (regimes > 0 && family.rows() != rows)) {
    throw Error(Errc::DimensionMismatch,
                std::string(what) + ": expected " + std::to_string(regimes) +
                    " vectors of length " + std::to_string(rows) + ", got " +
                    std::to_string(family.size()) + " of length " + std::to_string(family.rows()));
  }
}

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

/// Largest per-regime Frobenius norm.
template <typename T>
double max_norm(const RegimeFamily<T>& family) {
  double out = 0.0;
  for (const auto& e : family) out = std::max(out, e.norm());
  return out;
}

/// Frobenius norm of the whole family viewed as one stacked array.
template <typename T>
double family_norm(const RegimeFamily<T>& family) {
  double s = 0.0;
  for (const auto& e : family) s += e.squaredNorm();
  return std::sqrt(s);
}

template <typename T>
double max_abs_diff(const RegimeFamily<T>& a, const RegimeFamily<T>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double out = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].rows() != b[i].rows() || a[i].cols() != b[i].cols())
      return std::numeric_limits<double>::infinity();
    out = std::max(out, (a[i] - b[i]).cwiseAbs().maxCoeff());
  }
  return out;
}

}  // namespace jumplq
