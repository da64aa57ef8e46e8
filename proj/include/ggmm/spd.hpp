#pragma once

// Geometry of the manifold of symmetric positive definite matrices under the
// affine-invariant metric g_S(xi, eta) = tr(S^-1 xi S^-1 eta).
//
// Points and tangents are value types validated at construction: a point
// carries its Cholesky factor, a tangent is stored exactly symmetric. All
// operations that need S^(1/2) go through a symmetric eigendecomposition and
// every returned matrix is explicitly symmetrized, so round-trips stay on the
// manifold instead of drifting into slightly asymmetric territory.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "ggmm/errors.hpp"

namespace ggmm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Relative Frobenius asymmetry test. Zero matrices count as symmetric.
inline bool is_symmetric_within(const Matrix& m, double rel_tol) {
  if (m.rows() != m.cols()) return false;
  const double norm = m.norm();
  const double asym = (m - m.transpose()).norm();
  return asym <= rel_tol * norm;
}

namespace detail {

constexpr double symmetry_rel_tol = 1e-12;
// Smallest admissible Cholesky pivot, relative to the largest diagonal entry.
constexpr double spd_pivot_rel_tol = 1e-13;

inline void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace detail

/// Symmetric matrix in the tangent space of an SPD point. Construction checks
/// symmetry to 1e-12 relative Frobenius and stores the symmetrized matrix.
class TangentVec {
 public:
  explicit TangentVec(Matrix m) {
    detail::require(m.rows() > 0 && m.rows() == m.cols(),
                    "TangentVec: matrix must be square and non-empty");
    detail::require(m.allFinite(), "TangentVec: matrix must be finite");
    if (!is_symmetric_within(m, detail::symmetry_rel_tol))
      throw std::invalid_argument("TangentVec: matrix is not symmetric");
    mat_ = symmetrized(m);
  }

  static TangentVec zero(Eigen::Index d) { return TangentVec(Matrix::Zero(d, d)); }

  const Matrix& mat() const { return mat_; }
  Eigen::Index dim() const { return mat_.rows(); }

  TangentVec& operator+=(const TangentVec& o) {
    mat_ += o.mat_;
    return *this;
  }
  TangentVec& operator-=(const TangentVec& o) {
    mat_ -= o.mat_;
    return *this;
  }
  TangentVec& operator*=(double a) {
    mat_ *= a;
    return *this;
  }

  friend TangentVec operator+(TangentVec a, const TangentVec& b) { return a += b; }
  friend TangentVec operator-(TangentVec a, const TangentVec& b) { return a -= b; }
  friend TangentVec operator*(TangentVec a, double s) { return a *= s; }
  friend TangentVec operator*(double s, TangentVec a) { return a *= s; }
  friend TangentVec operator-(TangentVec a) { return a *= -1.0; }

 private:
  Matrix mat_;
};

/// SPD matrix with its Cholesky factorization. Construction validates:
/// symmetry to 1e-12 relative Frobenius (then symmetrizes), and positive
/// definiteness via Cholesky with smallest pivot > 1e-13 x largest diagonal.
class SpdPoint {
 public:
  explicit SpdPoint(Matrix m) {
    detail::require(m.rows() > 0 && m.rows() == m.cols(),
                    "SpdPoint: matrix must be square and non-empty");
    detail::require(m.allFinite(), "SpdPoint: matrix must be finite");
    if (!is_symmetric_within(m, detail::symmetry_rel_tol))
      throw std::invalid_argument("SpdPoint: matrix is not symmetric");
    mat_ = symmetrized(m);
    llt_.compute(mat_);
    const double max_diag = mat_.diagonal().maxCoeff();
    if (llt_.info() != Eigen::Success || !(max_diag > 0.0))
      throw numerical_error("SpdPoint: matrix is not positive definite");
    const Matrix l = llt_.matrixL();
    const double min_pivot = l.diagonal().minCoeff();
    if (!(min_pivot * min_pivot > detail::spd_pivot_rel_tol * max_diag))
      throw numerical_error(
          "SpdPoint: matrix is not positive definite within tolerance (pivot " +
          std::to_string(min_pivot * min_pivot) + " vs diagonal scale " +
          std::to_string(max_diag) + ")");
  }

  static SpdPoint identity(Eigen::Index d) { return SpdPoint(Matrix::Identity(d, d)); }

  const Matrix& mat() const { return mat_; }
  Eigen::Index dim() const { return mat_.rows(); }
  const Eigen::LLT<Matrix>& llt() const { return llt_; }

  double log_det() const {
    const Matrix l = llt_.matrixL();
    return 2.0 * l.diagonal().array().log().sum();
  }

  /// S^-1 * rhs via the cached factorization.
  Matrix solve(const Matrix& rhs) const { return llt_.solve(rhs); }

  Matrix inverse() const { return llt_.solve(Matrix::Identity(dim(), dim())); }

  bool same_matrix(const SpdPoint& o) const {
    return dim() == o.dim() && mat_ == o.mat_;
  }

 private:
  Matrix mat_;
  Eigen::LLT<Matrix> llt_;
};

namespace detail {

inline Eigen::SelfAdjointEigenSolver<Matrix> sym_eigen(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success)
    throw numerical_error("symmetric eigendecomposition failed to converge");
  return es;
}

/// (S^(1/2), S^(-1/2)) of an SPD matrix.
inline std::pair<Matrix, Matrix> sqrt_and_invsqrt(const Matrix& sym) {
  const auto es = sym_eigen(sym);
  const Vector& ev = es.eigenvalues();
  if (!(ev.minCoeff() > 0.0))
    throw numerical_error("matrix square root: nonpositive eigenvalue");
  const Vector sq = ev.array().sqrt();
  const Matrix& q = es.eigenvectors();
  return {symmetrized(q * sq.asDiagonal() * q.transpose()),
          symmetrized(q * sq.cwiseInverse().asDiagonal() * q.transpose())};
}

/// exp(A) of a symmetric matrix via eigendecomposition.
inline Matrix sym_exp(const Matrix& sym) {
  const auto es = sym_eigen(sym);
  const Vector ex = es.eigenvalues().array().exp();
  if (!ex.allFinite()) throw numerical_error("matrix exponential overflowed");
  const Matrix& q = es.eigenvectors();
  return symmetrized(q * ex.asDiagonal() * q.transpose());
}

/// A^t of an SPD matrix (real power through positive eigenvalues).
inline Matrix sym_power(const Matrix& sym, double t) {
  const auto es = sym_eigen(sym);
  const Vector& ev = es.eigenvalues();
  if (!(ev.minCoeff() > 0.0))
    throw numerical_error("matrix power: nonpositive eigenvalue");
  const Vector pw = ev.array().pow(t);
  const Matrix& q = es.eigenvectors();
  return symmetrized(q * pw.asDiagonal() * q.transpose());
}

inline void require_same_dim(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) throw std::invalid_argument(what);
}

}  // namespace detail

/// Affine-invariant inner product g_S(xi, eta) = tr(S^-1 xi S^-1 eta).
/// Evaluated as <L^-1 xi L^-T, L^-1 eta L^-T> so it is a true Gram inner
/// product: symmetric, bilinear, and positive for xi != 0.
inline double metric(const SpdPoint& base, const TangentVec& xi, const TangentVec& eta) {
  detail::require_same_dim(base.dim(), xi.dim(), "metric: dimension mismatch");
  detail::require_same_dim(base.dim(), eta.dim(), "metric: dimension mismatch");
  const auto l = base.llt().matrixL();
  const Matrix wx = l.solve(l.solve(xi.mat()).transpose());
  if (&xi == &eta) return wx.squaredNorm();
  const Matrix we = l.solve(l.solve(eta.mat()).transpose());
  return (wx.array() * we.array()).sum();
}

inline double metric_norm(const SpdPoint& base, const TangentVec& xi) {
  return std::sqrt(metric(base, xi, xi));
}

/// Euclidean gradient G at S to the Riemannian gradient
/// (1/2) S (G + G^T) S. Accepts non-symmetric G.
inline TangentVec egrad_to_rgrad(const SpdPoint& base, const Matrix& egrad) {
  detail::require_same_dim(base.dim(), egrad.rows(), "egrad_to_rgrad: dimension mismatch");
  detail::require_same_dim(base.dim(), egrad.cols(), "egrad_to_rgrad: dimension mismatch");
  detail::require(egrad.allFinite(), "egrad_to_rgrad: gradient must be finite");
  const Matrix gs = symmetrized(egrad);
  return TangentVec(symmetrized(base.mat() * gs * base.mat()));
}

/// Exponential map S -> S^(1/2) exp(S^(-1/2) xi S^(-1/2)) S^(1/2).
/// A zero tangent returns the base point unchanged.
inline SpdPoint expmap(const SpdPoint& base, const TangentVec& xi) {
  detail::require_same_dim(base.dim(), xi.dim(), "expmap: dimension mismatch");
  if (xi.mat().isZero(0.0)) return base;
  const auto [sh, sih] = detail::sqrt_and_invsqrt(base.mat());
  const Matrix inner = symmetrized(sih * xi.mat() * sih);
  const Matrix ex = detail::sym_exp(inner);
  const Matrix result = symmetrized(sh * ex * sh);
  if (!result.allFinite()) throw numerical_error("expmap: non-finite result");
  return SpdPoint(result);  // re-validation guards against overflow-induced breakdown
}

/// Parallel transport of xi from T_from to T_to: E xi E^T with
/// E = (to * from^-1)^(1/2), computed in congruence form so the result is
/// symmetric by construction. from == to returns xi unchanged.
inline TangentVec transport(const SpdPoint& from, const SpdPoint& to, const TangentVec& xi) {
  detail::require_same_dim(from.dim(), to.dim(), "transport: dimension mismatch");
  detail::require_same_dim(from.dim(), xi.dim(), "transport: dimension mismatch");
  if (from.same_matrix(to)) return xi;
  const auto [s1h, s1ih] = detail::sqrt_and_invsqrt(from.mat());
  const Matrix mid = symmetrized(s1ih * to.mat() * s1ih);
  const Matrix w = detail::sym_power(mid, 0.5);  // = (from^-1/2 to from^-1/2)^(1/2)
  const Matrix c = symmetrized(s1ih * xi.mat() * s1ih);
  const Matrix result = symmetrized(s1h * symmetrized(w * c * w) * s1h);
  if (!result.allFinite()) throw numerical_error("transport: non-finite result");
  return TangentVec(result);
}

/// Geodesic a #_t b = a^(1/2) (a^(-1/2) b a^(-1/2))^t a^(1/2) for t in [0, 1].
/// Endpoints are returned exactly.
inline SpdPoint geodesic(const SpdPoint& a, const SpdPoint& b, double t) {
  detail::require_same_dim(a.dim(), b.dim(), "geodesic: dimension mismatch");
  if (!(t >= 0.0 && t <= 1.0))
    throw std::invalid_argument("geodesic: t must lie in [0, 1]");
  if (t == 0.0) return a;
  if (t == 1.0) return b;
  const auto [ah, aih] = detail::sqrt_and_invsqrt(a.mat());
  const Matrix mid = symmetrized(aih * b.mat() * aih);
  const Matrix pw = detail::sym_power(mid, t);
  return SpdPoint(symmetrized(ah * pw * ah));
}

/// Manifold facade over the free functions; the optimizer is written against
/// this interface so SPD, product, and mixed-product manifolds interchange.
struct SpdManifold {
  using Point = SpdPoint;
  using Tangent = TangentVec;

  static bool same_point(const Point& a, const Point& b) { return a.same_matrix(b); }

  double inner(const Point& p, const Tangent& a, const Tangent& b) const {
    return metric(p, a, b);
  }
  Point retract(const Point& p, const Tangent& xi) const { return expmap(p, xi); }
  Tangent transport(const Point& from, const Point& to, const Tangent& xi) const {
    return ggmm::transport(from, to, xi);
  }
};

}  // namespace ggmm
