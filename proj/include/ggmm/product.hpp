#pragma once

// Product manifolds used by the mixture objectives.
//
// ProductPoint: K SPD blocks of equal dimension plus K-1 unconstrained mixing
// logits (the K-th logit is fixed at zero). This is the search space of the
// reparametrized objective, where each component lives on one SPD block.
//
// UsualPoint: K Euclidean means, K SPD covariances, K-1 logits. This is the
// search space of the original mean/covariance parametrization; means and
// logits carry the flat metric, covariances the affine-invariant one.

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ggmm/spd.hpp"

namespace ggmm {

namespace detail {

inline void require_blocks_consistent(const std::vector<SpdPoint>& blocks,
                                      Eigen::Index logits, const char* who) {
  if (blocks.empty()) throw std::invalid_argument(std::string(who) + ": no blocks");
  for (const auto& b : blocks)
    if (b.dim() != blocks.front().dim())
      throw std::invalid_argument(std::string(who) + ": block dimension mismatch");
  if (logits + 1 != static_cast<Eigen::Index>(blocks.size()))
    throw std::invalid_argument(std::string(who) + ": need K-1 logits for K blocks");
}

}  // namespace detail

struct ProductTangent {
  std::vector<TangentVec> blocks;
  Vector logits;  // size K-1

  ProductTangent(std::vector<TangentVec> b, Vector l)
      : blocks(std::move(b)), logits(std::move(l)) {
    if (blocks.empty() || logits.size() + 1 != static_cast<Eigen::Index>(blocks.size()))
      throw std::invalid_argument("ProductTangent: need K-1 logit entries for K blocks");
    if (!logits.allFinite())
      throw std::invalid_argument("ProductTangent: logit entries must be finite");
  }

  ProductTangent& operator+=(const ProductTangent& o) {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i] += o.blocks[i];
    logits += o.logits;
    return *this;
  }
  ProductTangent& operator-=(const ProductTangent& o) {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i] -= o.blocks[i];
    logits -= o.logits;
    return *this;
  }
  ProductTangent& operator*=(double a) {
    for (auto& b : blocks) b *= a;
    logits *= a;
    return *this;
  }

  friend ProductTangent operator+(ProductTangent a, const ProductTangent& b) { return a += b; }
  friend ProductTangent operator-(ProductTangent a, const ProductTangent& b) { return a -= b; }
  friend ProductTangent operator*(ProductTangent a, double s) { return a *= s; }
  friend ProductTangent operator*(double s, ProductTangent a) { return a *= s; }
  friend ProductTangent operator-(ProductTangent a) { return a *= -1.0; }
};

struct ProductPoint {
  std::vector<SpdPoint> blocks;
  Vector logits;  // size K-1; the implicit K-th logit is 0

  ProductPoint(std::vector<SpdPoint> b, Vector l)
      : blocks(std::move(b)), logits(std::move(l)) {
    detail::require_blocks_consistent(blocks, logits.size(), "ProductPoint");
    if (!logits.allFinite())
      throw std::invalid_argument("ProductPoint: logits must be finite");
  }

  std::size_t num_components() const { return blocks.size(); }
  Eigen::Index block_dim() const { return blocks.front().dim(); }

  ProductTangent zero_tangent() const {
    std::vector<TangentVec> b;
    b.reserve(blocks.size());
    for (const auto& blk : blocks) b.push_back(TangentVec::zero(blk.dim()));
    return ProductTangent(std::move(b), Vector::Zero(logits.size()));
  }
};

struct ProductManifold {
  using Point = ProductPoint;
  using Tangent = ProductTangent;

  static bool same_point(const Point& a, const Point& b) {
    if (a.blocks.size() != b.blocks.size() || a.logits.size() != b.logits.size())
      return false;
    for (std::size_t i = 0; i < a.blocks.size(); ++i)
      if (!a.blocks[i].same_matrix(b.blocks[i])) return false;
    return a.logits == b.logits;
  }

  double inner(const Point& p, const Tangent& a, const Tangent& b) const {
    check(p, a);
    check(p, b);
    double acc = a.logits.dot(b.logits);
    for (std::size_t i = 0; i < p.blocks.size(); ++i)
      acc += metric(p.blocks[i], a.blocks[i], b.blocks[i]);
    return acc;
  }

  Point retract(const Point& p, const Tangent& xi) const {
    check(p, xi);
    std::vector<SpdPoint> blocks;
    blocks.reserve(p.blocks.size());
    for (std::size_t i = 0; i < p.blocks.size(); ++i)
      blocks.push_back(expmap(p.blocks[i], xi.blocks[i]));
    return Point(std::move(blocks), p.logits + xi.logits);
  }

  Tangent transport(const Point& from, const Point& to, const Tangent& xi) const {
    check(from, xi);
    if (from.num_components() != to.num_components() || from.block_dim() != to.block_dim())
      throw std::invalid_argument("ProductManifold: point structure mismatch");
    std::vector<TangentVec> blocks;
    blocks.reserve(from.blocks.size());
    for (std::size_t i = 0; i < from.blocks.size(); ++i)
      blocks.push_back(ggmm::transport(from.blocks[i], to.blocks[i], xi.blocks[i]));
    return Tangent(std::move(blocks), xi.logits);
  }

 private:
  static void check(const Point& p, const Tangent& t) {
    if (p.blocks.size() != t.blocks.size() || p.logits.size() != t.logits.size() ||
        (!t.blocks.empty() && t.blocks.front().dim() != p.block_dim()))
      throw std::invalid_argument("ProductManifold: tangent structure mismatch");
  }
};

// ---------------------------------------------------------------------------
// Original mean/covariance parametrization.

struct UsualTangent {
  std::vector<Vector> means;
  std::vector<TangentVec> covs;
  Vector logits;

  UsualTangent(std::vector<Vector> m, std::vector<TangentVec> c, Vector l)
      : means(std::move(m)), covs(std::move(c)), logits(std::move(l)) {
    if (means.empty() || means.size() != covs.size() ||
        logits.size() + 1 != static_cast<Eigen::Index>(means.size()))
      throw std::invalid_argument("UsualTangent: inconsistent component counts");
  }

  UsualTangent& operator+=(const UsualTangent& o) {
    for (std::size_t i = 0; i < means.size(); ++i) {
      means[i] += o.means[i];
      covs[i] += o.covs[i];
    }
    logits += o.logits;
    return *this;
  }
  UsualTangent& operator-=(const UsualTangent& o) {
    for (std::size_t i = 0; i < means.size(); ++i) {
      means[i] -= o.means[i];
      covs[i] -= o.covs[i];
    }
    logits -= o.logits;
    return *this;
  }
  UsualTangent& operator*=(double a) {
    for (std::size_t i = 0; i < means.size(); ++i) {
      means[i] *= a;
      covs[i] *= a;
    }
    logits *= a;
    return *this;
  }

  friend UsualTangent operator+(UsualTangent a, const UsualTangent& b) { return a += b; }
  friend UsualTangent operator-(UsualTangent a, const UsualTangent& b) { return a -= b; }
  friend UsualTangent operator*(UsualTangent a, double s) { return a *= s; }
  friend UsualTangent operator*(double s, UsualTangent a) { return a *= s; }
  friend UsualTangent operator-(UsualTangent a) { return a *= -1.0; }
};

struct UsualPoint {
  std::vector<Vector> means;
  std::vector<SpdPoint> covs;
  Vector logits;

  UsualPoint(std::vector<Vector> m, std::vector<SpdPoint> c, Vector l)
      : means(std::move(m)), covs(std::move(c)), logits(std::move(l)) {
    if (means.empty() || means.size() != covs.size())
      throw std::invalid_argument("UsualPoint: inconsistent component counts");
    detail::require_blocks_consistent(covs, logits.size(), "UsualPoint");
    for (const auto& mu : means)
      if (mu.size() != covs.front().dim() || !mu.allFinite())
        throw std::invalid_argument("UsualPoint: bad mean vector");
    if (!logits.allFinite())
      throw std::invalid_argument("UsualPoint: logits must be finite");
  }

  std::size_t num_components() const { return means.size(); }
  Eigen::Index dim() const { return covs.front().dim(); }

  UsualTangent zero_tangent() const {
    std::vector<Vector> m(means.size(), Vector::Zero(dim()));
    std::vector<TangentVec> c;
    c.reserve(covs.size());
    for (const auto& s : covs) c.push_back(TangentVec::zero(s.dim()));
    return UsualTangent(std::move(m), std::move(c), Vector::Zero(logits.size()));
  }
};

/// Euclidean metric on means and logits, affine-invariant metric on
/// covariances. Transport is the identity on the Euclidean parts.
struct UsualManifold {
  using Point = UsualPoint;
  using Tangent = UsualTangent;

  static bool same_point(const Point& a, const Point& b) {
    if (a.means.size() != b.means.size() || a.logits.size() != b.logits.size())
      return false;
    for (std::size_t i = 0; i < a.means.size(); ++i) {
      if (a.means[i] != b.means[i]) return false;
      if (!a.covs[i].same_matrix(b.covs[i])) return false;
    }
    return a.logits == b.logits;
  }

  double inner(const Point& p, const Tangent& a, const Tangent& b) const {
    double acc = a.logits.dot(b.logits);
    for (std::size_t i = 0; i < p.means.size(); ++i) {
      acc += a.means[i].dot(b.means[i]);
      acc += metric(p.covs[i], a.covs[i], b.covs[i]);
    }
    return acc;
  }

  Point retract(const Point& p, const Tangent& xi) const {
    std::vector<Vector> means;
    std::vector<SpdPoint> covs;
    means.reserve(p.means.size());
    covs.reserve(p.covs.size());
    for (std::size_t i = 0; i < p.means.size(); ++i) {
      means.push_back(p.means[i] + xi.means[i]);
      covs.push_back(expmap(p.covs[i], xi.covs[i]));
    }
    return Point(std::move(means), std::move(covs), p.logits + xi.logits);
  }

  Tangent transport(const Point& from, const Point& to, const Tangent& xi) const {
    std::vector<TangentVec> covs;
    covs.reserve(from.covs.size());
    for (std::size_t i = 0; i < from.covs.size(); ++i)
      covs.push_back(ggmm::transport(from.covs[i], to.covs[i], xi.covs[i]));
    return Tangent(xi.means, std::move(covs), xi.logits);
  }
};

}  // namespace ggmm
