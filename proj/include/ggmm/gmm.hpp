#pragma once

// Gaussian mixture likelihoods in two parametrizations.
//
// Reparametrized form: each component is a single SPD matrix S_j acting on
// augmented samples y^T = [x^T 1], with component density
//   q(y; S) = 2*pi * exp(1/2) * N(y; 0, S).
// Maximizing the mixture of q densities over (S_1..S_K, eta) is equivalent to
// maximizing the usual mixture likelihood: at any maximizer the corner entry
// s of each S_j equals 1 and S_j = [[Sigma + mu mu^T, mu], [mu^T, 1]].
//
// Original form: means, covariances and logits kept separate. Used by the EM
// baseline and by the non-reparametrized manifold method.
//
// Mixing weights enter through logits eta_1..eta_{K-1} with eta_K fixed at 0,
// alpha = softmax(eta), which makes the weight block an unconstrained
// Euclidean factor.

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "ggmm/product.hpp"
#include "ggmm/spd.hpp"

namespace ggmm {

/// Immutable sample matrix, one row per observation.
class Dataset {
 public:
  explicit Dataset(Matrix samples) : samples_(std::move(samples)) {
    if (samples_.rows() < 1 || samples_.cols() < 1)
      throw std::invalid_argument("Dataset: needs at least one row and one column");
    if (!samples_.allFinite())
      throw std::invalid_argument("Dataset: samples must be finite");
  }

  Eigen::Index n() const { return samples_.rows(); }
  Eigen::Index d() const { return samples_.cols(); }
  const Matrix& samples() const { return samples_; }

 private:
  Matrix samples_;
};

/// Appends a constant 1 coordinate to every sample: y_i^T = [x_i^T 1].
inline Matrix augment(const Dataset& data) {
  Matrix y(data.n(), data.d() + 1);
  y.leftCols(data.d()) = data.samples();
  y.col(data.d()).setOnes();
  return y;
}

/// Mixture parameters in the original parametrization.
struct GmmParams {
  Vector weights;
  std::vector<Vector> means;
  std::vector<SpdPoint> covs;

  GmmParams(Vector w, std::vector<Vector> m, std::vector<SpdPoint> c)
      : weights(std::move(w)), means(std::move(m)), covs(std::move(c)) {
    const auto k = static_cast<std::size_t>(weights.size());
    if (k == 0 || means.size() != k || covs.size() != k)
      throw std::invalid_argument("GmmParams: inconsistent component count");
    if (!weights.allFinite() || weights.minCoeff() < 0.0)
      throw std::invalid_argument("GmmParams: weights must be finite and nonnegative");
    if (std::abs(weights.sum() - 1.0) > 1e-12)
      throw std::invalid_argument("GmmParams: weights must sum to 1 within 1e-12");
    const Eigen::Index dim = covs.front().dim();
    for (std::size_t j = 0; j < k; ++j) {
      if (means[j].size() != dim || covs[j].dim() != dim)
        throw std::invalid_argument("GmmParams: dimension mismatch");
      if (!means[j].allFinite())
        throw std::invalid_argument("GmmParams: means must be finite");
    }
  }

  std::size_t num_components() const { return means.size(); }
  Eigen::Index dim() const { return covs.front().dim(); }
};

// ---------------------------------------------------------------------------
// Logit <-> weight conversion.

/// softmax([eta; 0]), computed with a max shift.
inline Vector eta_to_alpha(const Vector& eta) {
  if (!eta.allFinite()) throw std::invalid_argument("eta_to_alpha: non-finite logits");
  Vector full(eta.size() + 1);
  full.head(eta.size()) = eta;
  full(eta.size()) = 0.0;
  const double m = full.maxCoeff();
  Vector ex = (full.array() - m).exp();
  return ex / ex.sum();
}

/// Inverse of eta_to_alpha on positive weight vectors: eta_j = log(a_j / a_K).
inline Vector alpha_to_eta(const Vector& alpha) {
  if (alpha.size() < 1 || !(alpha.minCoeff() > 0.0))
    throw std::invalid_argument("alpha_to_eta: weights must be strictly positive");
  const double log_last = std::log(alpha(alpha.size() - 1));
  Vector eta(alpha.size() - 1);
  for (Eigen::Index j = 0; j < eta.size(); ++j) eta(j) = std::log(alpha(j)) - log_last;
  return eta;
}

// ---------------------------------------------------------------------------
// Densities.

/// log q(y; S) = 1/2 log(2 pi) + 1/2 + log N(y; 0, S) for y of dimension D.
/// The constant is chosen so that at an embedded block with unit corner,
/// q([x; 1]; musigma_to_s(mu, Sigma)) = N(x; mu, Sigma) exactly: the
/// augmented objective then reports the same log-likelihood as the original
/// parametrization at every corner-1 point, not just the same maximizers.
inline double log_q_density(const Vector& y, const SpdPoint& s) {
  if (y.size() != s.dim()) throw std::invalid_argument("log_q_density: dimension mismatch");
  const double dd = static_cast<double>(s.dim());
  const Matrix z = s.llt().matrixL().solve(y);
  return (0.5 - 0.5 * dd) * std::log(2.0 * std::numbers::pi) + 0.5 -
         0.5 * s.log_det() - 0.5 * z.squaredNorm();
}

namespace detail {

/// Row-wise log(sum_j exp(ld_ij)); throws naming the first non-finite row.
inline Vector rowwise_logsumexp_checked(const Matrix& ld, const char* who) {
  const Vector m = ld.rowwise().maxCoeff();
  const Vector out =
      m.array() + (ld.colwise() - m).array().exp().rowwise().sum().log();
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if (!std::isfinite(out(i)))
      throw numerical_error(std::string(who) +
                            ": non-finite log-likelihood at sample index " +
                            std::to_string(i));
  return out;
}

/// n x K matrix with entries log(alpha_j) + log q(y_i; S_j).
inline Matrix reparam_log_weighted(const Matrix& y, const ProductPoint& p) {
  if (y.cols() != p.block_dim())
    throw std::invalid_argument("reparam densities: data/block dimension mismatch");
  const auto k = static_cast<Eigen::Index>(p.num_components());
  const double dd = static_cast<double>(p.block_dim());
  const Vector log_alpha = eta_to_alpha(p.logits).array().log();
  Matrix ld(y.rows(), k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const SpdPoint& s = p.blocks[static_cast<std::size_t>(j)];
    const Matrix z = s.llt().matrixL().solve(y.transpose());
    const double cj = log_alpha(j) +
                      (0.5 - 0.5 * dd) * std::log(2.0 * std::numbers::pi) + 0.5 -
                      0.5 * s.log_det();
    ld.col(j) = (-0.5 * z.colwise().squaredNorm().array() + cj).transpose();
  }
  return ld;
}

/// n x K matrix with entries log(alpha_j) + log N(x_i; mu_j, Sigma_j).
inline Matrix original_log_weighted(const Matrix& x, const std::vector<Vector>& means,
                                    const std::vector<SpdPoint>& covs,
                                    const Vector& log_alpha) {
  const auto k = static_cast<Eigen::Index>(means.size());
  if (x.cols() != covs.front().dim())
    throw std::invalid_argument("mixture densities: data dimension mismatch");
  const double dd = static_cast<double>(x.cols());
  Matrix ld(x.rows(), k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    const Matrix xc = x.rowwise() - means[uj].transpose();
    const Matrix z = covs[uj].llt().matrixL().solve(xc.transpose());
    const double cj = log_alpha(j) - 0.5 * dd * std::log(2.0 * std::numbers::pi) -
                      0.5 * covs[uj].log_det();
    ld.col(j) = (-0.5 * z.colwise().squaredNorm().array() + cj).transpose();
  }
  return ld;
}

inline Vector safe_log_weights(const Vector& w) {
  Vector lw(w.size());
  for (Eigen::Index j = 0; j < w.size(); ++j)
    lw(j) = w(j) > 0.0 ? std::log(w(j)) : -std::numeric_limits<double>::infinity();
  return lw;
}

}  // namespace detail

/// Total reparametrized log-likelihood sum_i log sum_j alpha_j q(y_i; S_j)
/// on augmented samples y (n x (d+1)).
inline double reparam_loglik(const Matrix& y, const ProductPoint& p) {
  const Matrix ld = detail::reparam_log_weighted(y, p);
  return detail::rowwise_logsumexp_checked(ld, "reparam_loglik").sum();
}

/// Posterior responsibilities w_ij under the reparametrized model (n x K).
inline Matrix reparam_responsibilities(const Matrix& y, const ProductPoint& p) {
  const Matrix ld = detail::reparam_log_weighted(y, p);
  const Vector ll = detail::rowwise_logsumexp_checked(ld, "reparam_responsibilities");
  return (ld.colwise() - ll).array().exp();
}

struct ReparamEgrad {
  std::vector<Matrix> blocks;  // d(loglik)/dS_j, symmetric
  Vector logits;               // d(loglik)/d eta_j, size K-1
  double value = 0.0;          // the log-likelihood, free byproduct
};

/// Euclidean gradient of reparam_loglik in S_j and eta.
///   dL/dS_j  = 1/2 (V_j diag(w_.j) V_j^T - (sum_i w_ij) S_j^-1),  V_j = S_j^-1 Y^T
///   dL/deta_j = sum_i (w_ij - alpha_j)
inline ReparamEgrad reparam_egrad(const Matrix& y, const ProductPoint& p) {
  const Matrix ld = detail::reparam_log_weighted(y, p);
  const Vector ll = detail::rowwise_logsumexp_checked(ld, "reparam_egrad");
  const Matrix w = (ld.colwise() - ll).array().exp();
  const Vector alpha = eta_to_alpha(p.logits);
  const auto k = static_cast<Eigen::Index>(p.num_components());
  const auto n = y.rows();

  ReparamEgrad out;
  out.value = ll.sum();
  out.blocks.reserve(static_cast<std::size_t>(k));
  for (Eigen::Index j = 0; j < k; ++j) {
    const SpdPoint& s = p.blocks[static_cast<std::size_t>(j)];
    const Matrix v = s.solve(y.transpose());  // D x n
    const double nbar = w.col(j).sum();
    const Matrix g =
        0.5 * (v * w.col(j).asDiagonal() * v.transpose() - nbar * s.inverse());
    out.blocks.push_back(symmetrized(g));
  }
  out.logits = Vector(k - 1);
  for (Eigen::Index j = 0; j + 1 < k; ++j)
    out.logits(j) = w.col(j).sum() - static_cast<double>(n) * alpha(j);
  return out;
}

/// Total log-likelihood of the original mixture parametrization.
inline double original_loglik(const Dataset& data, const GmmParams& g) {
  const Matrix ld = detail::original_log_weighted(
      data.samples(), g.means, g.covs, detail::safe_log_weights(g.weights));
  return detail::rowwise_logsumexp_checked(ld, "original_loglik").sum();
}

inline double original_loglik(const Matrix& x, const UsualPoint& p) {
  const Vector log_alpha = eta_to_alpha(p.logits).array().log();
  const Matrix ld = detail::original_log_weighted(x, p.means, p.covs, log_alpha);
  return detail::rowwise_logsumexp_checked(ld, "original_loglik").sum();
}

struct UsualEgrad {
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  Vector logits;
  double value = 0.0;
};

/// Euclidean gradient of the original total log-likelihood in mu_j, Sigma_j,
/// and eta:
///   dL/dmu_j    = Sigma_j^-1 sum_i w_ij (x_i - mu_j)
///   dL/dSigma_j = 1/2 (V_j diag(w_.j) V_j^T - (sum_i w_ij) Sigma_j^-1),
///                 V_j = Sigma_j^-1 (X - mu_j)^T
///   dL/deta_j   = sum_i (w_ij - alpha_j)
inline UsualEgrad usual_egrad(const Matrix& x, const UsualPoint& p) {
  const Vector alpha = eta_to_alpha(p.logits);
  const Matrix ld =
      detail::original_log_weighted(x, p.means, p.covs, alpha.array().log());
  const Vector ll = detail::rowwise_logsumexp_checked(ld, "usual_egrad");
  const Matrix w = (ld.colwise() - ll).array().exp();
  const auto k = static_cast<Eigen::Index>(p.num_components());
  const auto n = x.rows();

  UsualEgrad out;
  out.value = ll.sum();
  out.means.reserve(static_cast<std::size_t>(k));
  out.covs.reserve(static_cast<std::size_t>(k));
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    const Matrix xc = x.rowwise() - p.means[uj].transpose();
    const Matrix v = p.covs[uj].solve(xc.transpose());  // d x n
    const double nbar = w.col(j).sum();
    out.means.push_back(v * w.col(j));
    const Matrix g =
        0.5 * (v * w.col(j).asDiagonal() * v.transpose() - nbar * p.covs[uj].inverse());
    out.covs.push_back(symmetrized(g));
  }
  out.logits = Vector(k - 1);
  for (Eigen::Index j = 0; j + 1 < k; ++j)
    out.logits(j) = w.col(j).sum() - static_cast<double>(n) * alpha(j);
  return out;
}

// ---------------------------------------------------------------------------
// Embedding between the parametrizations.

struct MuSigmaS {
  Vector mu;
  SpdPoint sigma;
  double s;
};

/// Splits an augmented-space block S = [[U, t], [t^T, s]] into
/// mu = t / s and Sigma = U - t t^T / s (Schur complement of the corner).
inline MuSigmaS s_to_musigma(const SpdPoint& s_mat) {
  const Eigen::Index dd = s_mat.dim();
  if (dd < 2) throw std::invalid_argument("s_to_musigma: block dimension must be >= 2");
  const Matrix& m = s_mat.mat();
  const double s = m(dd - 1, dd - 1);
  const Vector t = m.block(0, dd - 1, dd - 1, 1);
  const Matrix u = m.topLeftCorner(dd - 1, dd - 1);
  // s > 0 because S is positive definite.
  const Vector mu = t / s;
  const Matrix sigma = symmetrized(u - t * t.transpose() / s);
  return MuSigmaS{mu, SpdPoint(sigma), s};
}

/// Embeds (mu, Sigma) as the augmented block with corner s = 1:
/// S = [[Sigma + mu mu^T, mu], [mu^T, 1]].
inline SpdPoint musigma_to_s(const Vector& mu, const SpdPoint& sigma) {
  if (mu.size() != sigma.dim())
    throw std::invalid_argument("musigma_to_s: dimension mismatch");
  const Eigen::Index d = mu.size();
  Matrix s(d + 1, d + 1);
  s.topLeftCorner(d, d) = symmetrized(sigma.mat() + mu * mu.transpose());
  s.block(0, d, d, 1) = mu;
  s.block(d, 0, 1, d) = mu.transpose();
  s(d, d) = 1.0;
  return SpdPoint(s);
}

inline ProductPoint embed_reparam(const GmmParams& g) {
  std::vector<SpdPoint> blocks;
  blocks.reserve(g.num_components());
  for (std::size_t j = 0; j < g.num_components(); ++j)
    blocks.push_back(musigma_to_s(g.means[j], g.covs[j]));
  return ProductPoint(std::move(blocks), alpha_to_eta(g.weights));
}

inline GmmParams extract_reparam(const ProductPoint& p) {
  std::vector<Vector> means;
  std::vector<SpdPoint> covs;
  means.reserve(p.num_components());
  covs.reserve(p.num_components());
  for (const auto& block : p.blocks) {
    MuSigmaS parts = s_to_musigma(block);
    means.push_back(std::move(parts.mu));
    covs.push_back(std::move(parts.sigma));
  }
  return GmmParams(eta_to_alpha(p.logits), std::move(means), std::move(covs));
}

inline UsualPoint embed_usual(const GmmParams& g) {
  return UsualPoint(g.means, g.covs, alpha_to_eta(g.weights));
}

inline GmmParams extract_usual(const UsualPoint& p) {
  return GmmParams(eta_to_alpha(p.logits), p.means, p.covs);
}

// ---------------------------------------------------------------------------
// Model file format.

inline nlohmann::json model_to_json(const GmmParams& g) {
  nlohmann::json j;
  j["K"] = g.num_components();
  j["d"] = g.dim();
  j["weights"] = std::vector<double>(g.weights.data(), g.weights.data() + g.weights.size());
  auto& means = j["means"] = nlohmann::json::array();
  for (const auto& mu : g.means)
    means.push_back(std::vector<double>(mu.data(), mu.data() + mu.size()));
  auto& covs = j["covariances"] = nlohmann::json::array();
  for (const auto& c : g.covs) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < c.dim(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(c.dim()));
      for (Eigen::Index col = 0; col < c.dim(); ++col)
        row[static_cast<std::size_t>(col)] = c.mat()(r, col);
      rows.push_back(row);
    }
    covs.push_back(rows);
  }
  return j;
}

inline GmmParams model_from_json(const nlohmann::json& j) {
  try {
    const auto k = j.at("K").get<std::size_t>();
    const auto d = j.at("d").get<Eigen::Index>();
    const auto wv = j.at("weights").get<std::vector<double>>();
    if (wv.size() != k) throw std::invalid_argument("model: weights size != K");
    Vector w = Eigen::Map<const Vector>(wv.data(), static_cast<Eigen::Index>(wv.size()));

    std::vector<Vector> means;
    for (const auto& row : j.at("means")) {
      const auto mv = row.get<std::vector<double>>();
      if (static_cast<Eigen::Index>(mv.size()) != d)
        throw std::invalid_argument("model: mean size != d");
      means.push_back(Eigen::Map<const Vector>(mv.data(), d));
    }
    if (means.size() != k) throw std::invalid_argument("model: means count != K");

    std::vector<SpdPoint> covs;
    for (const auto& cj : j.at("covariances")) {
      Matrix c(d, d);
      if (static_cast<Eigen::Index>(cj.size()) != d)
        throw std::invalid_argument("model: covariance row count != d");
      Eigen::Index r = 0;
      for (const auto& rowj : cj) {
        const auto rv = rowj.get<std::vector<double>>();
        if (static_cast<Eigen::Index>(rv.size()) != d)
          throw std::invalid_argument("model: covariance column count != d");
        for (Eigen::Index col = 0; col < d; ++col)
          c(r, col) = rv[static_cast<std::size_t>(col)];
        ++r;
      }
      covs.push_back(SpdPoint(c));
    }
    if (covs.size() != k) throw std::invalid_argument("model: covariances count != K");
    return GmmParams(std::move(w), std::move(means), std::move(covs));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("model: malformed JSON: ") + e.what());
  }
}

inline void save_model(const std::string& path, const GmmParams& g) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out << model_to_json(g).dump(2) << '\n';
}

inline GmmParams load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("load_model: malformed JSON: ") + e.what());
  }
  return model_from_json(j);
}

}  // namespace ggmm
