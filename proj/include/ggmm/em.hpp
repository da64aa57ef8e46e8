#pragma once

// EM baseline with k-means++ initialization. Termination matches the
// manifold optimizers: |ALL_t - ALL_{t-1}| < tol or the iteration cap, so the
// methods compare on identical stopping rules. Responsibilities are computed
// in log space; the M-step adds cov_floor * I to every covariance.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "ggmm/gmm.hpp"
#include "ggmm/optim.hpp"
#include "ggmm/rng.hpp"

namespace ggmm {

struct EmConfig {
  int max_iters = 1500;
  double tol_avg_ll = 1e-6;
  // Added to every M-step covariance diagonal. NaN = auto: 1e-6 x the mean
  // per-coordinate variance of the data. Explicit 0 disables the floor.
  double cov_floor = std::numeric_limits<double>::quiet_NaN();

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("EmConfig: max_iters must be positive");
    if (!(tol_avg_ll > 0.0))
      throw std::invalid_argument("EmConfig: tolerance must be positive");
    if (!std::isnan(cov_floor) && cov_floor < 0.0)
      throw std::invalid_argument("EmConfig: cov_floor must be nonnegative");
  }
};

/// Scale-aware default covariance floor: 1e-6 x mean per-coordinate variance.
inline double default_cov_floor(const Dataset& data) {
  const Matrix& x = data.samples();
  const Vector mean = x.colwise().mean().transpose();
  const double var_scale =
      (x.rowwise() - mean.transpose()).squaredNorm() /
      (static_cast<double>(x.rows()) * static_cast<double>(x.cols()));
  return 1e-6 * var_scale;
}

inline double resolve_cov_floor(const EmConfig& cfg, const Dataset& data) {
  return std::isnan(cfg.cov_floor) ? default_cov_floor(data) : cfg.cov_floor;
}

/// A component whose effective sample count collapsed below 1e-10 * n.
class degenerate_component_error : public numerical_error {
 public:
  degenerate_component_error(std::size_t component, double nbar)
      : numerical_error("EM: component " + std::to_string(component) +
                        " degenerated (effective sample count " +
                        std::to_string(nbar) + ")"),
        component_(component) {}
  std::size_t component() const { return component_; }

 private:
  std::size_t component_;
};

// ---------------------------------------------------------------------------
// k-means++

/// D^2-weighted seeding: first center uniform, each further center drawn with
/// probability proportional to squared distance to the nearest chosen center.
/// Returns row indices into x.
inline std::vector<Eigen::Index> kmeanspp_seed(const Matrix& x, int k, Xoshiro256& rng) {
  const Eigen::Index n = x.rows();
  if (n < k) throw std::invalid_argument("kmeanspp_seed: need at least K samples");
  std::vector<Eigen::Index> chosen;
  chosen.reserve(static_cast<std::size_t>(k));
  chosen.push_back(static_cast<Eigen::Index>(rng.bounded(static_cast<std::uint64_t>(n))));
  Vector d2 = (x.rowwise() - x.row(chosen[0])).rowwise().squaredNorm();
  for (int j = 1; j < k; ++j) {
    const double total = d2.sum();
    Eigen::Index pick = -1;
    if (total > 0.0) {
      const double u = rng.uniform01() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (u < acc) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {  // u landed on accumulated round-off past the last positive mass
        for (Eigen::Index i = n - 1; i >= 0; --i)
          if (d2(i) > 0.0) {
            pick = i;
            break;
          }
      }
    }
    if (pick < 0) {
      // All remaining points coincide with chosen centers; fall back to any
      // index not yet selected so K distinct rows come back.
      for (Eigen::Index i = 0; i < n; ++i) {
        if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) {
          pick = i;
          break;
        }
      }
    }
    chosen.push_back(pick);
    d2 = d2.cwiseMin((x.rowwise() - x.row(pick)).rowwise().squaredNorm());
  }
  return chosen;
}

/// At most `iters` Lloyd rounds; empty clusters keep their previous center.
/// Final nearest-center assignments are written to `assign`.
inline Matrix lloyd_refine(const Matrix& x, Matrix centers, int iters,
                           std::vector<int>& assign) {
  const Eigen::Index n = x.rows();
  const Eigen::Index k = centers.rows();
  assign.assign(static_cast<std::size_t>(n), 0);
  for (int round = 0; round <= iters; ++round) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      double best_d = (x.row(i) - centers.row(0)).squaredNorm();
      for (Eigen::Index j = 1; j < k; ++j) {
        const double dj = (x.row(i) - centers.row(j)).squaredNorm();
        if (dj < best_d) {
          best_d = dj;
          best = j;
        }
      }
      if (assign[static_cast<std::size_t>(i)] != static_cast<int>(best)) changed = true;
      assign[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    if (round == iters || (round > 0 && !changed)) break;
    Matrix sums = Matrix::Zero(k, x.cols());
    Vector counts = Vector::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
      counts(assign[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (Eigen::Index j = 0; j < k; ++j)
      if (counts(j) > 0.0) centers.row(j) = sums.row(j) / counts(j);
  }
  return centers;
}

/// k-means++ seeding plus up to 10 Lloyd rounds; weights uniform, covariance
/// of each cluster's members (global covariance for clusters with fewer than
/// two members) plus cov_floor * I.
inline GmmParams kmeanspp_init(const Dataset& data, int k, Xoshiro256& rng,
                               double cov_floor = std::numeric_limits<double>::quiet_NaN()) {
  if (k < 1) throw std::invalid_argument("kmeanspp_init: K must be positive");
  if (data.n() < k) throw std::invalid_argument("kmeanspp_init: need at least K samples");
  const Matrix& x = data.samples();
  const Eigen::Index d = data.d();
  const double floor = std::isnan(cov_floor) ? default_cov_floor(data) : cov_floor;

  const auto seeds = kmeanspp_seed(x, k, rng);
  Matrix centers(k, d);
  for (int j = 0; j < k; ++j) centers.row(j) = x.row(seeds[static_cast<std::size_t>(j)]);
  std::vector<int> assign;
  centers = lloyd_refine(x, std::move(centers), 10, assign);

  const Vector global_mean = x.colwise().mean().transpose();
  const Matrix xc_global = x.rowwise() - global_mean.transpose();
  const Matrix global_cov =
      symmetrized(xc_global.transpose() * xc_global / static_cast<double>(x.rows()));

  Vector weights = Vector::Constant(k, 1.0 / static_cast<double>(k));
  std::vector<Vector> means;
  std::vector<SpdPoint> covs;
  means.reserve(static_cast<std::size_t>(k));
  covs.reserve(static_cast<std::size_t>(k));
  const Matrix eye = Matrix::Identity(d, d);
  for (int j = 0; j < k; ++j) {
    std::vector<Eigen::Index> members;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (assign[static_cast<std::size_t>(i)] == j) members.push_back(i);
    means.push_back(centers.row(j).transpose());
    Matrix cov;
    if (members.size() >= 2) {
      Matrix xc(static_cast<Eigen::Index>(members.size()), d);
      for (std::size_t r = 0; r < members.size(); ++r)
        xc.row(static_cast<Eigen::Index>(r)) = x.row(members[r]) - centers.row(j);
      cov = symmetrized(xc.transpose() * xc / static_cast<double>(members.size()));
    } else {
      cov = global_cov;
    }
    try {
      covs.push_back(SpdPoint(cov + floor * eye));
    } catch (const numerical_error&) {
      covs.push_back(SpdPoint(global_cov + floor * eye));
    }
  }
  return GmmParams(std::move(weights), std::move(means), std::move(covs));
}

// ---------------------------------------------------------------------------
// EM

/// Alternates log-space E-steps and floored M-steps until the shared
/// termination criteria fire. The trace holds ALL after each M-step (entry 0
/// is the initial ALL); one density pass per iteration.
inline FitReport<GmmParams> em_fit(const Dataset& data, const GmmParams& init,
                                   const EmConfig& cfg) {
  cfg.validate();
  if (init.dim() != data.d()) throw std::invalid_argument("em_fit: dimension mismatch");
  const auto t_start = std::chrono::steady_clock::now();
  const Matrix& x = data.samples();
  const auto n = static_cast<double>(data.n());
  const auto k = static_cast<Eigen::Index>(init.num_components());
  const double floor = resolve_cov_floor(cfg, data);
  const Matrix eye = Matrix::Identity(data.d(), data.d());

  GmmParams params = init;
  FitReport<GmmParams> report{params, {}, 0, 0.0, Termination::kMaxIters};

  for (int it = 0;; ++it) {
    // E-step at the current parameters; the row-wise normalizer is the
    // per-sample log-likelihood, so ALL(params) comes out of the same pass.
    const Matrix ld = detail::original_log_weighted(
        x, params.means, params.covs, detail::safe_log_weights(params.weights));
    const Vector ll = detail::rowwise_logsumexp_checked(ld, "em_fit");
    report.avg_ll_trace.push_back(ll.sum() / n);

    const auto& tr = report.avg_ll_trace;
    if (it >= 1 && std::abs(tr[tr.size() - 1] - tr[tr.size() - 2]) < cfg.tol_avg_ll) {
      report.termination = Termination::kTolerance;
      break;
    }
    if (it >= cfg.max_iters) {
      report.termination = Termination::kMaxIters;
      break;
    }

    const Matrix w = (ld.colwise() - ll).array().exp();
    const Vector nbar = w.colwise().sum().transpose();
    for (Eigen::Index j = 0; j < k; ++j)
      if (nbar(j) < 1e-10 * n)
        throw degenerate_component_error(static_cast<std::size_t>(j), nbar(j));

    // M-step.
    Vector weights = nbar / n;
    weights /= weights.sum();  // exact simplex membership for GmmParams
    std::vector<Vector> means;
    std::vector<SpdPoint> covs;
    means.reserve(static_cast<std::size_t>(k));
    covs.reserve(static_cast<std::size_t>(k));
    for (Eigen::Index j = 0; j < k; ++j) {
      const Vector mu = x.transpose() * w.col(j) / nbar(j);
      const Matrix xc = x.rowwise() - mu.transpose();
      const Matrix cov = symmetrized(xc.transpose() * w.col(j).asDiagonal() * xc / nbar(j));
      means.push_back(mu);
      covs.push_back(SpdPoint(cov + floor * eye));
    }
    params = GmmParams(std::move(weights), std::move(means), std::move(covs));
    report.iterations = it + 1;
  }

  report.final_point = std::move(params);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

}  // namespace ggmm
