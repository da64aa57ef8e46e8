#pragma once

// Method drivers: wire a dataset and an initial GmmParams to one of the four
// fitting paths (EM, reparametrized LBFGS/CG on the SPD product manifold,
// non-reparametrized CG on means/covariances/logits) and extract the result
// back into original mixture parameters. All optimizers minimize -ALL; the
// reported traces are average log-likelihood.

#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ggmm/em.hpp"
#include "ggmm/gmm.hpp"
#include "ggmm/optim.hpp"

namespace ggmm {

enum class Method { kEm, kLbfgs, kCg, kCgUsual };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::kEm: return "em";
    case Method::kLbfgs: return "lbfgs";
    case Method::kCg: return "cg";
    case Method::kCgUsual: return "cg-usual";
  }
  return "unknown";
}

inline Method parse_method(const std::string& name) {
  if (name == "em") return Method::kEm;
  if (name == "lbfgs") return Method::kLbfgs;
  if (name == "cg") return Method::kCg;
  if (name == "cg-usual") return Method::kCgUsual;
  throw std::invalid_argument("unknown method '" + name +
                              "' (expected em|lbfgs|cg|cg-usual)");
}

/// Cost of the reparametrized objective: f = -reparam_loglik / n with its
/// Riemannian gradient on the SPD-product manifold. Holds the augmented
/// samples so the callable stays valid independent of the caller's frames.
inline CostFunction<ProductManifold> make_reparam_cost(std::shared_ptr<const Matrix> y) {
  const double n = static_cast<double>(y->rows());
  return [y, n](const ProductPoint& p) {
    const ReparamEgrad eg = reparam_egrad(*y, p);
    std::vector<TangentVec> blocks;
    blocks.reserve(p.num_components());
    for (std::size_t j = 0; j < p.num_components(); ++j)
      blocks.push_back(egrad_to_rgrad(p.blocks[j], -eg.blocks[j] / n));
    return std::make_pair(-eg.value / n,
                          ProductTangent(std::move(blocks), -eg.logits / n));
  };
}

/// Cost of the original parametrization: Euclidean gradients for means and
/// logits, affine-invariant conversion for covariance blocks.
inline CostFunction<UsualManifold> make_usual_cost(std::shared_ptr<const Matrix> x) {
  const double n = static_cast<double>(x->rows());
  return [x, n](const UsualPoint& p) {
    const UsualEgrad eg = usual_egrad(*x, p);
    std::vector<Vector> means;
    std::vector<TangentVec> covs;
    means.reserve(p.num_components());
    covs.reserve(p.num_components());
    for (std::size_t j = 0; j < p.num_components(); ++j) {
      means.push_back(-eg.means[j] / n);
      covs.push_back(egrad_to_rgrad(p.covs[j], -eg.covs[j] / n));
    }
    return std::make_pair(-eg.value / n,
                          UsualTangent(std::move(means), std::move(covs), -eg.logits / n));
  };
}

/// Method-agnostic fit result in original parameters.
struct FitOutcome {
  GmmParams model;
  std::vector<double> avg_ll_trace;
  int iterations = 0;
  double fit_time_s = 0.0;
  Termination termination = Termination::kMaxIters;
  bool reparametrized = false;
};

inline FitOutcome fit_with_method(const Dataset& data, Method method,
                                  const GmmParams& init, const OptimConfig& ocfg,
                                  const EmConfig& ecfg) {
  switch (method) {
    case Method::kEm: {
      auto rep = em_fit(data, init, ecfg);
      return FitOutcome{std::move(rep.final_point), std::move(rep.avg_ll_trace),
                        rep.iterations, rep.wall_time_s, rep.termination, false};
    }
    case Method::kLbfgs:
    case Method::kCg: {
      auto y = std::make_shared<const Matrix>(augment(data));
      const auto cost = make_reparam_cost(y);
      ProductManifold man;
      auto rep = method == Method::kLbfgs
                     ? lbfgs_fit(man, cost, embed_reparam(init), ocfg)
                     : cg_fit(man, cost, embed_reparam(init), ocfg);
      return FitOutcome{extract_reparam(rep.final_point), std::move(rep.avg_ll_trace),
                        rep.iterations, rep.wall_time_s, rep.termination, true};
    }
    case Method::kCgUsual: {
      auto x = std::make_shared<const Matrix>(data.samples());
      const auto cost = make_usual_cost(x);
      UsualManifold man;
      auto rep = cg_fit(man, cost, embed_usual(init), ocfg);
      return FitOutcome{extract_usual(rep.final_point), std::move(rep.avg_ll_trace),
                        rep.iterations, rep.wall_time_s, rep.termination, false};
    }
  }
  throw std::invalid_argument("fit_with_method: unknown method");
}

}  // namespace ggmm
