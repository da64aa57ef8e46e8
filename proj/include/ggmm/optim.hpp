#pragma once

// Riemannian quasi-Newton and conjugate-gradient loops over any manifold
// exposing {Point, Tangent, inner, retract, transport}. Both methods minimize
// f = -(total log-likelihood)/n and report the maximization trace.
//
// The limited-memory inverse-Hessian is applied by a recursion over stored
// (S, Y) pairs, each kept in the tangent space of the iterate where it was
// created; the recursion transports the query vector between consecutive
// stored bases on the way down and the result back on the way up. Since
// transport is a metric isometry this is equivalent to transporting all pairs
// to the current tangent space and running the textbook two-loop recursion.

#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "ggmm/errors.hpp"
#include "ggmm/linesearch.hpp"

namespace ggmm {

enum class Termination { kTolerance, kMaxIters, kLineSearchFailure };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::kTolerance: return "tolerance";
    case Termination::kMaxIters: return "max_iters";
    case Termination::kLineSearchFailure: return "line_search_failure";
  }
  return "unknown";
}

template <typename PointT>
struct FitReport {
  PointT final_point;
  std::vector<double> avg_ll_trace;  // average log-likelihood per iteration, entry 0 = init
  int iterations = 0;
  double wall_time_s = 0.0;
  Termination termination = Termination::kMaxIters;
};

/// Objective callable: returns (f, Riemannian gradient of f) at a point.
template <typename M>
using CostFunction = std::function<std::pair<double, typename M::Tangent>(
    const typename M::Point&)>;

/// One accepted line-search step, for audit hooks.
template <typename M>
struct StepRecord {
  const typename M::Point& x;        // iterate before the step
  const typename M::Tangent& dir;    // search direction at x
  double alpha;                      // accepted step length
  double f0, slope0;                 // phi(0), phi'(0)
  double f1, slope1;                 // phi(alpha), phi'(alpha)
  int ls_evals;
};

template <typename M>
using StepObserver = std::function<void(const StepRecord<M>&)>;

namespace detail {

// Pairs with g(S,Y) <= rel_tol * |S| |Y| would break positive definiteness of
// the quasi-Newton approximation; they are skipped.
constexpr double curvature_rel_tol = 1e-10;

}  // namespace detail

template <typename M>
class LbfgsHistory {
 public:
  struct Record {
    typename M::Tangent s, y;   // step and gradient difference, in T_base
    typename M::Point base;     // iterate where the pair lives
    double sy;                  // g(S, Y)
    double ss_over_sy;          // g(S, S) / g(S, Y)
  };

  LbfgsHistory(int memory, double h_diag0) : memory_(memory), h_diag_(h_diag0) {
    if (memory_ < 1) throw std::invalid_argument("LbfgsHistory: memory must be positive");
  }

  /// Stores the pair unless the curvature condition fails; updates the
  /// diagonal scale h_diag = g(S,Y)/g(Y,Y) on success.
  bool push(const M& man, typename M::Point base, typename M::Tangent s,
            typename M::Tangent y) {
    const double sy = man.inner(base, s, y);
    const double ss = man.inner(base, s, s);
    const double yy = man.inner(base, y, y);
    if (!(sy > detail::curvature_rel_tol * std::sqrt(ss) * std::sqrt(yy)) || !(yy > 0.0))
      return false;
    h_diag_ = sy / yy;
    recs_.push_back(Record{std::move(s), std::move(y), std::move(base), sy, ss / sy});
    if (static_cast<int>(recs_.size()) > memory_) recs_.pop_front();
    return true;
  }

  void clear() { recs_.clear(); }
  bool empty() const { return recs_.empty(); }
  std::size_t size() const { return recs_.size(); }
  double h_diag() const { return h_diag_; }
  const std::deque<Record>& records() const { return recs_; }

 private:
  int memory_;
  double h_diag_;
  std::deque<Record> recs_;
};

namespace detail {

template <typename M>
typename M::Tangent hess_mul_recurse(const M& man, const typename M::Tangent& p,
                                     const LbfgsHistory<M>& hist, int idx) {
  if (idx < 0) return p * hist.h_diag();  // isotropic base case commutes with transport
  const auto& rec = hist.records()[static_cast<std::size_t>(idx)];
  const double a = man.inner(rec.base, rec.s, p) / rec.sy;
  const typename M::Tangent p1 = p - rec.y * a;
  typename M::Tangent q = [&]() -> typename M::Tangent {
    if (idx == 0) return p1 * hist.h_diag();
    const auto& prev_base = hist.records()[static_cast<std::size_t>(idx - 1)].base;
    const auto down = man.transport(rec.base, prev_base, p1);
    const auto q_prev = hess_mul_recurse(man, down, hist, idx - 1);
    return man.transport(prev_base, rec.base, q_prev);
  }();
  return q - rec.s * (man.inner(rec.base, rec.y, q) / rec.sy) + rec.s * a;
}

}  // namespace detail

/// Applies the inverse-Hessian approximation built from the first `depth`
/// stored pairs, oldest first (all of them when depth < 0), to a tangent
/// vector at `at`.
/// Empty history returns h_diag * p. Each stored pair satisfies the secant
/// equation of its own step by construction.
template <typename M>
typename M::Tangent hess_mul(const M& man, const typename M::Point& at,
                             const typename M::Tangent& p, const LbfgsHistory<M>& hist,
                             int depth = -1) {
  const int stored = static_cast<int>(hist.size());
  const int top = (depth < 0 || depth > stored) ? stored - 1 : depth - 1;
  if (top < 0) return p * hist.h_diag();
  const auto& head = hist.records()[static_cast<std::size_t>(top)].base;
  if (M::same_point(head, at))
    return detail::hess_mul_recurse(man, p, hist, top);
  // Head pair predates `at` (the latest pair was curvature-skipped): descend
  // into the stored chain and come back.
  const auto down = man.transport(at, head, p);
  const auto q = detail::hess_mul_recurse(man, down, hist, top);
  return man.transport(head, at, q);
}

namespace detail {

/// Memoized evaluation along the ray alpha -> retract(x, alpha * dir).
/// Each distinct alpha costs one objective+gradient evaluation and one
/// transport of the direction; repeated queries hit the cache. The accepted
/// entry hands the optimizer its next iterate, value, and gradient for free.
template <typename M>
class LineObjective {
 public:
  struct Entry {
    double a;
    typename M::Point point;
    double f;
    typename M::Tangent grad;  // gradient at point
    typename M::Tangent tdir;  // direction transported to point
    double slope;              // g(grad, tdir)
  };

  LineObjective(const M& man, const CostFunction<M>& cost, const typename M::Point& x,
                const typename M::Tangent& dir)
      : man_(man), cost_(cost), x_(x), dir_(dir) {}

  double phi(double a) { return at(a).f; }
  double dphi(double a) { return at(a).slope; }

  const Entry& at(double a) {
    for (const auto& e : cache_)
      if (e.a == a) return e;
    // A large extrapolated trial step can overflow the retraction or the
    // objective; report phi = +inf so the search shrinks the bracket instead
    // of crashing. A poisoned entry can never satisfy the sufficient-decrease
    // condition, so it can never be the accepted step.
    try {
      auto point = man_.retract(x_, dir_ * a);
      auto [f, grad] = cost_(point);
      if (!std::isfinite(f)) f = std::numeric_limits<double>::infinity();
      auto tdir = man_.transport(x_, point, dir_);
      const double slope = man_.inner(point, grad, tdir);
      cache_.push_back(
          Entry{a, std::move(point), f, std::move(grad), std::move(tdir), slope});
    } catch (const numerical_error&) {
      cache_.push_back(Entry{a, x_, std::numeric_limits<double>::infinity(),
                             dir_ * 0.0, dir_ * 0.0,
                             std::numeric_limits<double>::infinity()});
    }
    return cache_.back();
  }

 private:
  const M& man_;
  const CostFunction<M>& cost_;
  const typename M::Point& x_;
  const typename M::Tangent& dir_;
  std::deque<Entry> cache_;  // deque: entries keep their addresses
};

struct LoopState {
  int iterations = 0;
  Termination termination = Termination::kMaxIters;
};

}  // namespace detail

/// Limited-memory Riemannian BFGS. `cost` must return the minimization
/// objective (-ALL) and its Riemannian gradient; the report's trace holds
/// -f per iteration (the average log-likelihood).
template <typename M>
FitReport<typename M::Point> lbfgs_fit(const M& man, const CostFunction<M>& cost,
                                       typename M::Point x0, const OptimConfig& cfg,
                                       std::type_identity_t<StepObserver<M>> observer = {}) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();

  typename M::Point x = std::move(x0);
  auto [f, g] = cost(x);
  double gnorm2 = man.inner(x, g, g);
  LbfgsHistory<M> hist(cfg.memory, gnorm2 > 0.0 ? 1.0 / std::sqrt(gnorm2) : 1.0);

  FitReport<typename M::Point> report{x, {-f}, 0, 0.0, Termination::kMaxIters};
  double f_prev_iter = std::numeric_limits<double>::quiet_NaN();

  for (int it = 1; it <= cfg.max_iters; ++it) {
    if (std::sqrt(gnorm2) <= cfg.tol_grad) {
      report.termination = Termination::kTolerance;
      break;
    }
    typename M::Tangent dir = hess_mul(man, x, -g, hist);
    double slope = man.inner(x, dir, g);
    if (!(slope < 0.0)) {
      // Theory precludes this for curvature-filtered history; rebuilt from
      // steepest descent if round-off ever produces it.
      hist.clear();
      dir = -g;
      slope = -gnorm2;
    }

    const double a1 = initial_step(f, f_prev_iter, slope);
    detail::LineObjective<M> line(man, cost, x, dir);
    const auto ls = wolfe_linesearch([&](double a) { return line.phi(a); },
                                     [&](double a) { return line.dphi(a); }, f, slope,
                                     a1, cfg);
    if (!ls.success) {
      report.termination = Termination::kLineSearchFailure;
      break;
    }
    const auto& acc = line.at(ls.alpha);
    if (observer)
      observer(StepRecord<M>{x, dir, ls.alpha, f, slope, acc.f, acc.slope, ls.evals});

    typename M::Tangent s = acc.tdir * ls.alpha;
    typename M::Tangent y = acc.grad - man.transport(x, acc.point, g);
    hist.push(man, acc.point, std::move(s), std::move(y));

    f_prev_iter = f;
    x = acc.point;
    f = acc.f;
    g = acc.grad;
    gnorm2 = man.inner(x, g, g);
    report.avg_ll_trace.push_back(-f);
    report.iterations = it;
    const auto& tr = report.avg_ll_trace;
    if (std::abs(tr[tr.size() - 1] - tr[tr.size() - 2]) < cfg.tol_avg_ll) {
      report.termination = Termination::kTolerance;
      break;
    }
  }

  report.final_point = std::move(x);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

/// Riemannian conjugate gradient with Polak-Ribiere+ momentum on transported
/// gradients and automatic steepest-descent restart on non-descent directions.
template <typename M>
FitReport<typename M::Point> cg_fit(const M& man, const CostFunction<M>& cost,
                                    typename M::Point x0, const OptimConfig& cfg,
                                    std::type_identity_t<StepObserver<M>> observer = {}) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();

  typename M::Point x = std::move(x0);
  auto [f, g] = cost(x);
  double gnorm2 = man.inner(x, g, g);
  typename M::Tangent dir = -g;

  FitReport<typename M::Point> report{x, {-f}, 0, 0.0, Termination::kMaxIters};
  double f_prev_iter = std::numeric_limits<double>::quiet_NaN();

  for (int it = 1; it <= cfg.max_iters; ++it) {
    if (std::sqrt(gnorm2) <= cfg.tol_grad) {
      report.termination = Termination::kTolerance;
      break;
    }
    double slope = man.inner(x, dir, g);
    if (!(slope < 0.0)) {  // restart on non-descent
      dir = -g;
      slope = -gnorm2;
    }

    const double a1 = initial_step(f, f_prev_iter, slope);
    detail::LineObjective<M> line(man, cost, x, dir);
    const auto ls = wolfe_linesearch([&](double a) { return line.phi(a); },
                                     [&](double a) { return line.dphi(a); }, f, slope,
                                     a1, cfg);
    if (!ls.success) {
      report.termination = Termination::kLineSearchFailure;
      break;
    }
    const auto& acc = line.at(ls.alpha);
    if (observer)
      observer(StepRecord<M>{x, dir, ls.alpha, f, slope, acc.f, acc.slope, ls.evals});

    // Polak-Ribiere+: beta = max(0, g(g+, g+ - T g) / g(g, g)).
    const typename M::Tangent tg = man.transport(x, acc.point, g);
    const double beta =
        std::max(0.0, man.inner(acc.point, acc.grad, acc.grad - tg) / gnorm2);
    dir = -acc.grad + acc.tdir * beta;

    f_prev_iter = f;
    x = acc.point;
    f = acc.f;
    g = acc.grad;
    gnorm2 = man.inner(x, g, g);
    report.avg_ll_trace.push_back(-f);
    report.iterations = it;
    const auto& tr = report.avg_ll_trace;
    if (std::abs(tr[tr.size() - 1] - tr[tr.size() - 2]) < cfg.tol_avg_ll) {
      report.termination = Termination::kTolerance;
      break;
    }
  }

  report.final_point = std::move(x);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

}  // namespace ggmm
