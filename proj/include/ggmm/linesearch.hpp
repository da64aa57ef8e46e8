#pragma once

// Strong Wolfe line search: a bracketing phase that grows the step by cubic
// extrapolation, and a zooming phase that shrinks a bracket by safeguarded
// cubic interpolation. phi(a) is the objective along the search ray and
// dphi(a) its true directional derivative (for manifold objectives this means
// the gradient at the retracted point paired with the transported direction).
//
// Strong Wolfe conditions, for 0 < c1 < c2 < 1:
//   sufficient decrease:  phi(a) <= phi(0) + c1 * a * phi'(0)
//   curvature:            |phi'(a)| <= c2 * |phi'(0)|

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace ggmm {

struct OptimConfig {
  double c1 = 1e-4;              // sufficient-decrease constant
  double c2 = 0.9;               // curvature constant
  int max_iters = 1500;          // outer iteration cap
  double tol_avg_ll = 1e-6;      // stop when |ALL_t - ALL_{t-1}| drops below
  double tol_grad = 1e-8;        // gradient-norm stop for already-stationary starts
  int memory = 10;               // quasi-Newton history length
  int ls_max_iters = 30;         // cap per line-search phase
  double interp_margin = 0.1;    // interpolation keeps this fraction off each bracket end
  double extrap_lo = 1.1;        // extrapolated step is at least this multiple of the last
  double extrap_hi = 10.0;       // ... and at most this multiple

  void validate() const {
    if (!(0.0 < c1 && c1 < c2 && c2 < 1.0))
      throw std::invalid_argument("OptimConfig: need 0 < c1 < c2 < 1");
    if (max_iters < 1 || ls_max_iters < 1)
      throw std::invalid_argument("OptimConfig: iteration caps must be positive");
    if (!(tol_avg_ll > 0.0) || !(tol_grad > 0.0))
      throw std::invalid_argument("OptimConfig: tolerances must be positive");
    if (memory < 1) throw std::invalid_argument("OptimConfig: memory must be positive");
    if (!(interp_margin > 0.0 && interp_margin < 0.5))
      throw std::invalid_argument("OptimConfig: interp_margin must lie in (0, 0.5)");
    if (!(1.0 < extrap_lo && extrap_lo < extrap_hi))
      throw std::invalid_argument("OptimConfig: need 1 < extrap_lo < extrap_hi");
  }
};

/// Minimizer of the Hermite cubic through (a_lo, f_lo, g_lo), (a_hi, f_hi, g_hi),
/// clamped to the central subinterval [a_lo + m*w, a_hi - m*w], w = a_hi - a_lo.
/// Falls back to the bisection midpoint when the cubic has no interior minimizer.
inline double cubic_interpolate(double a_lo, double a_hi, double f_lo, double g_lo,
                                double f_hi, double g_hi, double margin) {
  if (!(a_lo < a_hi)) throw std::invalid_argument("cubic_interpolate: need a_lo < a_hi");
  const double width = a_hi - a_lo;
  const double lo_edge = a_lo + margin * width;
  const double hi_edge = a_hi - margin * width;
  const double mid = 0.5 * (a_lo + a_hi);

  const double d1 = g_lo + g_hi - 3.0 * (f_lo - f_hi) / (a_lo - a_hi);
  const double disc = d1 * d1 - g_lo * g_hi;
  if (!(disc >= 0.0)) return mid;  // complex critical points: no interior minimizer
  const double d2 = std::sqrt(disc);
  const double cand =
      a_hi - (a_hi - a_lo) * ((g_hi + d2 - d1) / (g_hi - g_lo + 2.0 * d2));
  if (!std::isfinite(cand)) return mid;
  return std::clamp(cand, lo_edge, hi_edge);
}

namespace detail {

/// Cubic extrapolation beyond alpha using the data at 0 and alpha, clamped to
/// [lo_factor * alpha, hi_factor * alpha].
inline double extrapolate_step(double alpha, double phi0, double dphi0, double phi_a,
                               double dphi_a, double lo_factor, double hi_factor) {
  const double lo = lo_factor * alpha;
  const double hi = hi_factor * alpha;
  const double d1 = dphi0 + dphi_a - 3.0 * (phi0 - phi_a) / (0.0 - alpha);
  const double disc = d1 * d1 - dphi0 * dphi_a;
  if (!(disc >= 0.0)) return hi;
  const double d2 = std::sqrt(disc);
  const double cand = alpha - alpha * ((dphi_a + d2 - d1) / (dphi_a - dphi0 + 2.0 * d2));
  if (!std::isfinite(cand)) return hi;
  return std::clamp(cand, lo, hi);
}

}  // namespace detail

/// First trial step 2 (f_k - f_{k-1}) / phi'(0), falling back to
/// 1 / sqrt(-phi'(0)) on the first iteration (f_prev = NaN) or whenever the
/// formula is not a positive finite number. Clamped to [1e-10, 1e10].
inline double initial_step(double f_curr, double f_prev, double dphi0) {
  if (!(dphi0 < 0.0))
    throw std::invalid_argument("initial_step: directional derivative must be negative");
  constexpr double lo = 1e-10, hi = 1e10;
  double alpha = std::numeric_limits<double>::quiet_NaN();
  if (std::isfinite(f_prev)) alpha = 2.0 * (f_curr - f_prev) / dphi0;
  if (!std::isfinite(alpha) || !(alpha > 0.0)) alpha = 1.0 / std::sqrt(-dphi0);
  return std::clamp(alpha, lo, hi);
}

struct LineSearchResult {
  bool success = false;
  double alpha = 0.0;       // accepted step when success
  int evals = 0;            // phi + dphi evaluations
  // Diagnostics filled on failure: the bracket (or last trial) under study.
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  double phi_lo = 0.0;
  double phi_hi = 0.0;
  std::string phase;        // "bracketing" or "zooming" on failure
};

/// Strong Wolfe search. phi/dphi are callables of the step length; phi0 and
/// dphi0 are their values at 0 (dphi0 must be negative); alpha1 is the first
/// trial. Each phase runs at most cfg.ls_max_iters iterations. On failure the
/// result reports the phase and last bracket instead of throwing.
template <typename Phi, typename DPhi>
LineSearchResult wolfe_linesearch(Phi&& phi, DPhi&& dphi, double phi0, double dphi0,
                                  double alpha1, const OptimConfig& cfg) {
  if (!(dphi0 < 0.0))
    throw std::invalid_argument("wolfe_linesearch: not a descent direction");
  if (!(alpha1 > 0.0) || !std::isfinite(alpha1))
    throw std::invalid_argument("wolfe_linesearch: initial step must be positive");

  LineSearchResult res;
  const auto armijo = [&](double a, double fa) {
    return fa <= phi0 + cfg.c1 * a * dphi0;
  };
  const auto curvature = [&](double da) { return std::abs(da) <= cfg.c2 * std::abs(dphi0); };

  struct End {
    double a, f, d;
    bool has_d;
  };
  const auto slope_at = [&](End& e) {
    if (!e.has_d) {
      e.d = dphi(e.a);
      e.has_d = true;
      ++res.evals;
    }
    return e.d;
  };

  // Zoom phase: maintains ends lo (Wolfe-candidate, lowest phi seen) and hi
  // with either order of a; invariant phi'(lo)*(hi - lo) < 0.
  const auto zoom = [&](End lo, End hi) {
    for (int it = 0; it < cfg.ls_max_iters; ++it) {
      End* left = lo.a < hi.a ? &lo : &hi;
      End* right = lo.a < hi.a ? &hi : &lo;
      const double width = right->a - left->a;
      if (!(width > std::numeric_limits<double>::epsilon() * std::max(1.0, right->a)))
        break;  // bracket degenerated to a point
      const double aj =
          cubic_interpolate(left->a, right->a, left->f, slope_at(*left), right->f,
                            slope_at(*right), cfg.interp_margin);
      const double fj = phi(aj);
      ++res.evals;
      if (!armijo(aj, fj) || fj >= lo.f) {
        hi = End{aj, fj, 0.0, false};
        continue;
      }
      const double dj = dphi(aj);
      ++res.evals;
      if (curvature(dj)) {
        res.success = true;
        res.alpha = aj;
        return res;
      }
      if (dj * (hi.a - lo.a) >= 0.0) hi = lo;
      lo = End{aj, fj, dj, true};
    }
    res.success = false;
    res.phase = "zooming";
    res.bracket_lo = std::min(lo.a, hi.a);
    res.bracket_hi = std::max(lo.a, hi.a);
    res.phi_lo = lo.a < hi.a ? lo.f : hi.f;
    res.phi_hi = lo.a < hi.a ? hi.f : lo.f;
    return res;
  };

  End prev{0.0, phi0, dphi0, true};
  double a = alpha1;
  for (int it = 0; it < cfg.ls_max_iters; ++it) {
    const double fa = phi(a);
    ++res.evals;
    if (!armijo(a, fa) || (it > 0 && fa >= prev.f))
      return zoom(prev, End{a, fa, 0.0, false});
    const double da = dphi(a);
    ++res.evals;
    if (curvature(da)) {
      res.success = true;
      res.alpha = a;
      return res;
    }
    if (da >= 0.0) return zoom(End{a, fa, da, true}, prev);
    const double next =
        detail::extrapolate_step(a, phi0, dphi0, fa, da, cfg.extrap_lo, cfg.extrap_hi);
    prev = End{a, fa, da, true};
    a = next;
  }
  res.success = false;
  res.phase = "bracketing";
  res.bracket_lo = prev.a;
  res.bracket_hi = a;
  res.phi_lo = prev.f;
  res.phi_hi = std::numeric_limits<double>::quiet_NaN();
  return res;
}

}  // namespace ggmm
