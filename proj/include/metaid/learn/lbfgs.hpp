#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace metaid {

struct LbfgsOptions {
  std::size_t memory = 10;
  std::size_t max_iterations = 100;
  // Stop once the largest gradient component is at most this.
  double gradient_tolerance = 1e-4;
  std::size_t max_line_search = 25;
  // Sufficient-decrease and curvature constants of the strong Wolfe test.
  double c1 = 1e-4;
  double c2 = 0.9;
};

struct LbfgsResult {
  std::vector<double> x;
  double value = 0.0;
  double gradient_norm = 0.0;  // infinity norm
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
  std::string message;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double inf_norm(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

// Minimiser of the cubic interpolating (a, fa, da) and (b, fb, db),
// safeguarded into the inner 80% of the bracket.
inline double cubic_step(double a, double fa, double da, double b, double fb, double db) {
  const double lo = std::min(a, b), hi = std::max(a, b);
  const double margin = 0.1 * (hi - lo);
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  double t = 0.5 * (a + b);
  if (disc >= 0.0 && std::isfinite(disc)) {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double denom = db - da + 2.0 * d2;
    if (denom != 0.0) t = b - (b - a) * (db + d2 - d1) / denom;
  }
  if (!std::isfinite(t) || t < lo + margin || t > hi - margin) t = 0.5 * (a + b);
  return t;
}

}  // namespace detail

// Limited-memory BFGS with a strong-Wolfe line search. `fg(x, grad)` returns
// the objective and writes its gradient.
template <typename Objective>
LbfgsResult lbfgs_minimize(Objective&& fg, std::vector<double> x0, const LbfgsOptions& opt = {}) {
  using detail::dot;
  const std::size_t n = x0.size();
  LbfgsResult res;
  res.x = std::move(x0);
  std::vector<double> g(n), d(n), x_try(n), g_try(n);
  res.value = fg(std::span<const double>(res.x), std::span<double>(g));
  res.evaluations = 1;
  res.gradient_norm = detail::inf_norm(g);

  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> history;
  std::vector<double> alpha(opt.memory);

  double f_last = res.value;
  auto evaluate = [&](double step) {
    for (std::size_t i = 0; i < n; ++i) x_try[i] = res.x[i] + step * d[i];
    ++res.evaluations;
    const double f = fg(std::span<const double>(x_try), std::span<double>(g_try));
    f_last = std::isfinite(f) ? f : std::numeric_limits<double>::infinity();
    return f_last;
  };

  while (true) {
    if (res.gradient_norm <= opt.gradient_tolerance) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      return res;
    }
    if (res.iterations >= opt.max_iterations) {
      res.message = "iteration limit reached";
      return res;
    }

    // Two-loop recursion for d = -H g.
    for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
    for (std::size_t j = history.size(); j-- > 0;) {
      alpha[j] = history[j].rho * dot(history[j].s, d);
      for (std::size_t i = 0; i < n; ++i) d[i] -= alpha[j] * history[j].y[i];
    }
    double step0 = 1.0;
    if (!history.empty()) {
      const auto& last = history.back();
      const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
      for (auto& v : d) v *= gamma;
    } else {
      step0 = 1.0 / std::max(1.0, std::sqrt(dot(g, g)));
    }
    for (std::size_t j = 0; j < history.size(); ++j) {
      const double beta = history[j].rho * dot(history[j].y, d);
      for (std::size_t i = 0; i < n; ++i) d[i] += history[j].s[i] * (alpha[j] - beta);
    }

    double dphi0 = dot(g, d);
    if (!(dphi0 < 0.0)) {
      history.clear();
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
      dphi0 = -dot(g, g);
      step0 = 1.0 / std::max(1.0, std::sqrt(-dphi0));
    }

    // Strong Wolfe line search (bracketing then zoom).
    const double f0 = res.value;
    double a_prev = 0.0, f_prev = f0, dphi_prev = dphi0;
    double a = step0;
    bool accepted = false;
    double a_lo = 0.0, f_lo = f0, d_lo = dphi0, a_hi = 0.0, f_hi = f0, d_hi = dphi0;
    bool zoom = false;
    std::size_t evals = 0;
    for (; evals < opt.max_line_search; ++evals) {
      const double f = evaluate(a);
      const double dphi = std::isfinite(f) ? dot(g_try, d) : std::numeric_limits<double>::infinity();
      if (f > f0 + opt.c1 * a * dphi0 || (evals > 0 && f >= f_prev)) {
        a_lo = a_prev, f_lo = f_prev, d_lo = dphi_prev;
        a_hi = a, f_hi = f, d_hi = dphi;
        zoom = true;
        break;
      }
      if (std::abs(dphi) <= -opt.c2 * dphi0) {
        accepted = true;
        break;
      }
      if (dphi >= 0.0) {
        a_lo = a, f_lo = f, d_lo = dphi;
        a_hi = a_prev, f_hi = f_prev, d_hi = dphi_prev;
        zoom = true;
        break;
      }
      a_prev = a, f_prev = f, dphi_prev = dphi;
      a *= 2.0;
    }
    if (zoom) {
      for (; evals < opt.max_line_search && !accepted; ++evals) {
        a = std::isfinite(f_hi) && std::isfinite(d_hi)
                ? detail::cubic_step(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi)
                : 0.5 * (a_lo + a_hi);
        if (std::abs(a_hi - a_lo) <= 1e-16 * std::max(1.0, std::abs(a_lo))) break;
        const double f = evaluate(a);
        const double dphi = dot(g_try, d);
        if (f > f0 + opt.c1 * a * dphi0 || f >= f_lo) {
          a_hi = a, f_hi = f, d_hi = dphi;
        } else {
          if (std::abs(dphi) <= -opt.c2 * dphi0) {
            accepted = true;
            break;
          }
          if (dphi * (a_hi - a_lo) >= 0.0) a_hi = a_lo, f_hi = f_lo, d_hi = d_lo;
          a_lo = a, f_lo = f, d_lo = dphi;
        }
      }
      // Fall back to the best sufficient-decrease point found.
      if (!accepted && a_lo > 0.0 && f_lo < f0) {
        evaluate(a_lo);
        a = a_lo;
        accepted = true;
      }
    }
    if (!accepted) {
      if (!history.empty()) {
        history.clear();
        continue;
      }
      res.message = "line search failed";
      return res;
    }

    Pair p{std::vector<double>(n), std::vector<double>(n), 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      p.s[i] = x_try[i] - res.x[i];
      p.y[i] = g_try[i] - g[i];
    }
    const double sy = dot(p.s, p.y);
    res.x.swap(x_try);
    g.swap(g_try);
    res.value = f_last;
    res.gradient_norm = detail::inf_norm(g);
    ++res.iterations;
    if (sy > 1e-10 * dot(p.y, p.y)) {
      p.rho = 1.0 / sy;
      history.push_back(std::move(p));
      if (history.size() > opt.memory) history.pop_front();
    }
  }
}

}  // namespace metaid
