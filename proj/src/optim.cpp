#include "dacal/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "dacal/error.hpp"

namespace dacal {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct Correction {
  std::vector<double> s;
  std::vector<double> y;
  double rho;
};

// Frozen variables sit on their bound with the gradient pushing outward.
std::vector<bool> frozen_mask(std::span<const double> x, std::span<const double> g,
                              std::span<const double> lower) {
  std::vector<bool> frozen(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) frozen[i] = x[i] <= lower[i] && g[i] > 0.0;
  return frozen;
}

// Two-loop recursion restricted to the free variables.
std::vector<double> lbfgs_direction(std::span<const double> g, const std::vector<bool>& frozen,
                                    const std::deque<Correction>& memory) {
  const std::size_t n = g.size();
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) q[i] = frozen[i] ? 0.0 : g[i];
  auto masked_dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!frozen[i]) s += a[i] * b[i];
    }
    return s;
  };
  std::vector<double> alpha(memory.size());
  for (std::size_t j = memory.size(); j-- > 0;) {
    const auto& c = memory[j];
    alpha[j] = c.rho * masked_dot(c.s, q);
    for (std::size_t i = 0; i < n; ++i) {
      if (!frozen[i]) q[i] -= alpha[j] * c.y[i];
    }
  }
  if (!memory.empty()) {
    const auto& last = memory.back();
    const double yy = masked_dot(last.y, last.y);
    const double sy = masked_dot(last.s, last.y);
    const double gamma = (yy > 0.0 && sy > 0.0) ? sy / yy : 1.0;
    for (double& v : q) v *= gamma;
  }
  for (std::size_t j = 0; j < memory.size(); ++j) {
    const auto& c = memory[j];
    const double beta = c.rho * masked_dot(c.y, q);
    for (std::size_t i = 0; i < n; ++i) {
      if (!frozen[i]) q[i] += c.s[i] * (alpha[j] - beta);
    }
  }
  for (double& v : q) v = -v;
  return q;
}

}  // namespace

BoxMinimizeResult minimize_lower_bounded(const GradientObjective& objective,
                                         std::vector<double> x0, std::span<const double> lower,
                                         const BoxMinimizeOptions& options) {
  const std::size_t n = x0.size();
  if (lower.size() != n) throw ShapeError("minimize_lower_bounded: bound size mismatch");
  for (std::size_t i = 0; i < n; ++i) x0[i] = std::max(x0[i], lower[i]);

  BoxMinimizeResult result;
  std::vector<double> x = std::move(x0);
  std::vector<double> g(n);
  double f = objective(x, g);
  result.initial_value = f;

  std::deque<Correction> memory;
  std::vector<double> x_new(n);
  std::vector<double> g_new(n);
  int iter = 0;
  bool converged = false;

  for (; iter < options.max_iterations; ++iter) {
    const auto frozen = frozen_mask(x, g, lower);
    double pg_norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!frozen[i]) pg_norm = std::max(pg_norm, std::abs(g[i]));
    }
    if (pg_norm < options.projected_gradient_tolerance) {
      converged = true;
      break;
    }

    std::vector<double> d = lbfgs_direction(g, frozen, memory);
    double slope = dot(g, d);
    if (!(slope < 0.0)) {
      memory.clear();
      for (std::size_t i = 0; i < n; ++i) d[i] = frozen[i] ? 0.0 : -g[i];
      slope = dot(g, d);
    }
    // Without curvature information, scale the first step to unit length.
    double step = 1.0;
    if (memory.empty()) {
      double dn = 0.0;
      for (double v : d) dn = std::max(dn, std::abs(v));
      step = dn > 1.0 ? 1.0 / dn : 1.0;
    }

    bool accepted = false;
    double f_new = f;
    for (int backtrack = 0; backtrack < 60; ++backtrack) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = std::max(lower[i], x[i] + step * d[i]);
      f_new = objective(x_new, g_new);
      double decrease = 0.0;
      for (std::size_t i = 0; i < n; ++i) decrease += g[i] * (x_new[i] - x[i]);
      if (std::isfinite(f_new) && f_new < f && f_new <= f + 1e-4 * decrease) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!memory.empty()) {
        memory.clear();
        continue;
      }
      // Steepest descent cannot decrease f either: stationary up to the
      // resolution of the line search.
      converged = true;
      break;
    }

    Correction c{std::vector<double>(n), std::vector<double>(n), 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      c.s[i] = x_new[i] - x[i];
      c.y[i] = g_new[i] - g[i];
    }
    const double sy = dot(c.s, c.y);
    if (sy > 1e-12 * std::sqrt(dot(c.s, c.s) * dot(c.y, c.y)) && sy > 0.0) {
      c.rho = 1.0 / sy;
      memory.push_back(std::move(c));
      if (memory.size() > static_cast<std::size_t>(options.history)) memory.pop_front();
    }

    const double change = std::abs(f - f_new);
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    if (change <= options.relative_tolerance * std::max(std::abs(f), 1e-300)) {
      ++iter;
      converged = true;
      break;
    }
  }

  result.x = std::move(x);
  result.value = f;
  result.iterations = iter;
  result.converged = converged;
  return result;
}

double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                               double tolerance) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tolerance) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  // Endpoints are candidates too: the minimum may sit on the boundary.
  const double mid = 0.5 * (a + b);
  double best = mid;
  double best_f = f(mid);
  for (double cand : {lo, hi}) {
    const double fv = f(cand);
    if (fv < best_f) {
      best = cand;
      best_f = fv;
    }
  }
  return best;
}

}  // namespace dacal
