#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

// Bounded Nelder-Mead simplex minimizer with a deterministic grid-seeded
// multistart. Candidate points are clamped into the box, which is adequate
// for the smooth low-dimensional objectives used here.

namespace nopa {

struct SimplexResult {
  std::vector<double> best;
  double best_value = 0.0;
  int iterations = 0;
  bool tolerance_reached = false;
};

using ObjectiveFn = std::function<double(const std::vector<double>&)>;

inline SimplexResult nelder_mead(const ObjectiveFn& f, std::vector<double> start,
                                 const std::vector<double>& lower,
                                 const std::vector<double>& upper, int max_iterations = 2000,
                                 double f_tolerance = 1e-12) {
  const std::size_t n = start.size();
  if (lower.size() != n || upper.size() != n) {
    throw std::invalid_argument("nelder_mead: bound dimensions disagree");
  }
  const auto clamp = [&](std::vector<double>& x) {
    for (std::size_t i = 0; i < n; ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
  };
  clamp(start);

  std::vector<std::vector<double>> x(n + 1, start);
  for (std::size_t i = 0; i < n; ++i) {
    const double span = upper[i] - lower[i];
    double step = (span > 0.0) ? 0.1 * span : 0.05;
    if (start[i] + step > upper[i]) step = -step;
    x[i + 1][i] += step;
    clamp(x[i + 1]);
  }
  std::vector<double> fx(n + 1);
  for (std::size_t j = 0; j <= n; ++j) fx[j] = f(x[j]);

  SimplexResult result;
  int iter = 0;
  for (; iter < max_iterations; ++iter) {
    std::vector<std::size_t> order(n + 1);
    for (std::size_t j = 0; j <= n; ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return fx[a] < fx[b];
    });
    {
      std::vector<std::vector<double>> xs(n + 1);
      std::vector<double> fs(n + 1);
      for (std::size_t j = 0; j <= n; ++j) {
        xs[j] = x[order[j]];
        fs[j] = fx[order[j]];
      }
      x.swap(xs);
      fx.swap(fs);
    }
    if (std::abs(fx[n] - fx[0]) <= f_tolerance * (1.0 + std::abs(fx[0]))) {
      result.tolerance_reached = true;
      break;
    }

    std::vector<double> centroid(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i) centroid[i] += x[j][i] / static_cast<double>(n);
    }
    const auto blend = [&](double scale) {
      std::vector<double> p(n);
      for (std::size_t i = 0; i < n; ++i) p[i] = centroid[i] + scale * (centroid[i] - x[n][i]);
      clamp(p);
      return p;
    };

    std::vector<double> xr = blend(1.0);
    const double fr = f(xr);
    if (fr < fx[0]) {
      std::vector<double> xe = blend(2.0);
      const double fe = f(xe);
      if (fe < fr) {
        x[n] = std::move(xe);
        fx[n] = fe;
      } else {
        x[n] = std::move(xr);
        fx[n] = fr;
      }
    } else if (fr < fx[n - 1]) {
      x[n] = std::move(xr);
      fx[n] = fr;
    } else {
      std::vector<double> xc = blend(fr < fx[n] ? 0.5 : -0.5);
      const double fc = f(xc);
      if (fc < std::min(fr, fx[n])) {
        x[n] = std::move(xc);
        fx[n] = fc;
      } else {
        for (std::size_t j = 1; j <= n; ++j) {
          for (std::size_t i = 0; i < n; ++i) x[j][i] = x[0][i] + 0.5 * (x[j][i] - x[0][i]);
          fx[j] = f(x[j]);
        }
      }
    }
  }

  std::size_t ibest = 0;
  for (std::size_t j = 1; j <= n; ++j) {
    if (fx[j] < fx[ibest]) ibest = j;
  }
  result.best = x[ibest];
  result.best_value = fx[ibest];
  result.iterations = iter;
  return result;
}

// Multistart over a fixed 3^n grid of interior points (capped for sanity);
// fully deterministic.
inline SimplexResult nelder_mead_multistart(const ObjectiveFn& f,
                                            const std::vector<double>& lower,
                                            const std::vector<double>& upper,
                                            int max_iterations = 2000,
                                            double f_tolerance = 1e-12) {
  const std::size_t n = lower.size();
  if (n == 0 || n > 6) {
    throw std::invalid_argument("nelder_mead_multistart: unsupported dimension");
  }
  std::size_t n_starts = 1;
  for (std::size_t i = 0; i < n; ++i) n_starts *= 3;

  SimplexResult best;
  bool first = true;
  for (std::size_t s = 0; s < n_starts; ++s) {
    std::vector<double> start(n);
    std::size_t code = s;
    for (std::size_t i = 0; i < n; ++i) {
      const double frac = 0.25 + 0.25 * static_cast<double>(code % 3);
      start[i] = lower[i] + frac * (upper[i] - lower[i]);
      code /= 3;
    }
    SimplexResult r = nelder_mead(f, start, lower, upper, max_iterations, f_tolerance);
    if (first || r.best_value < best.best_value) {
      best = std::move(r);
      first = false;
    }
  }
  return best;
}

}  // namespace nopa
