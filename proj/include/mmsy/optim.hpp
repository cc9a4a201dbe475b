// Derivative-free minimization: standard Nelder-Mead simplex with reflection,
// expansion, contraction, and shrink. Non-finite objective values are treated
// as +inf so the simplex walks out of invalid regions.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "mmsy/types.hpp"

namespace mmsy {

struct OptimResult {
  Vector x;
  double value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  bool converged = false;
};

template <typename F>
OptimResult nelder_mead(F&& objective, const Vector& x0, double step,
                        int max_evaluations, double ftol = 1e-8) {
  const int n = static_cast<int>(x0.size());
  OptimResult result;
  auto eval = [&](const Vector& x) {
    ++result.evaluations;
    const double v = objective(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<Vector> xs(static_cast<size_t>(n + 1), x0);
  std::vector<double> fs(static_cast<size_t>(n + 1));
  for (int i = 0; i < n; ++i) xs[static_cast<size_t>(i + 1)][i] += step;
  for (int i = 0; i <= n; ++i) fs[static_cast<size_t>(i)] = eval(xs[static_cast<size_t>(i)]);

  std::vector<int> order(static_cast<size_t>(n + 1));
  while (result.evaluations < max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return fs[static_cast<size_t>(a)] < fs[static_cast<size_t>(b)];
    });
    const int best = order.front(), worst = order.back();
    const int second_worst = order[static_cast<size_t>(n - 1)];

    const double spread = std::abs(fs[static_cast<size_t>(worst)] - fs[static_cast<size_t>(best)]);
    const double scale = 1.0 + std::abs(fs[static_cast<size_t>(best)]);
    if (spread <= ftol * scale) {
      result.converged = true;
      break;
    }

    Vector centroid = Vector::Zero(n);
    for (int i = 0; i <= n; ++i)
      if (i != worst) centroid += xs[static_cast<size_t>(i)];
    centroid /= static_cast<double>(n);

    const Vector reflected = centroid + (centroid - xs[static_cast<size_t>(worst)]);
    const double f_r = eval(reflected);
    if (f_r < fs[static_cast<size_t>(best)]) {
      const Vector expanded = centroid + 2.0 * (centroid - xs[static_cast<size_t>(worst)]);
      const double f_e = eval(expanded);
      if (f_e < f_r) {
        xs[static_cast<size_t>(worst)] = expanded;
        fs[static_cast<size_t>(worst)] = f_e;
      } else {
        xs[static_cast<size_t>(worst)] = reflected;
        fs[static_cast<size_t>(worst)] = f_r;
      }
    } else if (f_r < fs[static_cast<size_t>(second_worst)]) {
      xs[static_cast<size_t>(worst)] = reflected;
      fs[static_cast<size_t>(worst)] = f_r;
    } else {
      const Vector contracted = centroid + 0.5 * (xs[static_cast<size_t>(worst)] - centroid);
      const double f_c = eval(contracted);
      if (f_c < fs[static_cast<size_t>(worst)]) {
        xs[static_cast<size_t>(worst)] = contracted;
        fs[static_cast<size_t>(worst)] = f_c;
      } else {
        for (int i = 0; i <= n; ++i) {
          if (i == best) continue;
          xs[static_cast<size_t>(i)] =
              xs[static_cast<size_t>(best)] +
              0.5 * (xs[static_cast<size_t>(i)] - xs[static_cast<size_t>(best)]);
          fs[static_cast<size_t>(i)] = eval(xs[static_cast<size_t>(i)]);
        }
      }
    }
  }

  int best = 0;
  for (int i = 1; i <= n; ++i)
    if (fs[static_cast<size_t>(i)] < fs[static_cast<size_t>(best)]) best = i;
  result.x = xs[static_cast<size_t>(best)];
  result.value = fs[static_cast<size_t>(best)];
  return result;
}

}  // namespace mmsy
