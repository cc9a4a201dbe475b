// Small statistical helpers shared across modules: normal distribution,
// Gaussian-mixture quantiles by bisection, and split-Rhat chain diagnostics.
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "mmsy/errors.hpp"
#include "mmsy/types.hpp"

namespace mmsy {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

// CDF of an equal-weight mixture of Normal(mean[d], sd[d]^2). A zero sd
// component degenerates to a step function.
inline double gaussian_mixture_cdf(std::span<const double> means,
                                   std::span<const double> sds, double x) {
  double acc = 0.0;
  for (size_t d = 0; d < means.size(); ++d) {
    if (sds[d] > 0.0)
      acc += normal_cdf((x - means[d]) / sds[d]);
    else
      acc += (x >= means[d]) ? 1.0 : 0.0;
  }
  return acc / static_cast<double>(means.size());
}

// p-quantile of the equal-weight Gaussian mixture, solved by bisection on the
// mixture CDF. Deterministic: fixed iteration count, no tolerance tuning.
inline double gaussian_mixture_quantile(std::span<const double> means,
                                        std::span<const double> sds, double p) {
  if (means.empty() || means.size() != sds.size())
    throw ValidationError("mixture quantile: empty or mismatched inputs");
  if (!(p > 0.0 && p < 1.0))
    throw ValidationError("mixture quantile: p must be in (0,1)");
  double lo = means[0], hi = means[0];
  for (size_t d = 0; d < means.size(); ++d) {
    lo = std::min(lo, means[d] - 12.0 * sds[d] - 1.0);
    hi = std::max(hi, means[d] + 12.0 * sds[d] + 1.0);
  }
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (gaussian_mixture_cdf(means, sds, mid) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Split-Rhat (Gelman et al.): each chain's kept draws are split in half and
// the between/within variance ratio is computed over the 2*C sequences.
inline double split_rhat(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> seqs;
  for (const auto& c : chains) {
    size_t half = c.size() / 2;
    if (half < 2) throw ValidationError("split_rhat: chains too short");
    seqs.emplace_back(c.begin(), c.begin() + static_cast<long>(half));
    seqs.emplace_back(c.begin() + static_cast<long>(half),
                      c.begin() + static_cast<long>(2 * half));
  }
  const size_t m = seqs.size();
  const size_t n = seqs[0].size();
  std::vector<double> means(m), vars(m);
  double grand = 0.0;
  for (size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (double v : seqs[j]) s += v;
    means[j] = s / static_cast<double>(n);
    grand += means[j];
    double ss = 0.0;
    for (double v : seqs[j]) ss += (v - means[j]) * (v - means[j]);
    vars[j] = ss / static_cast<double>(n - 1);
  }
  grand /= static_cast<double>(m);
  double b = 0.0;  // between-sequence variance * n
  for (size_t j = 0; j < m; ++j) b += (means[j] - grand) * (means[j] - grand);
  b *= static_cast<double>(n) / static_cast<double>(m - 1);
  double w = 0.0;  // within-sequence variance
  for (size_t j = 0; j < m; ++j) w += vars[j];
  w /= static_cast<double>(m);
  if (w <= 0.0) return 1.0;  // constant sequences (e.g. prior-only corner)
  double var_plus =
      (static_cast<double>(n - 1) / static_cast<double>(n)) * w + b / static_cast<double>(n);
  return std::sqrt(var_plus / w);
}

// Regularized upper incomplete gamma Q(a,x), by series for x < a+1 and by
// Lentz continued fraction otherwise.
inline double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw ValidationError("gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) {
    // P(a,x) series, Q = 1 - P.
    double ap = a, sum = 1.0 / a, del = sum;
    for (int n = 0; n < 500; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return 1.0 - sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

// Survival function of the chi-square distribution with `dof` degrees of
// freedom: Pr(X > x).
inline double chi_square_sf(double x, int dof) {
  if (dof <= 0) throw ValidationError("chi_square_sf: dof must be positive");
  if (x <= 0.0) return 1.0;
  return gamma_q(0.5 * dof, 0.5 * x);
}

inline double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

inline double variance_of(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return ss / static_cast<double>(xs.size() - 1);
}

}  // namespace mmsy
