// Price forecasting and revenue scoring: an independent univariate AR(p) per
// species fitted to deflated price-per-tonne history by least squares with the
// order chosen by AIC, iterated point forecasts to the horizon year, and
// expected revenue of a candidate as the sum of price times lognormal yield
// mean.
#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "mmsy/data.hpp"
#include "mmsy/errors.hpp"
#include "mmsy/types.hpp"

namespace mmsy::econ {

struct ArModel {
  int order = 0;
  double intercept = 0.0;
  Vector coef;                 // lag coefficients, lag-1 first
  double innovation_var = 0.0;
  bool stationary = true;      // companion eigenvalues inside the unit circle
  bool degenerate = false;     // constant series: flat forecast
  std::vector<double> tail;    // last `order` observations, most recent last
  double last = 0.0;

  double process_mean() const {
    const double s = coef.size() > 0 ? coef.sum() : 0.0;
    return intercept / (1.0 - s);
  }
};

struct PriceModel {
  YearRange fit_years;
  std::vector<ArModel> species;  // one per catalog row
};

inline constexpr int kMaxArOrder = 4;

namespace detail {

// Least squares AR(p) on the common sample (first kMaxArOrder points held
// out) so information criteria are comparable across orders.
inline ArModel fit_ar(const Vector& y, int order) {
  const int T = static_cast<int>(y.size());
  const int n = T - kMaxArOrder;
  Matrix x(n, order + 1);
  Vector target(n);
  for (int t = 0; t < n; ++t) {
    const int row = kMaxArOrder + t;
    x(t, 0) = 1.0;
    for (int j = 1; j <= order; ++j) x(t, j) = y[row - j];
    target[t] = y[row];
  }
  const Vector beta = x.colPivHouseholderQr().solve(target);
  const double rss = (target - x * beta).squaredNorm();

  ArModel m;
  m.order = order;
  m.intercept = beta[0];
  m.coef = beta.tail(order);
  m.innovation_var = rss / n;

  if (order > 0) {
    Matrix companion = Matrix::Zero(order, order);
    companion.row(0) = m.coef.transpose();
    for (int j = 1; j < order; ++j) companion(j, j - 1) = 1.0;
    const auto eigs = companion.eigenvalues();
    for (int j = 0; j < eigs.size(); ++j)
      if (std::abs(eigs[j]) >= 1.0) m.stationary = false;
  }
  for (int j = 0; j < order; ++j) m.tail.push_back(y[T - order + j]);
  m.last = y[T - 1];
  return m;
}

inline double aic(const ArModel& m, int n) {
  return n * std::log(std::max(m.innovation_var, 1e-300)) +
         2.0 * (m.order + 1);
}

}  // namespace detail

inline PriceModel fit_prices(const data::PriceTable& prices) {
  const int T = prices.years.size();
  if (T < 20)
    throw ValidationError("fit_prices: need at least 20 annual observations");
  PriceModel model;
  model.fit_years = prices.years;
  for (int i = 0; i < static_cast<int>(prices.values.rows()); ++i) {
    const Vector y = prices.values.row(i);
    const double mean = y.mean();
    const double var = (y.array() - mean).square().sum() / T;
    if (var < 1e-12 * std::max(1.0, mean * mean)) {
      ArModel m;
      m.degenerate = true;
      m.intercept = mean;
      m.coef = Vector::Zero(0);
      m.last = y[T - 1];
      model.species.push_back(std::move(m));
      continue;
    }
    ArModel best;
    double best_aic = std::numeric_limits<double>::infinity();
    const int n = T - kMaxArOrder;
    for (int p = 1; p <= kMaxArOrder; ++p) {
      ArModel m = detail::fit_ar(y, p);
      const double a = detail::aic(m, n);
      if (a < best_aic) {
        best_aic = a;
        best = std::move(m);
      }
    }
    model.species.push_back(std::move(best));
  }
  return model;
}

// Iterated point forecasts from the last fitted year (horizon zero = last
// observation) through `to_year`. Non-stationary or degenerate models hold
// the last value flat.
inline data::PriceTable forecast(const PriceModel& model, int to_year = 2050) {
  if (to_year < model.fit_years.last)
    throw ValidationError("forecast: horizon precedes the fitted data");
  data::PriceTable out;
  out.years = {model.fit_years.last, to_year};
  const int H = out.years.size();
  out.values = Matrix::Zero(static_cast<int>(model.species.size()), H);
  for (size_t i = 0; i < model.species.size(); ++i) {
    const auto& m = model.species[i];
    out.values(static_cast<int>(i), 0) = m.degenerate ? m.intercept : m.last;
    if (m.degenerate || !m.stationary || m.order == 0) {
      const double flat = m.degenerate ? m.intercept : m.last;
      for (int h = 1; h < H; ++h) out.values(static_cast<int>(i), h) = flat;
      continue;
    }
    std::vector<double> window = m.tail;  // most recent last
    for (int h = 1; h < H; ++h) {
      double next = m.intercept;
      for (int j = 1; j <= m.order; ++j)
        next += m.coef[j - 1] * window[window.size() - static_cast<size_t>(j)];
      out.values(static_cast<int>(i), h) = next;
      window.erase(window.begin());
      window.push_back(next);
    }
  }
  return out;
}

// Expected revenue in billions: sum over species of price times the lognormal
// mean exp(m + s^2/2) of 2050 yield, with (m, s^2) in log tonnes.
inline double revenue(const Vector& yield_mean, const Vector& yield_var,
                      const Vector& price_2050) {
  const int n = static_cast<int>(yield_mean.size());
  if (yield_var.size() != n || price_2050.size() != n)
    throw ValidationError("revenue: shape mismatch");
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    total += price_2050[i] * std::exp(yield_mean[i] + 0.5 * yield_var[i]);
  return total / 1e9;
}

// Mixture form over posterior draws (rows): the expectation of a mixture of
// lognormals is the average of the component means.
inline double revenue(const Matrix& yield_mean, const Matrix& yield_var,
                      const Vector& price_2050) {
  const int D = static_cast<int>(yield_mean.rows());
  if (D == 0) throw ValidationError("revenue: no posterior draws");
  double total = 0.0;
  for (int d = 0; d < D; ++d)
    total += revenue(Vector(yield_mean.row(d)), Vector(yield_var.row(d)),
                     price_2050);
  return total / D;
}

}  // namespace mmsy::econ
