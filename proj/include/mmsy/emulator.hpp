// Gaussian-process surrogates of the long-term responses over fishing space:
// universal kriging with a truncated-power cubic-spline mean on each active
// dimension and a product Matern-5/2 correlation with one length-scale per
// active dimension (inactive dimensions carry an infinite length-scale, i.e.
// correlation exactly 1). Hyperparameters are fit by profiled maximum
// likelihood: the mean coefficients and signal variance are solved in closed
// form given the correlation matrix, and Nelder-Mead with multistart searches
// over log length-scales and log relative nugget.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "mmsy/csv.hpp"
#include "mmsy/errors.hpp"
#include "mmsy/optim.hpp"
#include "mmsy/types.hpp"

namespace mmsy::emulator {

// Matern-5/2 correlation at scaled distance u >= 0.
inline double matern52(double u) {
  return (1.0 + std::sqrt(5.0) * u + (5.0 / 3.0) * u * u) *
         std::exp(-std::sqrt(5.0) * u);
}

// Active fishing dimensions (0-based) of each response surface, fixed per
// output kind and species.
inline std::vector<int> term_list(OutputKind kind, int species) {
  static const std::vector<std::vector<int>> yield = {
      {1, 3, 5},    {2, 3, 5},    {3, 5, 8, 9},       {3, 4},
      {3, 4, 5},    {1, 3, 6, 7}, {3, 4, 7, 8},       {3, 5, 8},
      {3, 5, 8, 9}};
  static const std::vector<std::vector<int>> ssb = {
      {1, 2, 3, 4, 5, 8, 9},    {1, 2, 3, 8, 9},
      {1, 2, 3, 4, 5, 6, 8, 9}, {1, 2, 3, 4, 5, 7, 8, 9},
      {1, 2, 3, 4, 5, 6, 7, 8, 9},
      {1, 2, 3, 4},             {1, 2, 3, 4, 5, 6, 7, 8},
      {2, 3, 4, 5, 8},          {1, 2, 3, 4, 8, 9}};
  if (species < 0 || species >= kNumSpecies)
    throw ValidationError("term_list: species id out of range");
  const auto& one_based =
      (kind == OutputKind::kYield ? yield : ssb)[static_cast<size_t>(species)];
  std::vector<int> out;
  for (int d : one_based) out.push_back(d - 1);
  return out;
}

// ---------------------------------------------------------------------------
// Mean model: intercept plus, per active dimension, a truncated-power cubic
// spline s(x) = sum_h 1{x >= knot_h} * beta_h * (x - knot_h)^3.

struct MeanModel {
  std::vector<int> active;  // 0-based dims, ascending
  Vector knots = (Vector(3) << 0.5, 1.0, 1.5).finished();
  Vector beta;  // 1 + knots.size()*active.size(), intercept first

  int basis_size() const {
    return 1 + static_cast<int>(knots.size()) * static_cast<int>(active.size());
  }

  void validate() const {
    if (beta.size() != basis_size())
      throw ValidationError("mean model: coefficient count mismatch");
    for (int h = 1; h < knots.size(); ++h)
      if (!(knots[h] > knots[h - 1]))
        throw ValidationError("mean model: knots must increase");
    if (knots.size() > 0 && (knots[0] < kFLower || knots[knots.size() - 1] > kFUpper))
      throw ValidationError("mean model: knots outside the fishing range");
    for (size_t a = 1; a < active.size(); ++a)
      if (active[a] <= active[a - 1])
        throw ValidationError("mean model: active dims must ascend");
  }

  // Row of basis values at a point (intercept + per-dim truncated powers).
  void basis_row(const double* f, double* row) const {
    row[0] = 1.0;
    int c = 1;
    for (int d : active)
      for (int h = 0; h < knots.size(); ++h, ++c) {
        const double dx = f[d] - knots[h];
        row[c] = dx > 0.0 ? dx * dx * dx : 0.0;
      }
  }

  // Contribution of one dimension's spline, using this model's coefficients.
  double dim_value(int dim, double x) const {
    for (size_t a = 0; a < active.size(); ++a) {
      if (active[a] != dim) continue;
      double acc = 0.0;
      for (int h = 0; h < knots.size(); ++h) {
        const double dx = x - knots[h];
        if (dx > 0.0)
          acc += beta[1 + static_cast<int>(a) * static_cast<int>(knots.size()) + h] *
                 dx * dx * dx;
      }
      return acc;
    }
    return 0.0;
  }

  double value(const double* f) const {
    double acc = beta[0];
    for (int d : active) acc += dim_value(d, f[d]);
    return acc;
  }
};

// ---------------------------------------------------------------------------
// Kernel: product Matern-5/2 with a single shared signal variance. Inactive
// dimensions hold an infinite length-scale so their factor is exactly 1.

struct KernelSpec {
  double sigma2 = 1.0;
  Vector rho = Vector::Constant(kNumSpecies, std::numeric_limits<double>::infinity());
  double nugget = 0.0;  // observation noise variance added on the diagonal

  void validate() const {
    if (!(sigma2 > 0.0)) throw ValidationError("kernel: sigma2 must be > 0");
    if ((rho.array() <= 0.0).any())
      throw ValidationError("kernel: length-scales must be > 0");
    if (nugget < 0.0) throw ValidationError("kernel: negative nugget");
  }

  double correlation(const double* a, const double* b) const {
    double acc = 1.0;
    for (int d = 0; d < rho.size(); ++d) {
      const double delta = std::abs(a[d] - b[d]);
      if (delta > 0.0) acc *= matern52(delta / rho[d]);
    }
    return acc;
  }
};

inline double kernel(const FishingScenario& a, const FishingScenario& b,
                     const KernelSpec& spec) {
  spec.validate();
  return spec.sigma2 * spec.correlation(a.f.data(), b.f.data());
}

// ---------------------------------------------------------------------------
// A conditioned surface: training set plus the factorization of the
// correlation-with-nugget matrix C = R + tau*I (tau = nugget / sigma2).

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

struct EmulatorSurface {
  MeanModel mean;
  KernelSpec kernel;
  Matrix design;   // n x 9
  Vector targets;  // n
  bool converged = true;
  bool dropped_columns = false;

  // Cached factorization pieces.
  Vector alpha;          // C^{-1} (y - H beta)
  Eigen::LLT<Matrix> chol;  // of C
  double tau = 0.0;
  std::vector<int> corr_dims;  // dims with finite length-scale

  int size() const { return static_cast<int>(targets.size()); }

  // Correlation vector between a query and the training rows. Dimensions with
  // an infinite length-scale contribute a factor of exactly one and are
  // skipped.
  void correlations(const double* f, Vector& r) const {
    const int n = size();
    r.resize(n);
    r.setOnes();
    for (int d : corr_dims) {
      const double inv_rho = 1.0 / kernel.rho[d];
      for (int l = 0; l < n; ++l)
        r[l] *= matern52(std::abs(f[d] - design(l, d)) * inv_rho);
    }
  }

  Prediction predict(const FishingScenario& x) const {
    Vector r;
    correlations(x.f.data(), r);
    Prediction p;
    p.mean = mean.value(x.f.data()) + r.dot(alpha);
    const Vector w = chol.solve(r);
    p.variance = std::max(0.0, kernel.sigma2 * (1.0 - r.dot(w)));
    return p;
  }

  // Predictive mean alone, skipping the variance back-solve. The equilibrium
  // search queries means millions of times and never needs the variance.
  double predicted_mean(const FishingScenario& x) const {
    Vector r;
    correlations(x.f.data(), r);
    return mean.value(x.f.data()) + r.dot(alpha);
  }
};

// Assemble a surface from explicit hyperparameters (no fitting): used both by
// the fitting routine and directly when coefficients are known.
inline EmulatorSurface make_surface(const Matrix& design, const Vector& targets,
                                    MeanModel mean, KernelSpec kernel) {
  if (design.rows() != targets.size() || design.cols() != kNumSpecies)
    throw ValidationError("surface: design/target shapes disagree");
  mean.validate();
  kernel.validate();
  EmulatorSurface s;
  s.mean = std::move(mean);
  s.kernel = std::move(kernel);
  s.design = design;
  s.targets = targets;
  s.tau = s.kernel.nugget / s.kernel.sigma2;
  for (int d = 0; d < s.kernel.rho.size(); ++d)
    if (std::isfinite(s.kernel.rho[d])) s.corr_dims.push_back(d);

  const int n = s.size();
  Matrix c(n, n);
  c.diagonal().setConstant(1.0 + s.tau);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < a; ++b) {
      double acc = 1.0;
      for (int d = 0; d < s.design.cols(); ++d) {
        const double delta = std::abs(s.design(a, d) - s.design(b, d));
        if (delta > 0.0) acc *= matern52(delta / s.kernel.rho[d]);
      }
      c(a, b) = acc;
      c(b, a) = acc;
    }

  s.chol.compute(c);
  if (s.chol.info() != Eigen::Success)
    throw NumericError("surface: correlation matrix not positive definite");

  Vector eta(n);
  Vector frow(kNumSpecies);
  for (int l = 0; l < n; ++l) {
    frow = s.design.row(l);
    eta[l] = s.mean.value(frow.data());
  }
  const Vector resid = targets - eta;
  s.alpha = s.chol.solve(resid);
  // One round of iterative refinement: near-zero nuggets leave C poorly
  // conditioned and the raw solve short of training-point reproduction.
  s.alpha += s.chol.solve(resid - c * s.alpha);
  return s;
}

// ---------------------------------------------------------------------------
// Fitting: profiled maximum likelihood over log length-scales and log
// relative nugget, GLS mean coefficients, multistart Nelder-Mead.

struct FitOptions {
  int restarts = 2;    // total optimizer starts
  int max_iter = 220;  // objective evaluations per start
  std::optional<double> fixed_nugget_ratio;  // pin tau (0 allowed)
  uint64_t seed = 0;   // jitters starts beyond the second
};

namespace detail {

struct FitWork {
  Matrix design;               // n x 9
  Vector targets;              // n
  std::vector<Matrix> dist;    // per active dim: |F_d^a - F_d^b|
  Matrix basis;                // n x p, kept columns only
  std::vector<int> kept;       // kept column indices of the full basis
  int n = 0;
};

// Negative profiled log-likelihood at given length-scales and nugget ratio.
// Outputs the GLS coefficients and profiled variance on request.
inline double profiled_nll(const FitWork& w, const Vector& rho_active,
                           double tau, Vector* beta_out, double* sigma2_out,
                           Eigen::LLT<Matrix>* chol_out) {
  const int n = w.n;
  Matrix c = Matrix::Zero(n, n);
  // One exponential per pair: product of polynomials times exp of the summed
  // scaled distances.
  const double root5 = std::sqrt(5.0);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < a; ++b) {
      double u_sum = 0.0, poly = 1.0;
      for (size_t k = 0; k < w.dist.size(); ++k) {
        const double u = w.dist[k](a, b) / rho_active[static_cast<long>(k)];
        u_sum += u;
        poly *= 1.0 + root5 * u + (5.0 / 3.0) * u * u;
      }
      const double v = poly * std::exp(-root5 * u_sum);
      c(a, b) = v;
      c(b, a) = v;
    }
  c.diagonal().setConstant(1.0 + tau);

  Eigen::LLT<Matrix> llt(c);
  if (llt.info() != Eigen::Success)
    return std::numeric_limits<double>::infinity();
  const Matrix l = llt.matrixL();

  const Matrix hw = l.triangularView<Eigen::Lower>().solve(w.basis);
  const Vector yw = l.triangularView<Eigen::Lower>().solve(w.targets);
  Eigen::ColPivHouseholderQR<Matrix> qr(hw);
  const Vector beta = qr.solve(yw);
  const double rss = (yw - hw * beta).squaredNorm();
  const double sigma2 = std::max(rss / n, 1e-300);

  double logdet = 0.0;
  for (int i = 0; i < n; ++i) logdet += std::log(l(i, i));
  const double nll = 0.5 * n * std::log(sigma2) + logdet;

  if (beta_out) *beta_out = beta;
  if (sigma2_out) *sigma2_out = sigma2;
  if (chol_out) *chol_out = llt;
  return nll;
}

}  // namespace detail

inline EmulatorSurface fit_surface(const std::vector<FishingScenario>& design,
                                   const Vector& targets,
                                   const std::vector<int>& active,
                                   const FitOptions& options = {}) {
  const int n = static_cast<int>(design.size());
  if (n < 20) throw ValidationError("fit_surface: need at least 20 design points");
  if (targets.size() != n)
    throw ValidationError("fit_surface: target count mismatch");
  if (!targets.allFinite())
    throw ValidationError("fit_surface: non-finite targets");

  detail::FitWork w;
  w.n = n;
  w.design = Matrix::Zero(n, kNumSpecies);
  for (int l = 0; l < n; ++l)
    for (int d = 0; d < kNumSpecies; ++d) w.design(l, d) = design[static_cast<size_t>(l)][d];
  w.targets = targets;

  MeanModel mean;
  mean.active = active;
  mean.beta = Vector::Zero(mean.basis_size());
  mean.validate();

  const int p = mean.basis_size();
  Matrix full_basis(n, p);
  {
    std::vector<double> row(static_cast<size_t>(p));
    Vector frow(kNumSpecies);
    for (int l = 0; l < n; ++l) {
      frow = w.design.row(l);
      mean.basis_row(frow.data(), row.data());
      for (int c = 0; c < p; ++c) full_basis(l, c) = row[static_cast<size_t>(c)];
    }
  }

  // Structural rank detection: dependent basis columns are dropped up front.
  bool dropped = false;
  {
    Eigen::ColPivHouseholderQR<Matrix> qr(full_basis);
    qr.setThreshold(1e-10);
    const int rank = static_cast<int>(qr.rank());
    std::vector<int> kept;
    for (int c = 0; c < rank; ++c)
      kept.push_back(static_cast<int>(qr.colsPermutation().indices()[c]));
    std::sort(kept.begin(), kept.end());
    if (rank < p) dropped = true;
    w.kept = kept;
    w.basis = Matrix(n, rank);
    for (int c = 0; c < rank; ++c) w.basis.col(c) = full_basis.col(kept[static_cast<size_t>(c)]);
  }

  for (int d : active) w.dist.emplace_back((w.design.col(d).replicate(1, n) -
                                            w.design.col(d).transpose().replicate(n, 1))
                                               .cwiseAbs());

  const int q_rho = static_cast<int>(active.size());
  const bool fit_tau = !options.fixed_nugget_ratio.has_value();
  const int q = q_rho + (fit_tau ? 1 : 0);
  const double tau_floor = 1e-8;
  const double fixed_tau =
      fit_tau ? 0.0 : std::max(*options.fixed_nugget_ratio, 0.0);

  // Length-scales beyond ~10x the domain are statistically indistinguishable
  // and make the correlation matrix numerically singular; clamp there.
  auto unpack = [&](const Vector& theta, Vector& rho_active, double& tau) {
    for (int k = 0; k < q_rho; ++k)
      rho_active[k] = std::exp(std::clamp(theta[k], std::log(1e-3), std::log(20.0)));
    tau = fit_tau
              ? std::exp(std::clamp(theta[q_rho], std::log(tau_floor), std::log(10.0)))
              : fixed_tau;
  };

  Vector best_theta;
  double best_value = std::numeric_limits<double>::infinity();
  bool converged = false;

  if (q == 0) {
    best_theta = Vector::Zero(0);
    converged = true;
  } else {
    auto objective = [&](const Vector& theta) {
      Vector rho_active(q_rho);
      double tau = 0.0;
      unpack(theta, rho_active, tau);
      return detail::profiled_nll(w, rho_active, tau, nullptr, nullptr, nullptr);
    };

    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> jitter(std::log(0.05), std::log(5.0));
    const int starts = std::max(1, options.restarts);
    for (int s = 0; s < starts; ++s) {
      Vector theta0(q);
      const double base_rho = s == 0 ? 1.0 : 0.25;
      for (int k = 0; k < q_rho; ++k)
        theta0[k] = s < 2 ? std::log(base_rho) : jitter(rng);
      if (fit_tau) theta0[q_rho] = std::log(1e-4);
      const auto res = nelder_mead(objective, theta0, 0.5, options.max_iter);
      if (res.value < best_value) {
        best_value = res.value;
        best_theta = res.x;
        converged = res.converged;
      }
    }
  }

  Vector rho_active(q_rho);
  double tau = fixed_tau;
  if (q > 0) unpack(best_theta, rho_active, tau);

  Vector beta_kept;
  double sigma2 = 1.0;
  const double nll = detail::profiled_nll(w, rho_active, tau, &beta_kept, &sigma2, nullptr);
  if (!std::isfinite(nll))
    throw NumericError("fit_surface: likelihood not finite at the optimum");

  mean.beta = Vector::Zero(p);
  for (size_t c = 0; c < w.kept.size(); ++c)
    mean.beta[w.kept[c]] = beta_kept[static_cast<long>(c)];

  KernelSpec kernel;
  kernel.sigma2 = std::max(sigma2, 1e-12);
  for (int k = 0; k < q_rho; ++k) kernel.rho[active[static_cast<size_t>(k)]] = rho_active[k];
  kernel.nugget = tau * kernel.sigma2;

  EmulatorSurface s = make_surface(w.design, w.targets, std::move(mean), std::move(kernel));
  s.converged = converged;
  s.dropped_columns = dropped;
  return s;
}

// ---------------------------------------------------------------------------
// Fast repeated prediction along one dimension with the others held fixed:
// the correlation product over the fixed dimensions is precomputed per
// training point, so each query costs one Matern evaluation per point.

class SweepPredictor {
public:
  SweepPredictor(const EmulatorSurface& surface, const FishingScenario& base,
                 int dim)
      : dim_(dim) {
    const int n = surface.size();
    const auto& mean = surface.mean;
    base_alpha_.resize(n);
    x_.resize(n);
    for (int l = 0; l < n; ++l) {
      double acc = surface.alpha[l];
      for (int d : surface.corr_dims) {
        if (d == dim) continue;
        acc *= matern52(std::abs(base[d] - surface.design(l, d)) / surface.kernel.rho[d]);
      }
      base_alpha_[l] = acc;
      x_[l] = surface.design(l, dim);
    }
    eta_base_ = mean.beta[0];
    for (int d : mean.active)
      if (d != dim) eta_base_ += mean.dim_value(d, base[d]);
    active_ = std::find(surface.corr_dims.begin(), surface.corr_dims.end(),
                        dim) != surface.corr_dims.end();
    mean_active_ =
        std::find(mean.active.begin(), mean.active.end(), dim) != mean.active.end();
    inv_rho_ = active_ ? 1.0 / surface.kernel.rho[dim] : 0.0;
    mean_ = &surface.mean;
  }

  double mean(double f) const {
    double acc = eta_base_;
    if (mean_active_) acc += mean_->dim_value(dim_, f);
    double k = 0.0;
    if (active_) {
      for (long l = 0; l < base_alpha_.size(); ++l)
        k += base_alpha_[l] * matern52(std::abs(f - x_[l]) * inv_rho_);
    } else {
      k = base_alpha_.sum();
    }
    return acc + k;
  }

private:
  int dim_;
  bool active_ = false;       // dim participates in the kernel
  bool mean_active_ = false;  // dim participates in the spline mean
  double inv_rho_ = 0.0;
  double eta_base_ = 0.0;
  Vector base_alpha_, x_;
  const MeanModel* mean_ = nullptr;
};

// ---------------------------------------------------------------------------
// Surface archive: hyperparameters and mean coefficients per (kind, species,
// draw); the training design is referenced by scenario id elsewhere.

struct ArchiveEntry {
  OutputKind kind;
  int species = 0;  // 0-based
  int draw = 0;
  const EmulatorSurface* surface = nullptr;
};

// Streaming writer for the surface archive (`kind,species,draw,param,value`):
// surfaces are archived as they are fitted and can be discarded afterwards.
// Flattened hyperparameter summary of a fitted surface, in archive row order.
// Lets callers that fit surfaces in parallel extract the loggable state and
// discard the surface, then write rows in a deterministic order afterwards.
inline std::vector<std::pair<std::string, double>> archive_params(
    const EmulatorSurface& s) {
  std::vector<std::pair<std::string, double>> out;
  out.emplace_back("sigma2", s.kernel.sigma2);
  out.emplace_back("nugget", s.kernel.nugget);
  out.emplace_back("converged", s.converged ? 1.0 : 0.0);
  out.emplace_back("n_train", static_cast<double>(s.size()));
  for (int d : s.mean.active)
    out.emplace_back("rho" + std::to_string(d + 1), s.kernel.rho[d]);
  for (int c = 0; c < s.mean.beta.size(); ++c)
    out.emplace_back("beta" + std::to_string(c), s.mean.beta[c]);
  return out;
}

class SurfaceArchive {
public:
  explicit SurfaceArchive(const std::string& path) : w_(path) {
    w_.header({"kind", "species", "draw", "param", "value"});
  }

  void add(OutputKind kind, int species, int draw,
           const std::vector<std::pair<std::string, double>>& params) {
    for (const auto& [param, value] : params) {
      auto row = w_.row();
      row.text(to_string(kind))
          .integer(species + 1)
          .integer(draw)
          .text(param)
          .num(value);
    }
  }

  void add(OutputKind kind, int species, int draw, const EmulatorSurface& s) {
    add(kind, species, draw, archive_params(s));
  }

private:
  csv::Writer w_;
};

inline void save_surface_archive(const std::string& path,
                                 const std::vector<ArchiveEntry>& entries) {
  SurfaceArchive archive(path);
  for (const auto& e : entries)
    archive.add(e.kind, e.species, e.draw, *e.surface);
}

}  // namespace mmsy::emulator
