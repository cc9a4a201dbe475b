// Bayesian multi-simulator ensemble: a latent "truth" random walk per species
// observed directly (stock assessments) and indirectly through K simulators,
// each offset by shared and simulator-specific discrepancies with static and
// AR(1) parts.
//
// With diagonal covariances throughout, the model factorizes over species:
// each species carries an independent linear-Gaussian chain with state
//   [ y, eta, delta, (gamma_k, z_k) for every simulator covering it ]
// where delta and gamma_k are static (zero process noise) and eta, z_k are
// AR(1). Likelihood and smoothing are exact via a Kalman filter with scalar
// sequential observation updates plus an RTS backward pass.
//
// Hyperparameters (innovation SDs, observation SDs, AR coefficients) are
// sampled by adaptive random-walk Metropolis on transformed coordinates
// (log SDs, atanh AR), block-updated per species. Adaptation is frozen after
// burn-in so the kept draws form a valid Markov chain.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mmsy/csv.hpp"
#include "mmsy/errors.hpp"
#include "mmsy/stats.hpp"
#include "mmsy/types.hpp"

namespace mmsy::ensemble {

// ---------------------------------------------------------------------------
// Layout: which simulator reports which species over which years.

struct SimulatorLayout {
  std::vector<int> species;  // reported global species ids, ascending
  YearRange years;

  int row_of(int species_id) const {
    for (size_t r = 0; r < species.size(); ++r)
      if (species[r] == species_id) return static_cast<int>(r);
    return -1;
  }
};

struct EnsembleLayout {
  int n_species = kNumSpecies;
  YearRange obs_years{1984, 2017};
  YearRange grid{1984, 2050};  // filter/smoother year grid
  std::vector<SimulatorLayout> sims;

  int num_sims() const { return static_cast<int>(sims.size()); }

  void validate() const {
    if (n_species < 1) throw ValidationError("ensemble layout: no species");
    grid.validate("ensemble grid");
    obs_years.validate("observation years");
    if (!grid.contains(obs_years))
      throw ValidationError("ensemble layout: obs years outside grid");
    for (const auto& sim : sims) {
      sim.years.validate("simulator years");
      for (size_t i = 0; i < sim.species.size(); ++i) {
        if (sim.species[i] < 0 || sim.species[i] >= n_species)
          throw ValidationError("ensemble layout: simulator species id out of range");
        if (i > 0 && sim.species[i] <= sim.species[i - 1])
          throw ValidationError("ensemble layout: simulator species not ascending");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Hyperparameters. Per-simulator vectors are sized to that simulator's
// species subset (row order), not the full community.

struct SimHyper {
  Vector sd_longterm;  // sqrt of C_gamma diagonal
  Vector ar_sim;       // R_k diagonal
  Vector sd_sim;       // sqrt of Lambda_k diagonal
  Vector sd_output;    // sqrt of Sigma_k diagonal
};

struct EnsembleSpec {
  EnsembleLayout layout;
  Vector sd_truth;   // sqrt of Lambda_y diagonal, per species
  Vector sd_obs;     // sqrt of Sigma_y diagonal
  Vector ar_shared;  // R_eta diagonal
  Vector sd_shared;  // sqrt of Lambda_eta diagonal
  std::vector<SimHyper> sims;

  // Fixed prior constants for the state components that are marginalized in
  // the filter rather than sampled.
  double truth_init_mean = 0.0;
  double truth_init_sd = 10.0;
  double delta_prior_sd = 5.0;

  void validate() const {
    layout.validate();
    const int n = layout.n_species;
    auto check_sd = [&](const Vector& v, int len, const char* what) {
      if (v.size() != len)
        throw ValidationError(std::string("ensemble spec: ") + what +
                              " has wrong length");
      if ((v.array() <= 0.0).any())
        throw ValidationError(std::string("ensemble spec: ") + what +
                              " must be > 0");
    };
    auto check_ar = [&](const Vector& v, int len, const char* what) {
      if (v.size() != len)
        throw ValidationError(std::string("ensemble spec: ") + what +
                              " has wrong length");
      if ((v.array() <= -1.0).any() || (v.array() >= 1.0).any())
        throw ValidationError(std::string("ensemble spec: ") + what +
                              " must lie inside (-1,1)");
    };
    check_sd(sd_truth, n, "sd_truth");
    check_sd(sd_obs, n, "sd_obs");
    check_ar(ar_shared, n, "ar_shared");
    check_sd(sd_shared, n, "sd_shared");
    if (static_cast<int>(sims.size()) != layout.num_sims())
      throw ValidationError("ensemble spec: simulator parameter count mismatch");
    for (size_t k = 0; k < sims.size(); ++k) {
      const int nk = static_cast<int>(layout.sims[k].species.size());
      check_sd(sims[k].sd_longterm, nk, "sd_longterm");
      check_ar(sims[k].ar_sim, nk, "ar_sim");
      check_sd(sims[k].sd_sim, nk, "sd_sim");
      check_sd(sims[k].sd_output, nk, "sd_output");
    }
    if (!(truth_init_sd > 0.0) || !(delta_prior_sd > 0.0))
      throw ValidationError("ensemble spec: prior SDs must be > 0");
  }
};

// ---------------------------------------------------------------------------
// Per-species chain structure and data binding.

namespace detail {

// State indices within a species chain.
inline constexpr int kStateTruth = 0;
inline constexpr int kStateEta = 1;
inline constexpr int kStateDelta = 2;
inline int gamma_index(int slot) { return 3 + 2 * slot; }
inline int z_index(int slot) { return 4 + 2 * slot; }

struct ChainStructure {
  int species = 0;           // global id
  int dim = 3;
  std::vector<int> ks;       // simulator indices covering this species
  std::vector<int> rows;     // this species' row within each such simulator
};

struct DataRow {
  bool is_obs = true;  // direct observation of truth vs simulator output
  int slot = 0;        // index into ChainStructure::ks when !is_obs
  double value = 0.0;
};

// Chain parameters assembled from a spec (all diagonal).
struct ChainParams {
  Vector init_mean, init_var, trans, q;
  // Observation noise variances, resolved per row type.
  double obs_var = 0.0;
  std::vector<double> sim_var;  // per slot
};

inline ChainParams chain_params(const EnsembleSpec& spec,
                                const ChainStructure& st) {
  const int i = st.species;
  ChainParams p;
  p.init_mean = Vector::Zero(st.dim);
  p.init_var = Vector::Zero(st.dim);
  p.trans = Vector::Ones(st.dim);
  p.q = Vector::Zero(st.dim);

  p.init_mean[kStateTruth] = spec.truth_init_mean;
  p.init_var[kStateTruth] = spec.truth_init_sd * spec.truth_init_sd;
  p.q[kStateTruth] = spec.sd_truth[i] * spec.sd_truth[i];

  const double ar_e = spec.ar_shared[i];
  const double q_e = spec.sd_shared[i] * spec.sd_shared[i];
  p.trans[kStateEta] = ar_e;
  p.q[kStateEta] = q_e;
  p.init_var[kStateEta] = q_e / (1.0 - ar_e * ar_e);  // stationary

  p.init_var[kStateDelta] = spec.delta_prior_sd * spec.delta_prior_sd;

  p.obs_var = spec.sd_obs[i] * spec.sd_obs[i];
  for (size_t s = 0; s < st.ks.size(); ++s) {
    const auto& h = spec.sims[static_cast<size_t>(st.ks[s])];
    const int row = st.rows[s];
    const double sd_g = h.sd_longterm[row];
    p.init_var[gamma_index(static_cast<int>(s))] = sd_g * sd_g;
    const double ar_z = h.ar_sim[row];
    const double q_z = h.sd_sim[row] * h.sd_sim[row];
    p.trans[z_index(static_cast<int>(s))] = ar_z;
    p.q[z_index(static_cast<int>(s))] = q_z;
    p.init_var[z_index(static_cast<int>(s))] = q_z / (1.0 - ar_z * ar_z);
    p.sim_var.push_back(h.sd_output[row] * h.sd_output[row]);
  }
  return p;
}

// Sparse observation vector: a data row loads on these state indices.
inline void row_indices(const DataRow& row, std::vector<int>& idx) {
  idx.clear();
  if (row.is_obs) {
    idx.push_back(kStateTruth);
  } else {
    idx.push_back(kStateTruth);
    idx.push_back(kStateEta);
    idx.push_back(kStateDelta);
    idx.push_back(gamma_index(row.slot));
    idx.push_back(z_index(row.slot));
  }
}

}  // namespace detail

struct SmoothedChain {
  YearRange years;
  Matrix mean;  // dim x T, smoothed state means
  Matrix var;   // dim x T, smoothed marginal variances
};

struct SmoothResult {
  YearRange years;
  Matrix truth_mean;  // n_species x T
  Matrix truth_var;
  Matrix eta_mean;
  Vector delta_mean;                 // static shared discrepancy
  std::vector<SmoothedChain> chains;  // full per-species detail
  double log_likelihood = 0.0;
};

// Binds the layout to concrete series so repeated likelihood evaluations skip
// re-walking the data. Series may cover any sub-window of the grid; absent
// cells contribute nothing.
class BoundEnsemble {
public:
  BoundEnsemble(EnsembleLayout layout, const SpeciesSeries& obs,
                const std::vector<SpeciesSeries>& sims)
      : layout_(std::move(layout)) {
    layout_.validate();
    if (static_cast<int>(sims.size()) != layout_.num_sims())
      throw ValidationError("ensemble data: simulator series count mismatch");
    if (obs.rows() != layout_.n_species)
      throw ValidationError("ensemble data: observation rows != species count");
    if (!layout_.grid.contains(obs.years))
      throw ValidationError("ensemble data: observation years outside grid");
    for (int k = 0; k < layout_.num_sims(); ++k) {
      if (sims[static_cast<size_t>(k)].species != layout_.sims[static_cast<size_t>(k)].species)
        throw ValidationError("ensemble data: simulator " + std::to_string(k + 1) +
                              " species mask mismatch");
      if (!layout_.grid.contains(sims[static_cast<size_t>(k)].years))
        throw ValidationError("ensemble data: simulator years outside grid");
      if (sims[static_cast<size_t>(k)].kind != obs.kind)
        throw ValidationError("ensemble data: mixed output kinds");
    }

    const int T = layout_.grid.size();
    structs_.resize(static_cast<size_t>(layout_.n_species));
    rows_.resize(static_cast<size_t>(layout_.n_species));
    for (int i = 0; i < layout_.n_species; ++i) {
      auto& st = structs_[static_cast<size_t>(i)];
      st.species = i;
      for (int k = 0; k < layout_.num_sims(); ++k) {
        const int row = layout_.sims[static_cast<size_t>(k)].row_of(i);
        if (row >= 0) {
          st.ks.push_back(k);
          st.rows.push_back(row);
        }
      }
      st.dim = 3 + 2 * static_cast<int>(st.ks.size());
      rows_[static_cast<size_t>(i)].resize(static_cast<size_t>(T));
    }

    for (int i = 0; i < layout_.n_species; ++i)
      for (int c = 0; c < obs.years.size(); ++c)
        if (obs.present(i, c)) {
          detail::DataRow row;
          row.is_obs = true;
          row.value = obs.log_values(i, c);
          const int t = layout_.grid.offset(obs.years.first + c);
          rows_[static_cast<size_t>(i)][static_cast<size_t>(t)].push_back(row);
        }
    for (int i = 0; i < layout_.n_species; ++i) {
      const auto& st = structs_[static_cast<size_t>(i)];
      for (size_t s = 0; s < st.ks.size(); ++s) {
        const auto& series = sims[static_cast<size_t>(st.ks[s])];
        const int r = st.rows[s];
        for (int c = 0; c < series.years.size(); ++c)
          if (series.present(r, c)) {
            detail::DataRow row;
            row.is_obs = false;
            row.slot = static_cast<int>(s);
            row.value = series.log_values(r, c);
            const int t = layout_.grid.offset(series.years.first + c);
            rows_[static_cast<size_t>(i)][static_cast<size_t>(t)].push_back(row);
          }
      }
    }
  }

  const EnsembleLayout& layout() const { return layout_; }
  int n_species() const { return layout_.n_species; }
  const detail::ChainStructure& structure(int i) const {
    return structs_[static_cast<size_t>(i)];
  }

  // Marginal log-likelihood contribution of one species' chain.
  double chain_log_likelihood(int i, const EnsembleSpec& spec) const {
    return filter(i, spec, nullptr);
  }

  double log_likelihood(const EnsembleSpec& spec) const {
    double acc = 0.0;
    for (int i = 0; i < n_species(); ++i) acc += chain_log_likelihood(i, spec);
    return acc;
  }

  // Truth marginals at the last grid year per species. The filtered and
  // smoothed laws coincide at the final time, so the backward pass and the
  // trajectory storage are skipped; this is the hot path when only the
  // horizon summary is needed.
  std::pair<Vector, Vector> final_truth(const EnsembleSpec& spec) const {
    Vector mean(n_species()), var(n_species());
    for (int i = 0; i < n_species(); ++i) {
      double m = 0.0, v = 0.0;
      filter(i, spec, nullptr, &m, &v);
      mean[i] = m;
      var[i] = v;
    }
    return {std::move(mean), std::move(var)};
  }

  // Exact smoothed posterior of every state component over the grid.
  SmoothResult smooth(const EnsembleSpec& spec) const {
    const int T = layout_.grid.size();
    SmoothResult out;
    out.years = layout_.grid;
    out.truth_mean = Matrix::Zero(n_species(), T);
    out.truth_var = Matrix::Zero(n_species(), T);
    out.eta_mean = Matrix::Zero(n_species(), T);
    out.delta_mean = Vector::Zero(n_species());
    for (int i = 0; i < n_species(); ++i) {
      SmoothedChain chain;
      out.log_likelihood += filter(i, spec, &chain);
      out.truth_mean.row(i) = chain.mean.row(detail::kStateTruth);
      out.truth_var.row(i) = chain.var.row(detail::kStateTruth);
      out.eta_mean.row(i) = chain.mean.row(detail::kStateEta);
      out.delta_mean[i] = chain.mean(detail::kStateDelta, T - 1);
      out.chains.push_back(std::move(chain));
    }
    return out;
  }

private:
  // Forward filter (optionally followed by an RTS backward pass). Returns the
  // chain's marginal log-likelihood; optionally reports the final filtered
  // truth marginal.
  double filter(int i, const EnsembleSpec& spec, SmoothedChain* smoothed,
                double* final_mean = nullptr, double* final_var = nullptr) const {
    const auto& st = structs_[static_cast<size_t>(i)];
    const auto p = detail::chain_params(spec, st);
    const int n = st.dim;
    const int T = layout_.grid.size();

    Vector m = p.init_mean;
    Matrix P = p.init_var.asDiagonal();
    double loglik = 0.0;

    std::vector<Vector> mf, mp;
    std::vector<Matrix> Pf, Pp;
    if (smoothed) {
      mf.reserve(static_cast<size_t>(T));
      mp.reserve(static_cast<size_t>(T));
      Pf.reserve(static_cast<size_t>(T));
      Pp.reserve(static_cast<size_t>(T));
    }

    std::vector<int> idx;
    Vector ph(n);
    for (int t = 0; t < T; ++t) {
      if (t > 0) {
        // Diagonal transition: m <- d(*)m, P <- d d' (*) P + Q.
        m.array() *= p.trans.array();
        P = (p.trans * p.trans.transpose()).cwiseProduct(P);
        P.diagonal() += p.q;
      }
      if (smoothed) {
        mp.push_back(m);
        Pp.push_back(P);
      }
      for (const auto& row : rows_[static_cast<size_t>(i)][static_cast<size_t>(t)]) {
        detail::row_indices(row, idx);
        const double r =
            row.is_obs ? p.obs_var : p.sim_var[static_cast<size_t>(row.slot)];
        double hm = 0.0;
        ph.setZero();
        for (int j : idx) {
          hm += m[j];
          ph += P.col(j);
        }
        double hph = 0.0;
        for (int j : idx) hph += ph[j];
        const double s_var = hph + r;
        if (!(s_var > 0.0) || !std::isfinite(s_var))
          throw NumericError("ensemble filter: non-positive innovation variance");
        const double v = row.value - hm;
        loglik += -0.5 * (std::log(2.0 * M_PI * s_var) + v * v / s_var);
        const Vector gain = ph / s_var;
        m += gain * v;
        P -= gain * ph.transpose();
        P = 0.5 * (P + P.transpose()).eval();
      }
      if (smoothed) {
        mf.push_back(m);
        Pf.push_back(P);
      }
    }

    if (final_mean) *final_mean = m[detail::kStateTruth];
    if (final_var)
      *final_var = std::max(0.0, P(detail::kStateTruth, detail::kStateTruth));

    if (smoothed) {
      smoothed->years = layout_.grid;
      smoothed->mean = Matrix::Zero(n, T);
      smoothed->var = Matrix::Zero(n, T);
      Vector ms = mf[static_cast<size_t>(T - 1)];
      Matrix Ps = Pf[static_cast<size_t>(T - 1)];
      smoothed->mean.col(T - 1) = ms;
      smoothed->var.col(T - 1) = Ps.diagonal();
      for (int t = T - 2; t >= 0; --t) {
        const Matrix& Ppred = Pp[static_cast<size_t>(t + 1)];
        // G = P_f A' P_pred^{-1} with diagonal A.
        Matrix cross = Pf[static_cast<size_t>(t)] * p.trans.asDiagonal();
        Eigen::LDLT<Matrix> ldlt(Ppred);
        if (ldlt.info() != Eigen::Success)
          throw NumericError("ensemble smoother: predicted covariance not PSD");
        const Matrix g = ldlt.solve(cross.transpose()).transpose();
        ms = mf[static_cast<size_t>(t)] + g * (ms - mp[static_cast<size_t>(t + 1)]);
        Ps = Pf[static_cast<size_t>(t)] +
             g * (Ps - Ppred) * g.transpose();
        Ps = 0.5 * (Ps + Ps.transpose()).eval();
        smoothed->mean.col(t) = ms;
        smoothed->var.col(t) = Ps.diagonal().cwiseMax(0.0);
      }
    }
    return loglik;
  }

  EnsembleLayout layout_;
  std::vector<detail::ChainStructure> structs_;
  std::vector<std::vector<std::vector<detail::DataRow>>> rows_;  // [i][t][row]
};

inline double log_likelihood(const EnsembleSpec& spec, const SpeciesSeries& obs,
                             const std::vector<SpeciesSeries>& sims) {
  spec.validate();
  return BoundEnsemble(spec.layout, obs, sims).log_likelihood(spec);
}

// Exact Gaussian posterior of the latent truth over the full grid; the 2050
// marginal is read off the last column.
inline SmoothResult predict_truth(const EnsembleSpec& spec,
                                  const SpeciesSeries& obs,
                                  const std::vector<SpeciesSeries>& sims) {
  spec.validate();
  return BoundEnsemble(spec.layout, obs, sims).smooth(spec);
}

// ---------------------------------------------------------------------------
// Generative sampling (synthetic data, calibration harnesses).

struct SimulatedData {
  SpeciesSeries obs;
  std::vector<SpeciesSeries> sims;
  Matrix truth;  // n_species x grid years
};

inline SimulatedData simulate_observations(const EnsembleSpec& spec,
                                           uint64_t seed) {
  spec.validate();
  const auto& layout = spec.layout;
  const int T = layout.grid.size();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SimulatedData out;
  out.truth = Matrix::Zero(layout.n_species, T);
  std::vector<int> all(static_cast<size_t>(layout.n_species));
  for (int i = 0; i < layout.n_species; ++i) all[static_cast<size_t>(i)] = i;
  out.obs = SpeciesSeries::empty(OutputKind::kYield, layout.obs_years, all);
  for (int k = 0; k < layout.num_sims(); ++k)
    out.sims.push_back(SpeciesSeries::empty(
        OutputKind::kYield, layout.sims[static_cast<size_t>(k)].years,
        layout.sims[static_cast<size_t>(k)].species));

  Matrix eta = Matrix::Zero(layout.n_species, T);
  Vector delta(layout.n_species);
  std::vector<Matrix> z(static_cast<size_t>(layout.num_sims()));
  std::vector<Vector> gamma(static_cast<size_t>(layout.num_sims()));
  for (int k = 0; k < layout.num_sims(); ++k) {
    const int nk = static_cast<int>(layout.sims[static_cast<size_t>(k)].species.size());
    z[static_cast<size_t>(k)] = Matrix::Zero(nk, T);
    gamma[static_cast<size_t>(k)] = Vector::Zero(nk);
  }

  for (int i = 0; i < layout.n_species; ++i) {
    out.truth(i, 0) = spec.truth_init_mean + spec.truth_init_sd * gauss(rng);
    for (int t = 1; t < T; ++t)
      out.truth(i, t) = out.truth(i, t - 1) + spec.sd_truth[i] * gauss(rng);
    const double ar = spec.ar_shared[i];
    const double sd = spec.sd_shared[i];
    eta(i, 0) = sd / std::sqrt(1.0 - ar * ar) * gauss(rng);
    for (int t = 1; t < T; ++t) eta(i, t) = ar * eta(i, t - 1) + sd * gauss(rng);
    delta[i] = spec.delta_prior_sd * gauss(rng);
  }
  for (int k = 0; k < layout.num_sims(); ++k) {
    const auto& sim = layout.sims[static_cast<size_t>(k)];
    const auto& h = spec.sims[static_cast<size_t>(k)];
    for (size_t r = 0; r < sim.species.size(); ++r) {
      gamma[static_cast<size_t>(k)][static_cast<long>(r)] =
          h.sd_longterm[static_cast<long>(r)] * gauss(rng);
      const double ar = h.ar_sim[static_cast<long>(r)];
      const double sd = h.sd_sim[static_cast<long>(r)];
      auto& zk = z[static_cast<size_t>(k)];
      zk(static_cast<long>(r), 0) = sd / std::sqrt(1.0 - ar * ar) * gauss(rng);
      for (int t = 1; t < T; ++t)
        zk(static_cast<long>(r), t) = ar * zk(static_cast<long>(r), t - 1) + sd * gauss(rng);
    }
  }

  for (int i = 0; i < layout.n_species; ++i)
    for (int c = 0; c < layout.obs_years.size(); ++c) {
      const int t = layout.grid.offset(layout.obs_years.first + c);
      out.obs.set(i, layout.obs_years.first + c,
                  out.truth(i, t) + spec.sd_obs[i] * gauss(rng));
    }
  for (int k = 0; k < layout.num_sims(); ++k) {
    const auto& sim = layout.sims[static_cast<size_t>(k)];
    const auto& h = spec.sims[static_cast<size_t>(k)];
    for (size_t r = 0; r < sim.species.size(); ++r) {
      const int i = sim.species[r];
      for (int c = 0; c < sim.years.size(); ++c) {
        const int year = sim.years.first + c;
        const int t = layout.grid.offset(year);
        const double x = out.truth(i, t) + delta[i] + eta(i, t) +
                         gamma[static_cast<size_t>(k)][static_cast<long>(r)] +
                         z[static_cast<size_t>(k)](static_cast<long>(r), t);
        out.sims[static_cast<size_t>(k)].set(
            static_cast<int>(r), year,
            x + h.sd_output[static_cast<long>(r)] * gauss(rng));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hyperparameter priors and the transformed parameter vector.

struct PriorConfig {
  double sd_scale = 1.0;  // half-normal scale for every SD hyperparameter
  double truth_init_mean = 0.0;
  double truth_init_sd = 10.0;
  double delta_prior_sd = 5.0;
};

namespace detail {

enum class Field {
  kSdTruth,
  kSdObs,
  kArShared,
  kSdShared,
  kSimSdLongterm,
  kSimAr,
  kSimSd,
  kSimSdOutput
};

struct ParamEntry {
  Field field;
  int species;  // global id
  int k = -1;   // simulator index for kSim* fields
  int row = -1; // row within that simulator's vectors
  std::string name;
  bool is_ar() const {
    return field == Field::kArShared || field == Field::kSimAr;
  }
};

struct ParamMap {
  std::vector<ParamEntry> entries;
  std::vector<std::vector<int>> blocks;  // per species: entry indices

  int size() const { return static_cast<int>(entries.size()); }
};

inline ParamMap build_param_map(const EnsembleLayout& layout) {
  ParamMap map;
  map.blocks.resize(static_cast<size_t>(layout.n_species));
  auto add = [&](Field f, int i, int k, int row, std::string name) {
    map.blocks[static_cast<size_t>(i)].push_back(map.size());
    map.entries.push_back(ParamEntry{f, i, k, row, std::move(name)});
  };
  for (int i = 0; i < layout.n_species; ++i) {
    const std::string si = std::to_string(i + 1);
    add(Field::kSdTruth, i, -1, -1, "sd_truth[" + si + "]");
    add(Field::kSdObs, i, -1, -1, "sd_obs[" + si + "]");
    add(Field::kArShared, i, -1, -1, "ar_shared[" + si + "]");
    add(Field::kSdShared, i, -1, -1, "sd_shared[" + si + "]");
    for (int k = 0; k < layout.num_sims(); ++k) {
      const int row = layout.sims[static_cast<size_t>(k)].row_of(i);
      if (row < 0) continue;
      const std::string sk = "sim" + std::to_string(k + 1);
      add(Field::kSimSdLongterm, i, k, row, sk + ".sd_longterm[" + si + "]");
      add(Field::kSimAr, i, k, row, sk + ".ar[" + si + "]");
      add(Field::kSimSd, i, k, row, sk + ".sd[" + si + "]");
      add(Field::kSimSdOutput, i, k, row, sk + ".sd_output[" + si + "]");
    }
  }
  return map;
}

inline double read_param(const EnsembleSpec& spec, const ParamEntry& e) {
  switch (e.field) {
    case Field::kSdTruth: return spec.sd_truth[e.species];
    case Field::kSdObs: return spec.sd_obs[e.species];
    case Field::kArShared: return spec.ar_shared[e.species];
    case Field::kSdShared: return spec.sd_shared[e.species];
    case Field::kSimSdLongterm:
      return spec.sims[static_cast<size_t>(e.k)].sd_longterm[e.row];
    case Field::kSimAr: return spec.sims[static_cast<size_t>(e.k)].ar_sim[e.row];
    case Field::kSimSd: return spec.sims[static_cast<size_t>(e.k)].sd_sim[e.row];
    case Field::kSimSdOutput:
      return spec.sims[static_cast<size_t>(e.k)].sd_output[e.row];
  }
  throw Error("unreachable param field");
}

inline void write_param(EnsembleSpec& spec, const ParamEntry& e, double v) {
  switch (e.field) {
    case Field::kSdTruth: spec.sd_truth[e.species] = v; return;
    case Field::kSdObs: spec.sd_obs[e.species] = v; return;
    case Field::kArShared: spec.ar_shared[e.species] = v; return;
    case Field::kSdShared: spec.sd_shared[e.species] = v; return;
    case Field::kSimSdLongterm:
      spec.sims[static_cast<size_t>(e.k)].sd_longterm[e.row] = v;
      return;
    case Field::kSimAr:
      spec.sims[static_cast<size_t>(e.k)].ar_sim[e.row] = v;
      return;
    case Field::kSimSd:
      spec.sims[static_cast<size_t>(e.k)].sd_sim[e.row] = v;
      return;
    case Field::kSimSdOutput:
      spec.sims[static_cast<size_t>(e.k)].sd_output[e.row] = v;
      return;
  }
  throw Error("unreachable param field");
}

// natural <-> transformed (log for SDs, atanh for AR coefficients)
inline double to_natural(const ParamEntry& e, double theta) {
  return e.is_ar() ? std::tanh(theta) : std::exp(theta);
}
inline double to_transformed(const ParamEntry& e, double v) {
  return e.is_ar() ? std::atanh(v) : std::log(v);
}

// Log prior density in the transformed coordinate (Jacobian included):
// half-normal(sd_scale) for SDs, uniform(-1,1) for AR terms.
inline double log_prior_transformed(const ParamEntry& e, double theta,
                                    const PriorConfig& prior) {
  if (e.is_ar()) {
    const double r = std::tanh(theta);
    return std::log1p(-r * r) - std::log(2.0);
  }
  const double sd = std::exp(theta);
  const double s = prior.sd_scale;
  return 0.5 * std::log(2.0 / M_PI) - std::log(s) -
         0.5 * sd * sd / (s * s) + theta;
}

}  // namespace detail

// A spec with every hyperparameter drawn from its prior.
inline EnsembleSpec sample_prior_spec(const EnsembleLayout& layout,
                                      const PriorConfig& prior, uint64_t seed) {
  layout.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, prior.sd_scale);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  auto half_normal = [&] {
    double v = std::abs(gauss(rng));
    return v > 1e-8 ? v : 1e-8;
  };

  EnsembleSpec spec;
  spec.layout = layout;
  spec.truth_init_mean = prior.truth_init_mean;
  spec.truth_init_sd = prior.truth_init_sd;
  spec.delta_prior_sd = prior.delta_prior_sd;
  const int n = layout.n_species;
  spec.sd_truth = Vector::Zero(n);
  spec.sd_obs = Vector::Zero(n);
  spec.ar_shared = Vector::Zero(n);
  spec.sd_shared = Vector::Zero(n);
  for (int i = 0; i < n; ++i) {
    spec.sd_truth[i] = half_normal();
    spec.sd_obs[i] = half_normal();
    spec.ar_shared[i] = unif(rng);
    spec.sd_shared[i] = half_normal();
  }
  for (int k = 0; k < layout.num_sims(); ++k) {
    const int nk = static_cast<int>(layout.sims[static_cast<size_t>(k)].species.size());
    SimHyper h;
    h.sd_longterm = Vector::Zero(nk);
    h.ar_sim = Vector::Zero(nk);
    h.sd_sim = Vector::Zero(nk);
    h.sd_output = Vector::Zero(nk);
    for (int r = 0; r < nk; ++r) {
      h.sd_longterm[r] = half_normal();
      h.ar_sim[r] = unif(rng);
      h.sd_sim[r] = half_normal();
      h.sd_output[r] = half_normal();
    }
    spec.sims.push_back(std::move(h));
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Adaptive random-walk Metropolis fit.

struct McmcConfig {
  int iterations = 2000;
  int burn_in = 1000;
  int chains = 2;
  int draws = 100;  // thinned draws kept across all chains
};

struct FitDiagnostics {
  double acceptance_rate = 0.0;  // post burn-in, averaged over species blocks
  double max_split_rhat = 0.0;
  Vector split_rhat;  // per parameter
  int iterations = 0, burn_in = 0, chains = 0;
};

struct EnsemblePosterior {
  EnsembleLayout layout;
  PriorConfig prior;
  std::vector<std::string> names;  // P parameter names
  Matrix draws;                    // D x P, natural scale
  FitDiagnostics diagnostics;

  int num_draws() const { return static_cast<int>(draws.rows()); }

  EnsembleSpec spec_for_draw(int d) const {
    const auto map = detail::build_param_map(layout);
    EnsembleSpec spec = sample_prior_spec(layout, prior, 0);
    for (int p = 0; p < map.size(); ++p)
      detail::write_param(spec, map.entries[static_cast<size_t>(p)], draws(d, p));
    return spec;
  }
};

namespace detail {

// Haario-style covariance adaptation for one species block with a
// Robbins-Monro global scale tuned toward 0.234 acceptance.
struct BlockSampler {
  std::vector<int> params;  // entry indices
  int dim = 0;
  double log_lambda = 0.0;
  long n_seen = 0;
  Vector mean;
  Matrix m2;       // Welford sum of outer products
  Matrix chol;     // lower-triangular proposal factor
  long proposals = 0, accepts = 0;  // post burn-in

  void init(std::vector<int> p) {
    params = std::move(p);
    dim = static_cast<int>(params.size());
    mean = Vector::Zero(dim);
    m2 = Matrix::Zero(dim, dim);
    chol = Matrix::Identity(dim, dim) * (0.1 / std::sqrt(double(dim)));
  }

  void observe(const Vector& theta_block) {
    ++n_seen;
    const Vector d = theta_block - mean;
    mean += d / static_cast<double>(n_seen);
    m2 += d * (theta_block - mean).transpose();
  }

  void refresh_proposal() {
    if (n_seen < 2 * dim + 10) return;
    Matrix cov = m2 / static_cast<double>(n_seen - 1);
    const double ridge = 1e-9 + 1e-8 * cov.diagonal().maxCoeff();
    cov.diagonal().array() += ridge;
    cov *= 5.6644 / static_cast<double>(dim);  // 2.38^2 / d
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() == Eigen::Success) chol = llt.matrixL();
  }
};

}  // namespace detail

// Samples hyperparameters by species-blocked adaptive random-walk Metropolis.
// Each block proposal re-evaluates only that species' chain likelihood, so a
// full sweep costs one full-likelihood evaluation. All adaptation (covariance
// and scale) happens during burn-in only.
inline EnsemblePosterior fit(const EnsembleLayout& layout,
                             const SpeciesSeries& obs,
                             const std::vector<SpeciesSeries>& sims,
                             const McmcConfig& cfg, uint64_t seed,
                             const PriorConfig& prior = {}) {
  if (cfg.iterations <= 0 || cfg.burn_in < 0 || cfg.burn_in >= cfg.iterations)
    throw ValidationError("mcmc: burn-in must be < iterations");
  if (cfg.chains < 1) throw ValidationError("mcmc: need at least one chain");
  const int kept = cfg.iterations - cfg.burn_in;
  if (cfg.draws < cfg.chains || cfg.draws > kept * cfg.chains)
    throw ValidationError("mcmc: draws must lie in [chains, kept*chains]");

  const BoundEnsemble data(layout, obs, sims);
  const auto map = detail::build_param_map(layout);
  const int P = map.size();
  const int S = layout.n_species;

  std::vector<Matrix> chain_draws;  // per chain: kept x P natural scale
  long total_props = 0, total_accepts = 0;

  for (int c = 0; c < cfg.chains; ++c) {
    std::mt19937_64 rng(subseed(seed, "ensemble-chain", static_cast<uint64_t>(c)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    // Transformed state and working spec.
    Vector theta(P);
    EnsembleSpec spec = sample_prior_spec(layout, prior, 0);
    for (int p = 0; p < P; ++p) {
      const auto& e = map.entries[static_cast<size_t>(p)];
      const double natural = e.is_ar() ? 0.0 : prior.sd_scale;
      theta[p] = detail::to_transformed(e, natural);
      detail::write_param(spec, e, natural);
    }

    std::vector<detail::BlockSampler> blocks(static_cast<size_t>(S));
    for (int i = 0; i < S; ++i)
      blocks[static_cast<size_t>(i)].init(map.blocks[static_cast<size_t>(i)]);

    // Current per-species log targets.
    std::vector<double> cur_ll(static_cast<size_t>(S)), cur_lp(static_cast<size_t>(S));
    for (int i = 0; i < S; ++i) {
      cur_ll[static_cast<size_t>(i)] = data.chain_log_likelihood(i, spec);
      double lp = 0.0;
      for (int p : map.blocks[static_cast<size_t>(i)])
        lp += detail::log_prior_transformed(map.entries[static_cast<size_t>(p)],
                                            theta[p], prior);
      cur_lp[static_cast<size_t>(i)] = lp;
      if (!std::isfinite(cur_ll[static_cast<size_t>(i)] + lp))
        throw FitError("mcmc: non-finite log posterior at initialization", 0);
    }

    Matrix kept_draws(kept, P);
    for (int iter = 0; iter < cfg.iterations; ++iter) {
      const bool adapting = iter < cfg.burn_in;
      for (int i = 0; i < S; ++i) {
        auto& blk = blocks[static_cast<size_t>(i)];
        const int d = blk.dim;
        Vector cur_block(d), prop_block(d), xi(d);
        for (int j = 0; j < d; ++j) cur_block[j] = theta[blk.params[static_cast<size_t>(j)]];
        for (int j = 0; j < d; ++j) xi[j] = gauss(rng);
        prop_block = cur_block + std::exp(blk.log_lambda) * (blk.chol * xi);

        double prop_lp = 0.0;
        for (int j = 0; j < d; ++j)
          prop_lp += detail::log_prior_transformed(
              map.entries[static_cast<size_t>(blk.params[static_cast<size_t>(j)])],
              prop_block[j], prior);

        // Write proposal into the working spec, evaluate, revert on reject.
        for (int j = 0; j < d; ++j) {
          const auto& e = map.entries[static_cast<size_t>(blk.params[static_cast<size_t>(j)])];
          detail::write_param(spec, e, detail::to_natural(e, prop_block[j]));
        }
        // Proposals at extreme scales can overflow the filter (infinite or
        // zero innovation variance); such states carry no posterior mass.
        double prop_ll = -std::numeric_limits<double>::infinity();
        if (std::isfinite(prop_lp)) {
          try {
            prop_ll = data.chain_log_likelihood(i, spec);
          } catch (const NumericError&) {
            prop_ll = -std::numeric_limits<double>::infinity();
          }
        }

        const double log_alpha = (prop_ll + prop_lp) -
                                 (cur_ll[static_cast<size_t>(i)] + cur_lp[static_cast<size_t>(i)]);
        const bool accept = std::isfinite(log_alpha) &&
                            std::log(unif(rng) + 1e-300) < log_alpha;
        if (accept) {
          for (int j = 0; j < d; ++j) theta[blk.params[static_cast<size_t>(j)]] = prop_block[j];
          cur_ll[static_cast<size_t>(i)] = prop_ll;
          cur_lp[static_cast<size_t>(i)] = prop_lp;
        } else {
          for (int j = 0; j < d; ++j) {
            const auto& e = map.entries[static_cast<size_t>(blk.params[static_cast<size_t>(j)])];
            detail::write_param(spec, e, detail::to_natural(e, cur_block[j]));
          }
        }
        if (adapting) {
          const double rate = std::pow(static_cast<double>(iter + 1), -0.6);
          blk.log_lambda += rate * ((accept ? 1.0 : 0.0) - 0.234);
          Vector now(d);
          for (int j = 0; j < d; ++j) now[j] = theta[blk.params[static_cast<size_t>(j)]];
          blk.observe(now);
          if (iter % 20 == 19) blk.refresh_proposal();
        } else {
          ++blk.proposals;
          if (accept) ++blk.accepts;
        }
      }
      if (iter >= cfg.burn_in) {
        const int r = iter - cfg.burn_in;
        for (int p = 0; p < P; ++p)
          kept_draws(r, p) =
              detail::to_natural(map.entries[static_cast<size_t>(p)], theta[p]);
      }
    }
    for (const auto& blk : blocks) {
      total_props += blk.proposals;
      total_accepts += blk.accepts;
    }
    chain_draws.push_back(std::move(kept_draws));
  }

  EnsemblePosterior post;
  post.layout = layout;
  post.prior = prior;
  for (const auto& e : map.entries) post.names.push_back(e.name);

  FitDiagnostics diag;
  diag.iterations = cfg.iterations;
  diag.burn_in = cfg.burn_in;
  diag.chains = cfg.chains;
  diag.acceptance_rate =
      total_props > 0 ? static_cast<double>(total_accepts) / static_cast<double>(total_props)
                      : 0.0;
  diag.split_rhat = Vector::Zero(P);
  for (int p = 0; p < P; ++p) {
    std::vector<std::vector<double>> seqs;
    for (const auto& cd : chain_draws) {
      std::vector<double> s(static_cast<size_t>(kept));
      for (int r = 0; r < kept; ++r) s[static_cast<size_t>(r)] = cd(r, p);
      seqs.push_back(std::move(s));
    }
    diag.split_rhat[p] = split_rhat(seqs);
  }
  diag.max_split_rhat = diag.split_rhat.maxCoeff();
  post.diagnostics = diag;

  // Thin: D draws spread evenly over chains, evenly strided within a chain
  // (stride s keeps indices s-1, 2s-1, ...).
  post.draws = Matrix::Zero(cfg.draws, P);
  int out_row = 0;
  const int base = cfg.draws / cfg.chains;
  const int rem = cfg.draws % cfg.chains;
  for (int c = 0; c < cfg.chains; ++c) {
    const int n_c = base + (c < rem ? 1 : 0);
    if (n_c == 0) continue;
    const int stride = kept / n_c;
    if (stride < 1)
      throw ValidationError("mcmc: not enough kept draws to thin");
    for (int j = 0; j < n_c; ++j)
      post.draws.row(out_row++) = chain_draws[static_cast<size_t>(c)].row((j + 1) * stride - 1);
  }
  return post;
}

// ---------------------------------------------------------------------------
// Posterior archive: CSV of (draw, param, value), exact round-trip.

inline void save_posterior(const std::string& path,
                           const EnsemblePosterior& post) {
  csv::Writer w(path);
  w.header({"draw", "param", "value"});
  for (int d = 0; d < post.num_draws(); ++d)
    for (size_t p = 0; p < post.names.size(); ++p) {
      auto row = w.row();
      row.integer(d).text(post.names[p]).num(post.draws(d, static_cast<int>(p)));
    }
}

inline EnsemblePosterior load_posterior(const std::string& path,
                                        const EnsembleLayout& layout,
                                        const PriorConfig& prior = {}) {
  const csv::Table t = csv::read_file(path);
  t.require_columns({"draw", "param", "value"});
  const int cd = t.column("draw"), cp = t.column("param"), cv = t.column("value");

  const auto map = detail::build_param_map(layout);
  std::vector<std::string> names;
  for (const auto& e : map.entries) names.push_back(e.name);

  int max_draw = -1;
  for (const auto& row : t.rows)
    max_draw = std::max(max_draw, static_cast<int>(t.integer(row, cd)));
  if (max_draw < 0) throw ParseError(path + ": no posterior draws");

  EnsemblePosterior post;
  post.layout = layout;
  post.prior = prior;
  post.names = names;
  post.draws = Matrix::Constant(max_draw + 1, map.size(),
                                std::numeric_limits<double>::quiet_NaN());
  for (const auto& row : t.rows) {
    const int d = static_cast<int>(t.integer(row, cd));
    const std::string& name = t.field(row, cp);
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end())
      throw ParseError(path + ":" + std::to_string(row.line) +
                       ": unknown parameter '" + name + "'");
    post.draws(d, static_cast<int>(it - names.begin())) = t.number(row, cv);
  }
  if (post.draws.hasNaN())
    throw ParseError(path + ": posterior archive is missing draw/param cells");
  return post;
}

// ---------------------------------------------------------------------------
// Mixture summaries at the horizon year.

struct LongTermSummary {
  Vector yield_mean;  // log tonnes, mixture expectation
  Vector ssb_q25;     // log tonnes, mixture 25th percentile
};

// Inputs are per-draw horizon marginals (rows = draws, cols = species).
inline LongTermSummary long_term_summaries(const Matrix& yield_mean,
                                           const Matrix& yield_var,
                                           const Matrix& ssb_mean,
                                           const Matrix& ssb_var) {
  const int D = static_cast<int>(ssb_mean.rows());
  const int n = static_cast<int>(ssb_mean.cols());
  if (yield_mean.rows() != D || yield_mean.cols() != n ||
      yield_var.rows() != D || ssb_var.rows() != D)
    throw ValidationError("long_term_summaries: shape mismatch");
  LongTermSummary out;
  out.yield_mean = yield_mean.colwise().mean();
  out.ssb_q25 = Vector::Zero(n);
  std::vector<double> means(static_cast<size_t>(D)), sds(static_cast<size_t>(D));
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < D; ++d) {
      means[static_cast<size_t>(d)] = ssb_mean(d, i);
      sds[static_cast<size_t>(d)] = std::sqrt(std::max(0.0, ssb_var(d, i)));
    }
    out.ssb_q25[i] = gaussian_mixture_quantile(means, sds, 0.25);
  }
  return out;
}

}  // namespace mmsy::ensemble
