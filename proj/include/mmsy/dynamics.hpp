// Desk-scale multispecies operating models behind a common simulator port.
// Four structurally distinct annual-step biomass models stand in for the
// external simulators: an additive Lotka-Volterra step, a delayed
// density-dependence variant, a saturating-interaction variant and a
// multiplicative (Ricker) variant that omits sole from its reported output.
//
// All models integrate tonnes internally and report natural-log tonnes with
// a floor at kLogFloor; per-year yield obeys yield_i = F_i * B_i evaluated at
// start-of-year biomass.
#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mmsy/errors.hpp"
#include "mmsy/types.hpp"

namespace mmsy::dynamics {

enum class ModelVariant { kEuler, kDelayed, kSaturating, kRicker };

inline const char* to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::kEuler: return "euler";
    case ModelVariant::kDelayed: return "delayed";
    case ModelVariant::kSaturating: return "saturating";
    case ModelVariant::kRicker: return "ricker";
  }
  return "?";
}

// A harvested community. State index j models global species `species[j]`;
// a community may cover any subset of the catalog (tests use one species,
// the built-in ensemble uses all nine).
struct OperatingModel {
  ModelVariant variant = ModelVariant::kEuler;
  std::vector<int> species;  // global 0-based species id per state entry
  Vector r;                  // intrinsic growth, 1/year
  Vector k;                  // carrying capacity, tonnes
  Matrix a;                  // interactions, 1/(tonnes*year); a(i,i) = -r_i/k_i
  Vector ssb_fraction;       // SSB = fraction * total biomass
  Vector b_init;             // biomass at the start of the driving history
  Vector half_sat;           // kSaturating: per-prey half-saturation, tonnes

  int size() const { return static_cast<int>(species.size()); }

  void validate() const {
    const int n = size();
    if (r.size() != n || k.size() != n || a.rows() != n || a.cols() != n ||
        ssb_fraction.size() != n || b_init.size() != n)
      throw ValidationError("operating model: dimension mismatch");
    for (int i = 0; i < n; ++i) {
      if (!(k[i] > 0.0))
        throw ValidationError("operating model: carrying capacity must be > 0");
      if (!(a(i, i) < 0.0))
        throw ValidationError("operating model: self-limitation a(i,i) must be < 0");
      if (!(b_init[i] > 0.0) || !(ssb_fraction[i] > 0.0))
        throw ValidationError("operating model: biomass terms must be > 0");
    }
    if (variant == ModelVariant::kSaturating &&
        (half_sat.size() != n || (half_sat.array() <= 0.0).any()))
      throw ValidationError("operating model: half_sat must be positive");
  }
};

// Row-selection view of a model: which species simulator k reports (the mask
// M_k has one 1 per row) and over which years T_k.
struct SimulatorPort {
  int id = 0;                // k, 1-based
  std::string name;
  std::vector<int> species;  // reported global species ids, ascending
  YearRange years;

  int rows() const { return static_cast<int>(species.size()); }

  Matrix mask(int n_total = kNumSpecies) const {
    Matrix m = Matrix::Zero(rows(), n_total);
    for (int r = 0; r < rows(); ++r) m(r, species[static_cast<size_t>(r)]) = 1.0;
    return m;
  }

  void validate() const {
    years.validate("simulator years");
    for (size_t i = 0; i < species.size(); ++i) {
      if (species[i] < 0 || species[i] >= kNumSpecies)
        throw ValidationError("simulator port: species id out of range");
      if (i > 0 && species[i] <= species[i - 1])
        throw ValidationError("simulator port: species ids must be ascending");
    }
  }
};

namespace detail {

inline double floored_log(double tonnes) {
  if (!(tonnes > 0.0)) return kLogFloor;
  return std::max(std::log(tonnes), kLogFloor);
}

// One annual step; `b_lag` is the previous year's biomass (delayed variant).
inline Vector step(const OperatingModel& m, const Vector& b, const Vector& b_lag,
                   const Vector& f) {
  switch (m.variant) {
    case ModelVariant::kEuler:
      return b.array() * (1.0 + (m.r + m.a * b - f).array());
    case ModelVariant::kDelayed:
      return b.array() * (1.0 + (m.r + m.a * b_lag - f).array());
    case ModelVariant::kSaturating: {
      const Vector q =
          b.array() / (1.0 + (b.array() / m.half_sat.array()));
      return b.array() * (1.0 + (m.r + m.a * q - f).array());
    }
    case ModelVariant::kRicker:
      return b.array() * (m.r + m.a * b - f).array().exp();
  }
  throw Error("unreachable model variant");
}

}  // namespace detail

// Integrates the model from the start of the driving history to the port's
// last year. F is taken from `history` through its final year and from
// `scenario` afterwards. Returns (yield, ssb) series over T_k restricted to
// the port's species rows.
inline std::pair<SpeciesSeries, SpeciesSeries> run_scenario(
    const OperatingModel& model, const SimulatorPort& port,
    const FishingHistory& history, const FishingScenario& scenario) {
  model.validate();
  port.validate();
  history.validate();
  scenario.validate();
  if (history.years.first > port.years.first)
    throw ValidationError("run_scenario: history must start at or before " +
                          std::to_string(port.years.first));

  const int n = model.size();
  std::vector<int> state_row(kNumSpecies, -1);
  for (int j = 0; j < n; ++j)
    state_row[static_cast<size_t>(model.species[static_cast<size_t>(j)])] = j;
  for (int id : port.species)
    if (state_row[static_cast<size_t>(id)] < 0)
      throw ValidationError("run_scenario: port reports a species the model "
                            "does not carry");

  SpeciesSeries yield =
      SpeciesSeries::empty(OutputKind::kYield, port.years, port.species);
  SpeciesSeries ssb =
      SpeciesSeries::empty(OutputKind::kSsb, port.years, port.species);

  Vector b = model.b_init;
  Vector b_lag = model.b_init;
  Vector f(n);
  for (int year = history.years.first; year <= port.years.last; ++year) {
    for (int j = 0; j < n; ++j) {
      const int id = model.species[static_cast<size_t>(j)];
      f[j] = year <= history.years.last ? history.at(id, year) : scenario[id];
    }
    if (port.years.contains(year)) {
      for (int row = 0; row < port.rows(); ++row) {
        const int j = state_row[static_cast<size_t>(
            port.species[static_cast<size_t>(row)])];
        yield.set(row, year, detail::floored_log(f[j] * b[j]));
        ssb.set(row, year, detail::floored_log(model.ssb_fraction[j] * b[j]));
      }
    }
    if (year == port.years.last) break;

    Vector next = detail::step(model, b, b_lag, f);
    if (!next.allFinite())
      throw DivergedError("operating model state non-finite in " +
                              std::to_string(year + 1),
                          year + 1);
    b_lag = b;
    b = next.array().max(std::exp(kLogFloor));
  }
  return {std::move(yield), std::move(ssb)};
}

// ---------------------------------------------------------------------------
// Built-in community parameterizations.

namespace detail {

// Base community scale shared by every model; magnitudes are loosely North
// Sea shaped (industrial stocks large and fast, benthic flatfish small and
// slow). Individual models jitter these.
struct BaseCommunity {
  std::array<double, kNumSpecies> r;
  std::array<double, kNumSpecies> k;
};

inline const BaseCommunity& base_community() {
  static const BaseCommunity base{
      // sandeel, n.pout, herring, whiting, sole, plaice, haddock, cod, saithe
      {1.20, 1.25, 0.80, 0.90, 0.55, 0.50, 0.70, 0.60, 0.55},
      {2.5e6, 1.5e6, 3.0e6, 8.0e5, 1.2e5, 9.0e5, 7.0e5, 1.0e6, 6.0e5}};
  return base;
}

// Predator-prey sign pattern (predator, prey, strength scale). Positive for
// the predator, negative for the prey, scaled below by r and K.
struct Link {
  int pred, prey;
  double w;
};

inline const std::vector<Link>& food_web() {
  static const std::vector<Link> web{
      {7, 2, 0.10}, {7, 0, 0.08}, {7, 1, 0.06}, {7, 3, 0.05}, {7, 6, 0.04},
      {8, 1, 0.09}, {8, 2, 0.07}, {8, 0, 0.04},
      {3, 0, 0.08}, {3, 1, 0.07}, {3, 2, 0.03},
      {6, 0, 0.06}, {6, 1, 0.05},
      {2, 0, 0.03},
  };
  return web;
}

inline OperatingModel community_model(ModelVariant variant, uint64_t seed,
                                      double interaction_scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(0.85, 1.15);
  std::uniform_real_distribution<double> frac(0.40, 0.80);
  std::uniform_real_distribution<double> depletion(0.45, 0.70);

  const auto& base = base_community();
  OperatingModel m;
  m.variant = variant;
  m.species.resize(kNumSpecies);
  m.r.resize(kNumSpecies);
  m.k.resize(kNumSpecies);
  m.ssb_fraction.resize(kNumSpecies);
  m.b_init.resize(kNumSpecies);
  for (int i = 0; i < kNumSpecies; ++i) {
    m.species[static_cast<size_t>(i)] = i;
    m.r[i] = base.r[static_cast<size_t>(i)] * jitter(rng);
    m.k[i] = base.k[static_cast<size_t>(i)] * jitter(rng);
    m.ssb_fraction[i] = frac(rng);
    m.b_init[i] = m.k[i] * depletion(rng);
  }
  m.a = Matrix::Zero(kNumSpecies, kNumSpecies);
  for (int i = 0; i < kNumSpecies; ++i) m.a(i, i) = -m.r[i] / m.k[i];
  for (const Link& link : food_web()) {
    const double s = interaction_scale * jitter(rng);
    // Benefit to the predator from prey biomass, cost to the prey from
    // predator biomass, both small relative to self-limitation.
    m.a(link.pred, link.prey) += s * link.w * m.r[link.pred] / m.k[link.prey];
    m.a(link.prey, link.pred) -= s * link.w * m.r[link.prey] / m.k[link.pred];
  }
  // Benthic competition between sole and plaice.
  {
    std::uniform_real_distribution<double> comp(0.02, 0.05);
    const double c = interaction_scale * comp(rng);
    m.a(4, 5) -= c * m.r[4] / m.k[5];
    m.a(5, 4) -= c * m.r[5] / m.k[4];
  }
  if (variant == ModelVariant::kSaturating) m.half_sat = 3.0 * m.k;
  return m;
}

}  // namespace detail

// The four built-in simulators. Year coverage varies by simulator and the
// Ricker model reports eight species, omitting sole.
inline std::vector<std::pair<OperatingModel, SimulatorPort>> builtin_ensemble(
    uint64_t seed) {
  std::vector<std::pair<OperatingModel, SimulatorPort>> out;

  auto add = [&](ModelVariant variant, int id, const char* name,
                 YearRange years, double scale) {
    OperatingModel m =
        detail::community_model(variant, subseed(seed, "simulator", id), scale);
    SimulatorPort port;
    port.id = id;
    port.name = name;
    port.years = years;
    for (int i = 0; i < kNumSpecies; ++i) port.species.push_back(i);
    out.emplace_back(std::move(m), std::move(port));
  };

  add(ModelVariant::kEuler, 1, "lv-additive", {1991, 2050}, 1.0);
  add(ModelVariant::kDelayed, 2, "lagged-density", {1986, 2050}, 0.8);
  add(ModelVariant::kSaturating, 3, "saturating", {1984, 2050}, 1.2);
  add(ModelVariant::kRicker, 4, "ricker-no-sole", {1984, 2050}, 0.9);

  // The Ricker model does not cover sole: decouple it in the interaction
  // matrix and drop it from the reported rows.
  OperatingModel& ricker = out.back().first;
  for (int i = 0; i < kNumSpecies; ++i)
    if (i != 4) {
      ricker.a(4, i) = 0.0;
      ricker.a(i, 4) = 0.0;
    }
  SimulatorPort& port4 = out.back().second;
  port4.species.erase(port4.species.begin() + 4);

  for (auto& [model, port] : out) {
    model.validate();
    port.validate();
  }
  return out;
}

// A fifth community, structurally distinct from all four simulators, used to
// manufacture the bundled synthetic observations.
inline OperatingModel nature_model(uint64_t seed) {
  OperatingModel m = detail::community_model(ModelVariant::kSaturating,
                                             subseed(seed, "nature"), 1.1);
  m.half_sat = 2.0 * m.k;  // stronger saturation than simulator 3
  m.validate();
  return m;
}

}  // namespace mmsy::dynamics
