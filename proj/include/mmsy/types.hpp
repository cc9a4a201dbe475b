// Shared domain types: species catalog, fishing scenarios, log-tonnes series,
// run configuration and the master-seed fan-out.
//
// Conventions used across the whole library:
//   * species are indexed 0..8 in code (catalog stores the 1-based index),
//   * all biomass/yield series are in natural-log tonnes,
//   * fishing mortality F is per year, constrained to [0, 2].
#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mmsy/errors.hpp"

namespace mmsy {

inline constexpr int kNumSpecies = 9;
inline constexpr double kFLower = 0.0;
inline constexpr double kFUpper = 2.0;
// Collapsed stocks are reported at this log-tonnes floor so downstream
// Gaussian machinery never sees -inf.
inline constexpr double kLogFloor = -20.0;

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Years

struct YearRange {
  int first = 0;
  int last = 0;  // inclusive

  int size() const { return last - first + 1; }
  bool contains(int year) const { return year >= first && year <= last; }
  bool contains(const YearRange& other) const {
    return first <= other.first && other.last <= last;
  }
  int offset(int year) const { return year - first; }
  bool operator==(const YearRange&) const = default;

  void validate(const char* what) const {
    if (last < first)
      throw ValidationError(std::string(what) + ": empty year range");
  }
};

// ---------------------------------------------------------------------------
// Output kinds (the two ensemble models)

enum class OutputKind { kYield = 0, kSsb = 1 };

inline const char* to_string(OutputKind k) {
  return k == OutputKind::kYield ? "yield" : "ssb";
}

inline OutputKind output_kind_from_string(std::string_view s) {
  if (s == "yield") return OutputKind::kYield;
  if (s == "ssb") return OutputKind::kSsb;
  throw ValidationError("unknown output kind: " + std::string(s));
}

// ---------------------------------------------------------------------------
// FishingScenario: the decision variable, F in [0,2]^9.

struct FishingScenario {
  std::array<double, kNumSpecies> f{};

  double& operator[](int i) { return f[static_cast<size_t>(i)]; }
  double operator[](int i) const { return f[static_cast<size_t>(i)]; }

  bool in_bounds() const {
    for (double v : f)
      if (!(v >= kFLower && v <= kFUpper)) return false;
    return true;
  }

  void validate(const std::string& label = "scenario") const {
    for (int i = 0; i < kNumSpecies; ++i) {
      const double v = f[static_cast<size_t>(i)];
      if (!(v >= kFLower && v <= kFUpper))
        throw ValidationError(label + ": F" + std::to_string(i + 1) + " = " +
                              std::to_string(v) + " outside [0,2]");
    }
  }

  bool operator==(const FishingScenario&) const = default;
};

// ---------------------------------------------------------------------------
// SpeciesCatalog: Table-style registry of the nine stocks.

struct SpeciesInfo {
  int index = 0;  // 1-based, contiguous
  std::string name;
  double b_lim_tonnes = 0.0;
  double price_per_tonne = 0.0;
  std::optional<double> ss_fmsy;  // absent for stocks without an SS-FMSY
};

struct SpeciesCatalog {
  std::vector<SpeciesInfo> entries;

  int size() const { return static_cast<int>(entries.size()); }
  const SpeciesInfo& at(int i) const { return entries.at(static_cast<size_t>(i)); }

  int index_of(std::string_view name) const {
    for (size_t i = 0; i < entries.size(); ++i)
      if (entries[i].name == name) return static_cast<int>(i);
    return -1;
  }

  Vector log_b_lim() const {
    Vector v(size());
    for (int i = 0; i < size(); ++i) v[i] = std::log(at(i).b_lim_tonnes);
    return v;
  }

  void validate() const {
    if (entries.size() != kNumSpecies)
      throw ValidationError("catalog: expected " + std::to_string(kNumSpecies) +
                            " species, got " + std::to_string(entries.size()));
    for (size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      if (e.index != static_cast<int>(i) + 1)
        throw ValidationError("catalog: species indices must be 1..9 contiguous");
      if (!(e.b_lim_tonnes > 0.0))
        throw ValidationError("catalog: " + e.name + ": b_lim must be > 0");
      if (!(e.price_per_tonne >= 0.0))
        throw ValidationError("catalog: " + e.name + ": price must be >= 0");
      for (size_t j = 0; j < i; ++j)
        if (entries[j].name == e.name)
          throw ValidationError("catalog: duplicate species " + e.name);
    }
  }
};

// ---------------------------------------------------------------------------
// SpeciesSeries: species x year matrix of log tonnes with presence mask.
// `species` maps rows to global species ids; simulator outputs that model a
// subset of the community carry fewer rows than the full catalog.

struct SpeciesSeries {
  OutputKind kind = OutputKind::kYield;
  YearRange years;
  std::vector<int> species;  // global 0-based species id per row
  Matrix log_values;         // rows = species.size(), cols = years.size()
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> present;

  int rows() const { return static_cast<int>(species.size()); }

  static SpeciesSeries empty(OutputKind kind, YearRange years,
                             std::vector<int> species) {
    SpeciesSeries s;
    s.kind = kind;
    s.years = years;
    s.species = std::move(species);
    s.log_values = Matrix::Zero(s.rows(), years.size());
    s.present.setConstant(s.rows(), years.size(), false);
    return s;
  }

  void set(int row, int year, double log_tonnes) {
    log_values(row, years.offset(year)) = log_tonnes;
    present(row, years.offset(year)) = true;
  }

  void validate() const {
    if (log_values.rows() != rows() || log_values.cols() != years.size() ||
        present.rows() != rows() || present.cols() != years.size())
      throw ValidationError("series: matrix dimensions do not match mask/years");
    for (int r = 0; r < rows(); ++r)
      for (int c = 0; c < years.size(); ++c)
        if (present(r, c) && !std::isfinite(log_values(r, c)))
          throw ValidationError("series: non-finite value at species row " +
                                std::to_string(r) + ", year " +
                                std::to_string(years.first + c));
  }
};

// ---------------------------------------------------------------------------
// Historical fishing mortality, 1984-2017, full community.

struct FishingHistory {
  YearRange years;
  Matrix f;  // kNumSpecies x years.size()

  double at(int species, int year) const { return f(species, years.offset(year)); }

  void validate() const {
    if (f.rows() != kNumSpecies || f.cols() != years.size())
      throw ValidationError("fishing history: dimensions do not match years");
    if ((f.array() < 0.0).any())
      throw ValidationError("fishing history: negative F");
  }
};

// ---------------------------------------------------------------------------
// RunConfig: every knob of the pipeline, with the paper-scale defaults.

struct RunConfig {
  YearRange history{1984, 2017};
  int horizon = 2050;
  double risk_threshold = 0.25;        // Pr(SSB < B_lim) must stay below this
  double acceptance_probability = 0.75;  // ledger counts Pr(SSB > B_lim) >= this
  std::array<int, 4> round_sizes{196, 100, 100, 100};
  int init_pool = 10000;    // 9-D LHC size used to initialize the search
  int response_pool = 500;  // 1-D LHC size per best-response sweep
  int draws = 100;          // posterior draws kept for emulation/search
  int mcmc_iterations = 2000;
  int mcmc_burn_in = 1000;
  int mcmc_chains = 2;
  int emulator_restarts = 2;
  int emulator_max_iter = 220;
  int sobol_skip = 0;
  int msy_grid = 500;  // 1-D grid for the SS-MSY diagnostic
  int threads = 0;     // 0 = hardware concurrency

  YearRange grid() const { return {history.first, horizon}; }

  void validate() const {
    history.validate("history");
    if (horizon <= history.last)
      throw ValidationError("config: horizon must exceed the historical range");
    if (!(risk_threshold > 0.0 && risk_threshold < 1.0))
      throw ValidationError("config: risk_threshold must be in (0,1)");
    if (!(acceptance_probability > 0.0 && acceptance_probability < 1.0))
      throw ValidationError("config: acceptance_probability must be in (0,1)");
    for (int s : round_sizes)
      if (s <= 0) throw ValidationError("config: round sizes must be positive");
    if (init_pool <= 0 || response_pool <= 0 || draws <= 0)
      throw ValidationError("config: pool/draw counts must be positive");
    if (mcmc_iterations <= 0 || mcmc_chains <= 0)
      throw ValidationError("config: MCMC counts must be positive");
    if (mcmc_burn_in < 0 || mcmc_burn_in >= mcmc_iterations)
      throw ValidationError("config: burn-in must be < iterations");
    if (emulator_restarts <= 0 || emulator_max_iter <= 0 || msy_grid <= 1)
      throw ValidationError("config: optimizer/grid sizes must be positive");
    if (sobol_skip < 0) throw ValidationError("config: sobol_skip must be >= 0");
    if (threads < 0) throw ValidationError("config: threads must be >= 0");
    // One search candidate is produced per posterior draw, so rounds 2-4 must
    // request exactly `draws` scenarios each.
    for (size_t r = 1; r < round_sizes.size(); ++r)
      if (round_sizes[r] != draws)
        throw ValidationError(
            "config: round_sizes[2..4] must equal the posterior draw count (" +
            std::to_string(draws) + ")");
  }
};

// ---------------------------------------------------------------------------
// Master-seed fan-out. Sub-streams are derived from (master, label, index) so
// parallel work is reproducible regardless of scheduling.

namespace detail {
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}
}  // namespace detail

inline uint64_t subseed(uint64_t master, std::string_view label,
                        uint64_t index = 0) {
  uint64_t h = detail::splitmix64(master ^ detail::fnv1a(label));
  return detail::splitmix64(h ^ detail::splitmix64(index + 0x51ed2701ULL));
}

}  // namespace mmsy
