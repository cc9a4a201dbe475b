// Risk-constrained Nash-equilibrium search over long-term response surfaces.
//
// The decision problem: choose F in [0,2]^9 so that each species' fishery is
// at a best response (no unilateral F_i change raises that species' long-term
// yield) subject to every species' SSB 25th percentile staying above ln B_lim.
// The search runs coordinate best-response sweeps over sampled pools, one
// candidate per posterior draw, against whatever model supplies the response
// surfaces: fitted emulators in production, analytic games in tests.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmsy/csv.hpp"
#include "mmsy/design.hpp"
#include "mmsy/emulator.hpp"
#include "mmsy/errors.hpp"
#include "mmsy/parallel.hpp"
#include "mmsy/types.hpp"

namespace mmsy::nash {

// ---------------------------------------------------------------------------
// Response-surface abstraction.

// Long-term responses for one posterior draw: log 2050 yield and log SSB
// 25th percentile per species, as functions of the fishing scenario. The
// search needs point queries plus a 1-D sweep; the sweep has a virtual fast
// path because it dominates the runtime.
class LongTermModel {
public:
  virtual ~LongTermModel() = default;

  virtual double yield(int species, const FishingScenario& f) const = 0;
  virtual double ssb(int species, const FishingScenario& f) const = 0;

  // Evaluate yield of `species` and SSB of all nine species with F_species
  // swept over `pool` and the other coordinates fixed at `base`. Fills
  // yield_out (pool size) and ssb_out (9 x pool size).
  virtual void sweep(const FishingScenario& base, int species,
                     std::span<const double> pool, Vector& yield_out,
                     Matrix& ssb_out) const {
    const int m = static_cast<int>(pool.size());
    yield_out.resize(m);
    ssb_out.resize(kNumSpecies, m);
    FishingScenario f = base;
    for (int p = 0; p < m; ++p) {
      f[species] = pool[static_cast<size_t>(p)];
      yield_out[p] = yield(species, f);
      for (int j = 0; j < kNumSpecies; ++j) ssb_out(j, p) = ssb(j, f);
    }
  }
};

// The production model: one fitted surface per species and output kind,
// all belonging to the same posterior draw. Non-owning.
struct DrawSurfaces {
  std::array<const emulator::EmulatorSurface*, kNumSpecies> yield{};
  std::array<const emulator::EmulatorSurface*, kNumSpecies> ssb{};

  void validate() const {
    for (int i = 0; i < kNumSpecies; ++i)
      if (yield[static_cast<size_t>(i)] == nullptr ||
          ssb[static_cast<size_t>(i)] == nullptr)
        throw ValidationError("draw surfaces: missing surface for species " +
                              std::to_string(i + 1));
  }
};

class EmulatedModel final : public LongTermModel {
public:
  explicit EmulatedModel(DrawSurfaces surfaces) : s_(surfaces) {
    s_.validate();
  }

  double yield(int species, const FishingScenario& f) const override {
    return s_.yield[static_cast<size_t>(species)]->predicted_mean(f);
  }

  double ssb(int species, const FishingScenario& f) const override {
    return s_.ssb[static_cast<size_t>(species)]->predicted_mean(f);
  }

  // O(n) per pool value instead of O(n * active dims): amortizes the
  // correlation-product over the fixed coordinates once per sweep.
  void sweep(const FishingScenario& base, int species,
             std::span<const double> pool, Vector& yield_out,
             Matrix& ssb_out) const override {
    const int m = static_cast<int>(pool.size());
    yield_out.resize(m);
    ssb_out.resize(kNumSpecies, m);
    const emulator::SweepPredictor yp(*s_.yield[static_cast<size_t>(species)],
                                      base, species);
    for (int p = 0; p < m; ++p)
      yield_out[p] = yp.mean(pool[static_cast<size_t>(p)]);
    for (int j = 0; j < kNumSpecies; ++j) {
      const emulator::SweepPredictor sp(*s_.ssb[static_cast<size_t>(j)], base,
                                        species);
      for (int p = 0; p < m; ++p)
        ssb_out(j, p) = sp.mean(pool[static_cast<size_t>(p)]);
    }
  }

private:
  DrawSurfaces s_;
};

// ---------------------------------------------------------------------------
// Search configuration and result records.

struct SearchConfig {
  int init_pool = 10000;    // 9-D LHC size for initialization
  int response_pool = 500;  // 1-D LHC size per best-response sweep
  int msy_grid = 500;       // grid for the single-species MSY diagnostic
  Vector log_b_lim;         // ln B_lim per species (log tonnes)

  // Width of one stratum of the response pool: the operational tolerance for
  // the fixed-point stopping test.
  double pool_resolution() const {
    return (kFUpper - kFLower) / response_pool;
  }

  void validate() const {
    if (init_pool < 1 || response_pool < 1)
      throw ValidationError("search: pool sizes must be positive");
    if (msy_grid < 2) throw ValidationError("search: msy_grid must be >= 2");
    if (log_b_lim.size() != kNumSpecies)
      throw ValidationError("search: log_b_lim must list all 9 species");
    for (int i = 0; i < kNumSpecies; ++i)
      if (!std::isfinite(log_b_lim[i]))
        throw ValidationError("search: log_b_lim must be finite");
  }
};

inline SearchConfig search_config(const RunConfig& run, Vector log_b_lim) {
  SearchConfig cfg;
  cfg.init_pool = run.init_pool;
  cfg.response_pool = run.response_pool;
  cfg.msy_grid = run.msy_grid;
  cfg.log_b_lim = std::move(log_b_lim);
  cfg.validate();
  return cfg;
}

struct SweepResult {
  FishingScenario scenario;
  // True where no pool value satisfied all nine SSB constraints; that
  // coordinate was left unchanged.
  std::array<bool, kNumSpecies> infeasible{};
};

struct InitResult {
  FishingScenario scenario;
  // True where no pool scenario satisfied the species' own SSB constraint;
  // the unconstrained yield argmax was used instead.
  std::array<bool, kNumSpecies> fallback{};
};

struct NashCandidate {
  FishingScenario scenario;
  Vector yields;  // emulated long-term yield per species (log tonnes)
  Vector ssb;     // emulated SSB 25th percentile per species (log tonnes)
  std::array<bool, kNumSpecies> risk_ok{};  // ssb[i] > ln B_lim_i
  int round = 0;
  int draw = 0;

  // Search diagnostics.
  int iterations = 0;
  std::array<bool, kNumSpecies> init_fallback{};
  std::array<bool, kNumSpecies> last_sweep_infeasible{};
  // Set by the final acceptance pass, not by the search itself.
  bool fixed_point = false;

  bool all_risk_ok() const {
    return std::all_of(risk_ok.begin(), risk_ok.end(),
                       [](bool b) { return b; });
  }
};

// ---------------------------------------------------------------------------
// Algorithm pieces.

namespace detail {

// Index of the maximal value, restricted to entries where feasible(p) holds.
// Returns -1 when nothing is feasible. First index wins ties.
template <typename Feasible>
int feasible_argmax(const Vector& values, Feasible&& feasible) {
  int best = -1;
  for (int p = 0; p < values.size(); ++p) {
    if (!feasible(p)) continue;
    if (best < 0 || values[p] > values[best]) best = p;
  }
  return best;
}

}  // namespace detail

// One pass of the coordinate best-response loop: species in order 1..9, each
// choosing the yield-maximizing F_i from a fresh 1-D LHC pool (plus the
// incumbent value, so a feasible incumbent can never be made worse) subject
// to all nine SSB percentiles clearing ln B_lim. Each update feeds the next
// species' sweep.
inline SweepResult best_response_iteration(const LongTermModel& model,
                                           const SearchConfig& cfg,
                                           const FishingScenario& current,
                                           std::mt19937_64& rng) {
  cfg.validate();
  SweepResult out;
  out.scenario = current;
  std::vector<double> pool(static_cast<size_t>(cfg.response_pool) + 1);
  Vector yield_vals;
  Matrix ssb_vals;
  for (int i = 0; i < kNumSpecies; ++i) {
    const design::DesignBatch batch =
        design::lhc(cfg.response_pool, 1, kFLower, kFUpper, rng());
    for (int p = 0; p < cfg.response_pool; ++p)
      pool[static_cast<size_t>(p)] = batch.points(p, 0);
    pool.back() = out.scenario[i];

    model.sweep(out.scenario, i, pool, yield_vals, ssb_vals);
    const int pick = detail::feasible_argmax(yield_vals, [&](int p) {
      for (int j = 0; j < kNumSpecies; ++j)
        if (!(ssb_vals(j, p) > cfg.log_b_lim[j])) return false;
      return true;
    });
    if (pick < 0)
      out.infeasible[static_cast<size_t>(i)] = true;
    else
      out.scenario[i] = pool[static_cast<size_t>(pick)];
  }
  return out;
}

// Starting point: over a 9-D LHC pool, each species independently takes the
// F_i of the scenario maximizing its own yield subject to its own SSB
// constraint. When no scenario satisfies the constraint the unconstrained
// argmax is used and flagged.
inline InitResult initialize(const LongTermModel& model,
                             const SearchConfig& cfg, uint64_t seed) {
  cfg.validate();
  const design::DesignBatch batch =
      design::lhc(cfg.init_pool, kNumSpecies, kFLower, kFUpper, seed);
  const int n = batch.size();

  InitResult out;
  FishingScenario f;
  Vector yield_i(n), ssb_i(n);
  for (int i = 0; i < kNumSpecies; ++i) {
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < kNumSpecies; ++c) f[c] = batch.points(r, c);
      yield_i[r] = model.yield(i, f);
      ssb_i[r] = model.ssb(i, f);
    }
    int pick = detail::feasible_argmax(
        yield_i, [&](int r) { return ssb_i[r] > cfg.log_b_lim[i]; });
    if (pick < 0) {
      out.fallback[static_cast<size_t>(i)] = true;
      pick = detail::feasible_argmax(yield_i, [](int) { return true; });
    }
    out.scenario[i] = batch.points(pick, i);
  }
  return out;
}

// One candidate from one posterior draw: seeded initialization followed by a
// uniformly random number of best-response sweeps in [26,100]. All randomness
// derives from (master_seed, draw), so draws can run in any order or thread.
inline NashCandidate find_candidate(const LongTermModel& model,
                                    const SearchConfig& cfg,
                                    uint64_t master_seed, int draw,
                                    int round = 0) {
  cfg.validate();
  std::mt19937_64 rng(subseed(master_seed, "nash-candidate", draw));
  const int iterations = std::uniform_int_distribution<int>(26, 100)(rng);

  NashCandidate cand;
  cand.round = round;
  cand.draw = draw;
  cand.iterations = iterations;

  const InitResult init = initialize(model, cfg, rng());
  cand.init_fallback = init.fallback;
  FishingScenario f = init.scenario;
  SweepResult sweep;
  for (int k = 0; k < iterations; ++k) {
    sweep = best_response_iteration(model, cfg, f, rng);
    f = sweep.scenario;
  }
  cand.scenario = f;
  cand.last_sweep_infeasible = sweep.infeasible;

  cand.yields.resize(kNumSpecies);
  cand.ssb.resize(kNumSpecies);
  for (int i = 0; i < kNumSpecies; ++i) {
    cand.yields[i] = model.yield(i, f);
    cand.ssb[i] = model.ssb(i, f);
    cand.risk_ok[static_cast<size_t>(i)] = cand.ssb[i] > cfg.log_b_lim[i];
  }
  return cand;
}

// One candidate per posterior draw. models[d] carries draw d's surfaces.
inline std::vector<NashCandidate> find_candidates(
    std::span<const LongTermModel* const> models, const SearchConfig& cfg,
    uint64_t master_seed, int round = 0, int threads = 1) {
  cfg.validate();
  const int draws = static_cast<int>(models.size());
  std::vector<NashCandidate> out(static_cast<size_t>(draws));
  parallel_for(draws, threads, [&](int d) {
    out[static_cast<size_t>(d)] =
        find_candidate(*models[static_cast<size_t>(d)], cfg, master_seed, d,
                       round);
  });
  return out;
}

// Stopping test used at final acceptance: one more sweep moves no coordinate
// by more than one pool stratum. Species whose sweeps come back infeasible
// keep their coordinate, which trivially passes; their risk flags fail
// acceptance separately.
inline bool fixed_point_check(const LongTermModel& model,
                              const SearchConfig& cfg,
                              const FishingScenario& f, uint64_t seed) {
  std::mt19937_64 rng(seed);
  const SweepResult next = best_response_iteration(model, cfg, f, rng);
  for (int i = 0; i < kNumSpecies; ++i)
    if (std::abs(next.scenario[i] - f[i]) > cfg.pool_resolution()) return false;
  return true;
}

// Single-species MSY diagnostic: the F_i maximizing emulated yield_i on a
// uniform grid, with the other coordinates held at `others`. Reported to show
// how the per-species optimum shifts with the rest of the fleet; no SSB
// constraint is applied.
inline double ss_msy_diagnostic(const LongTermModel& model,
                                const SearchConfig& cfg, int species,
                                const FishingScenario& others) {
  cfg.validate();
  if (species < 0 || species >= kNumSpecies)
    throw ValidationError("ss_msy: species index out of range");
  FishingScenario f = others;
  const double step = (kFUpper - kFLower) / (cfg.msy_grid - 1);
  double best_f = kFLower;
  double best_y = -std::numeric_limits<double>::infinity();
  for (int g = 0; g < cfg.msy_grid; ++g) {
    const double v = kFLower + step * g;
    f[species] = v;
    const double y = model.yield(species, f);
    if (y > best_y) {
      best_y = y;
      best_f = v;
    }
  }
  return best_f;
}

// ---------------------------------------------------------------------------
// Round bookkeeping and the two result file formats.

// Per-round record of every scenario evaluated through the ensemble and, for
// each, how many species had an acceptable long-term risk
// (Pr(SSB_2050 > B_lim) >= the configured acceptance probability).
struct RoundLedger {
  struct Entry {
    FishingScenario scenario;
    int acceptable_species = 0;
  };
  std::vector<std::vector<Entry>> rounds;

  int num_rounds() const { return static_cast<int>(rounds.size()); }

  void validate() const {
    for (const auto& round : rounds)
      for (const auto& e : round)
        if (e.acceptable_species < 0 || e.acceptable_species > kNumSpecies)
          throw ValidationError("ledger: acceptable species count outside 0..9");
  }

  // Scenario counts by acceptable-species count, rows 0..9.
  std::array<int, kNumSpecies + 1> histogram(int round) const {
    std::array<int, kNumSpecies + 1> h{};
    for (const auto& e : rounds.at(static_cast<size_t>(round)))
      ++h[static_cast<size_t>(e.acceptable_species)];
    return h;
  }
};

// `acceptable_species_count,round1,...`: one row per count 0..9, one column
// per round, each cell the number of that round's scenarios with exactly that
// many acceptable species.
inline void save_ledger(const std::string& path, const RoundLedger& ledger) {
  ledger.validate();
  std::vector<std::string> header{"acceptable_species_count"};
  for (int r = 0; r < ledger.num_rounds(); ++r)
    header.push_back("round" + std::to_string(r + 1));
  csv::Writer w(path);
  w.header(header);
  std::vector<std::array<int, kNumSpecies + 1>> hists;
  for (int r = 0; r < ledger.num_rounds(); ++r) hists.push_back(ledger.histogram(r));
  for (int c = 0; c <= kNumSpecies; ++c) {
    auto row = w.row();
    row.integer(c);
    for (const auto& h : hists) row.integer(h[static_cast<size_t>(c)]);
  }
}

// Histogram matrix (rows = counts 0..9, one column per round) from a ledger
// file written by save_ledger.
inline Matrix load_ledger_counts(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  t.require_columns({"acceptable_species_count"});
  const int rounds = static_cast<int>(t.header.size()) - 1;
  if (rounds < 1) throw ParseError(path + ": ledger has no round columns");
  if (static_cast<int>(t.rows.size()) != kNumSpecies + 1)
    throw ParseError(path + ": ledger must have exactly 10 count rows");
  Matrix counts(kNumSpecies + 1, rounds);
  for (int c = 0; c <= kNumSpecies; ++c) {
    const auto& row = t.rows[static_cast<size_t>(c)];
    if (t.integer(row, 0) != c)
      throw ParseError(path + ": ledger rows must list counts 0..9 in order");
    for (int r = 0; r < rounds; ++r)
      counts(c, r) = static_cast<double>(t.integer(row, r + 1));
  }
  return counts;
}

struct RankedScenario {
  FishingScenario scenario;
  double revenue = 0.0;  // billion GBP
};

// `F1..F9,revenue`, sorted by revenue descending.
inline void save_results(const std::string& path,
                         std::vector<RankedScenario> rows) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const RankedScenario& a, const RankedScenario& b) {
                     return a.revenue > b.revenue;
                   });
  std::vector<std::string> header;
  for (int i = 1; i <= kNumSpecies; ++i) header.push_back("F" + std::to_string(i));
  header.push_back("revenue");
  csv::Writer w(path);
  w.header(header);
  for (const auto& r : rows) {
    auto row = w.row();
    for (int i = 0; i < kNumSpecies; ++i) row.num(r.scenario[i]);
    row.num(r.revenue);
  }
}

inline std::vector<RankedScenario> load_results(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  std::vector<std::string> want;
  for (int i = 1; i <= kNumSpecies; ++i) want.push_back("F" + std::to_string(i));
  want.push_back("revenue");
  t.require_columns(want);
  std::vector<RankedScenario> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    RankedScenario r;
    for (int i = 0; i < kNumSpecies; ++i)
      r.scenario[i] = t.number(row, t.column("F" + std::to_string(i + 1)));
    r.revenue = t.number(row, t.column("revenue"));
    out.push_back(r);
  }
  return out;
}

}  // namespace mmsy::nash
