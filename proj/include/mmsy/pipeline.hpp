// End-to-end orchestration: run the simulator community over fishing
// scenarios, fit the Bayesian ensemble to the historical window, summarize
// each scenario's horizon-year truth per posterior draw, emulate those
// summaries as functions of the fishing scenario, search per draw for a
// risk-constrained equilibrium, and rank the accepted scenarios by
// forecast-price revenue.
//
// The schedule is four rounds. Round 1 is a Sobol' space-filling design;
// each later round takes one equilibrium proposal per posterior draw, found
// on emulator surfaces fitted to every scenario evaluated so far. Proposals
// are always added to the training set, feasible or not, so the surfaces
// sharpen near the equilibria. After round 4 each candidate is re-checked
// against the ensemble itself (not its emulator): every species must keep
// the mixture probability of horizon SSB falling below B_lim under the risk
// threshold, and the candidate must already have passed a best-response
// fixed-point sweep under its own draw's surfaces.
//
// Every stage seeds its randomness from (master seed, stage label, index),
// so a run is reproducible byte for byte regardless of thread count. After
// each round the cumulative artifacts are rewritten, so an interrupted run
// leaves the completed rounds on disk.
#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "mmsy/config.hpp"
#include "mmsy/csv.hpp"
#include "mmsy/data.hpp"
#include "mmsy/design.hpp"
#include "mmsy/dynamics.hpp"
#include "mmsy/econ.hpp"
#include "mmsy/emulator.hpp"
#include "mmsy/ensemble.hpp"
#include "mmsy/errors.hpp"
#include "mmsy/nash.hpp"
#include "mmsy/parallel.hpp"
#include "mmsy/stats.hpp"
#include "mmsy/types.hpp"

namespace mmsy::pipeline {

// z-score of the lower quartile: each draw's horizon SSB is reduced to its
// Gaussian 25th percentile before emulation.
inline constexpr double kLowerQuartileZ = -0.6744897501960817;

// Output file names inside the run directory.
namespace files {
inline constexpr const char* kScenarios = "scenarios.csv";
inline constexpr const char* kSummariesYield = "summaries_yield.csv";
inline constexpr const char* kSummariesSsb = "summaries_ssb.csv";
inline constexpr const char* kPosteriorYield = "posterior_yield.csv";
inline constexpr const char* kPosteriorSsb = "posterior_ssb.csv";
inline constexpr const char* kLedger = "ledger.csv";
inline constexpr const char* kLongTerm = "long_term.csv";
inline constexpr const char* kAcceptance = "acceptance.csv";
inline constexpr const char* kResults = "results.csv";
inline constexpr const char* kHistoryFit = "history_fit.csv";
inline constexpr const char* kPriceForecast = "price_forecast.csv";
inline constexpr const char* kReport = "report.txt";

inline std::string surfaces(int round) {
  return "surfaces_round" + std::to_string(round) + ".csv";
}
}  // namespace files

// ---------------------------------------------------------------------------
// Manifest: where the inputs live, where outputs go, and the run settings.

struct Manifest {
  std::string catalog_path = "data/catalog.csv";
  std::string obs_yield_path = "data/observed_yield.csv";
  std::string obs_ssb_path = "data/observed_ssb.csv";
  std::string history_path = "data/fishing_history.csv";
  std::string prices_path = "data/prices.csv";
  std::string out_dir = "out";
  uint64_t master_seed = 1;
  uint64_t community_seed = 101;  // seeds the bundled simulator community
  RunConfig run;

  void validate() const {
    run.validate();
    for (const std::string* p :
         {&catalog_path, &obs_yield_path, &obs_ssb_path, &history_path,
          &prices_path, &out_dir})
      if (p->empty()) throw ValidationError("manifest: empty path");
  }
};

inline Manifest manifest_from_ini(const IniFile& ini) {
  Manifest m;
  m.catalog_path = ini.get_string("paths", "catalog", m.catalog_path);
  m.obs_yield_path =
      ini.get_string("paths", "observed_yield", m.obs_yield_path);
  m.obs_ssb_path = ini.get_string("paths", "observed_ssb", m.obs_ssb_path);
  m.history_path = ini.get_string("paths", "fishing_history", m.history_path);
  m.prices_path = ini.get_string("paths", "prices", m.prices_path);
  m.out_dir = ini.get_string("paths", "out_dir", m.out_dir);
  m.master_seed = ini.get_u64("run", "seed", m.master_seed);
  m.community_seed = ini.get_u64("run", "community_seed", m.community_seed);
  m.run = run_config_from_ini(ini);
  m.validate();
  return m;
}

inline Manifest load_manifest(const std::string& path) {
  const IniFile ini = IniFile::parse_file(path);
  Manifest m = manifest_from_ini(ini);
  ini.reject_unknown_keys();
  return m;
}

// ---------------------------------------------------------------------------
// Bundled inputs.

struct Dataset {
  SpeciesCatalog catalog;
  SpeciesSeries obs_yield{OutputKind::kYield};
  SpeciesSeries obs_ssb{OutputKind::kSsb};
  FishingHistory history;
  data::PriceTable prices;
};

inline Dataset load_dataset(const Manifest& m) {
  Dataset d;
  d.catalog = data::load_catalog(m.catalog_path);
  d.obs_yield = data::load_observations(m.obs_yield_path, OutputKind::kYield,
                                        d.catalog, m.run.history);
  d.obs_ssb = data::load_observations(m.obs_ssb_path, OutputKind::kSsb,
                                      d.catalog, m.run.history);
  d.history = data::load_fhistory(m.history_path);
  if (!(d.history.years.first <= m.run.history.first &&
        d.history.years.last >= m.run.history.last))
    throw ValidationError("dataset: fishing history does not cover " +
                          std::to_string(m.run.history.first) + "-" +
                          std::to_string(m.run.history.last));
  d.prices = data::load_prices(m.prices_path, d.catalog);
  return d;
}

// ---------------------------------------------------------------------------
// Simulator community.

using SimulatorSet =
    std::vector<std::pair<dynamics::OperatingModel, dynamics::SimulatorPort>>;

struct ScenarioRun {
  std::vector<SpeciesSeries> yield;  // one series per simulator
  std::vector<SpeciesSeries> ssb;
};

inline ScenarioRun run_simulators(const SimulatorSet& sims,
                                  const FishingHistory& history,
                                  const FishingScenario& scenario) {
  ScenarioRun out;
  out.yield.reserve(sims.size());
  out.ssb.reserve(sims.size());
  for (const auto& [model, port] : sims) {
    auto [y, s] = dynamics::run_scenario(model, port, history, scenario);
    out.yield.push_back(std::move(y));
    out.ssb.push_back(std::move(s));
  }
  return out;
}

namespace detail {

inline SpeciesSeries truncate_series(const SpeciesSeries& s, int last_year) {
  if (s.years.last <= last_year) return s;
  SpeciesSeries out =
      SpeciesSeries::empty(s.kind, {s.years.first, last_year}, s.species);
  const int T = out.years.size();
  out.log_values = s.log_values.leftCols(T);
  out.present = s.present.leftCols(T);
  return out;
}

// Ensemble layout over `grid`, with each simulator clipped to the grid.
inline ensemble::EnsembleLayout make_layout(const SimulatorSet& sims,
                                            YearRange obs_years,
                                            YearRange grid) {
  ensemble::EnsembleLayout layout;
  layout.n_species = kNumSpecies;
  layout.obs_years = obs_years;
  layout.grid = grid;
  layout.sims.reserve(sims.size());
  for (const auto& [model, port] : sims) {
    ensemble::SimulatorLayout sl;
    sl.species = port.species;
    sl.years = {port.years.first, std::min(port.years.last, grid.last)};
    layout.sims.push_back(std::move(sl));
  }
  layout.validate();
  return layout;
}

// Rebind a sampled hyperparameter spec to another layout. Valid because the
// per-simulator species subsets, which size the hyperparameter vectors, are
// the same in both layouts; only the year grid differs.
inline ensemble::EnsembleSpec with_layout(ensemble::EnsembleSpec spec,
                                          const ensemble::EnsembleLayout& layout) {
  spec.layout = layout;
  spec.validate();
  return spec;
}

inline std::string scenario_id(int index) {
  std::string digits = std::to_string(index + 1);
  while (digits.size() < 4) digits.insert(digits.begin(), '0');
  return "s" + digits;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage 1: fit the ensemble to the historical window. The simulators are run
// once (future F is irrelevant because everything past the history is
// discarded) and both output kinds are fitted independently.

struct FittedEnsembles {
  ensemble::EnsemblePosterior yield;
  ensemble::EnsemblePosterior ssb;
};

inline FittedEnsembles fit_ensembles(const Dataset& data,
                                     const SimulatorSet& sims,
                                     const RunConfig& run,
                                     uint64_t master_seed,
                                     std::ostream* log = nullptr) {
  const auto layout = detail::make_layout(sims, run.history, run.history);
  const ScenarioRun hist =
      run_simulators(sims, data.history, FishingScenario{});
  std::vector<SpeciesSeries> yields, ssbs;
  for (size_t k = 0; k < sims.size(); ++k) {
    yields.push_back(detail::truncate_series(hist.yield[k], run.history.last));
    ssbs.push_back(detail::truncate_series(hist.ssb[k], run.history.last));
  }

  ensemble::McmcConfig cfg;
  cfg.iterations = run.mcmc_iterations;
  cfg.burn_in = run.mcmc_burn_in;
  cfg.chains = run.mcmc_chains;
  cfg.draws = run.draws;

  FittedEnsembles out{
      ensemble::fit(layout, data.obs_yield, yields, cfg,
                    subseed(master_seed, "ensemble-yield")),
      ensemble::fit(layout, data.obs_ssb, ssbs, cfg,
                    subseed(master_seed, "ensemble-ssb"))};
  if (log) {
    auto line = [&](const char* kind, const ensemble::FitDiagnostics& d) {
      *log << "[pipeline] ensemble " << kind << ": acceptance "
           << csv::format_number(d.acceptance_rate) << ", max split-Rhat "
           << csv::format_number(d.max_split_rhat) << "\n";
    };
    line("yield", out.yield.diagnostics);
    line("ssb", out.ssb.diagnostics);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stage 2: per-scenario horizon summaries. For every evaluated scenario and
// every posterior draw, the ensemble's truth marginal at the horizon year is
// stored as (mean, var) per species; these are the emulation targets and the
// basis for all risk statements.

struct KindSummaries {
  std::vector<Matrix> mean;  // per scenario: draws x species, log tonnes
  std::vector<Matrix> var;
};

struct TrainingSet {
  std::vector<FishingScenario> scenarios;
  std::vector<int> round_of;  // 1-based
  KindSummaries yield, ssb;

  int size() const { return static_cast<int>(scenarios.size()); }
};

inline void evaluate_scenarios(
    const SimulatorSet& sims, const Dataset& data,
    const ensemble::EnsembleLayout& predict_layout,
    const std::vector<ensemble::EnsembleSpec>& yield_specs,
    const std::vector<ensemble::EnsembleSpec>& ssb_specs,
    const std::vector<FishingScenario>& batch, int round, int threads,
    TrainingSet& ts) {
  const int base = ts.size();
  const int n = static_cast<int>(batch.size());
  const int D = static_cast<int>(yield_specs.size());
  ts.scenarios.insert(ts.scenarios.end(), batch.begin(), batch.end());
  ts.round_of.insert(ts.round_of.end(), batch.size(), round);
  for (auto* m : {&ts.yield.mean, &ts.yield.var, &ts.ssb.mean, &ts.ssb.var})
    m->resize(static_cast<size_t>(base + n));

  parallel_for(n, threads, [&](int b) {
    const size_t slot = static_cast<size_t>(base + b);
    ScenarioRun run =
        run_simulators(sims, data.history, ts.scenarios[slot]);
    for (auto& s : run.yield) s = detail::truncate_series(s, predict_layout.grid.last);
    for (auto& s : run.ssb) s = detail::truncate_series(s, predict_layout.grid.last);

    auto summarize = [&](const SpeciesSeries& obs,
                         const std::vector<SpeciesSeries>& sim_series,
                         const std::vector<ensemble::EnsembleSpec>& specs,
                         Matrix& mean, Matrix& var) {
      const ensemble::BoundEnsemble bound(predict_layout, obs, sim_series);
      mean.resize(D, kNumSpecies);
      var.resize(D, kNumSpecies);
      for (int d = 0; d < D; ++d) {
        auto [m, v] = bound.final_truth(specs[static_cast<size_t>(d)]);
        mean.row(d) = m.transpose();
        var.row(d) = v.transpose();
      }
    };
    summarize(data.obs_yield, run.yield, yield_specs, ts.yield.mean[slot],
              ts.yield.var[slot]);
    summarize(data.obs_ssb, run.ssb, ssb_specs, ts.ssb.mean[slot],
              ts.ssb.var[slot]);
  });
}

// Mixture probability that horizon SSB falls below B_lim, per species, from
// one scenario's per-draw Gaussian marginals.
inline Vector risk_probabilities(const Matrix& ssb_mean, const Matrix& ssb_var,
                                 const Vector& log_b_lim) {
  const int D = static_cast<int>(ssb_mean.rows());
  const int n = static_cast<int>(ssb_mean.cols());
  if (log_b_lim.size() != n)
    throw ValidationError("risk: B_lim length does not match species count");
  Vector pr = Vector::Zero(n);
  for (int d = 0; d < D; ++d)
    for (int i = 0; i < n; ++i) {
      const double sd = std::sqrt(std::max(0.0, ssb_var(d, i)));
      if (sd > 0.0)
        pr[i] += normal_cdf((log_b_lim[i] - ssb_mean(d, i)) / sd);
      else if (ssb_mean(d, i) < log_b_lim[i])
        pr[i] += 1.0;
    }
  return pr / static_cast<double>(D);
}

// ---------------------------------------------------------------------------
// Stage 3: one equilibrium proposal per posterior draw. Each draw gets its
// own 18 emulator surfaces (yield and SSB lower quartile per species) fitted
// to the cumulative training set, then a best-response search on them. The
// fixed-point flag is recorded immediately, while the draw's surfaces exist;
// they are discarded afterwards to bound memory, with their hyperparameters
// streamed to the round's archive in draw order.

inline std::vector<nash::NashCandidate> propose_candidates(
    const TrainingSet& ts, const RunConfig& run,
    const nash::SearchConfig& search, int next_round, uint64_t master_seed,
    const std::string& archive_path, std::ostream* log = nullptr) {
  const int D = run.draws;
  const int n = ts.size();
  using Params = std::vector<std::pair<std::string, double>>;
  struct DrawArchive {
    std::array<Params, kNumSpecies> yield, ssb;
  };
  std::vector<nash::NashCandidate> out(static_cast<size_t>(D));
  std::vector<DrawArchive> records(static_cast<size_t>(D));
  const uint64_t search_seed = subseed(master_seed, "nash-round",
                                       static_cast<uint64_t>(next_round));

  parallel_for(D, run.threads, [&](int d) {
    std::array<emulator::EmulatorSurface, kNumSpecies> ysurf, ssurf;
    nash::DrawSurfaces surf;
    for (int kind01 = 0; kind01 < 2; ++kind01) {
      const OutputKind kind =
          kind01 == 0 ? OutputKind::kYield : OutputKind::kSsb;
      const auto& summ = kind01 == 0 ? ts.yield : ts.ssb;
      for (int i = 0; i < kNumSpecies; ++i) {
        Vector targets(n);
        for (int s = 0; s < n; ++s) {
          const auto& m = summ.mean[static_cast<size_t>(s)];
          const auto& v = summ.var[static_cast<size_t>(s)];
          targets[s] = kind01 == 0
                           ? m(d, i)
                           : m(d, i) + kLowerQuartileZ *
                                           std::sqrt(std::max(0.0, v(d, i)));
        }
        emulator::FitOptions opts;
        opts.restarts = run.emulator_restarts;
        opts.max_iter = run.emulator_max_iter;
        opts.seed = subseed(
            master_seed, "emulator",
            (static_cast<uint64_t>(next_round) * 2 + kind01) * 9ULL *
                    static_cast<uint64_t>(D) +
                static_cast<uint64_t>(i) * static_cast<uint64_t>(D) +
                static_cast<uint64_t>(d));
        auto& slot = kind01 == 0 ? ysurf[static_cast<size_t>(i)]
                                 : ssurf[static_cast<size_t>(i)];
        slot = emulator::fit_surface(ts.scenarios, targets,
                                     emulator::term_list(kind, i), opts);
        auto& rec = records[static_cast<size_t>(d)];
        (kind01 == 0 ? rec.yield : rec.ssb)[static_cast<size_t>(i)] =
            emulator::archive_params(slot);
        (kind01 == 0 ? surf.yield : surf.ssb)[static_cast<size_t>(i)] = &slot;
      }
    }
    const nash::EmulatedModel model(surf);
    auto& cand = out[static_cast<size_t>(d)];
    cand = nash::find_candidate(model, search, search_seed, d, next_round);
    cand.fixed_point = nash::fixed_point_check(
        model, search, cand.scenario,
        subseed(master_seed, "nash-fixed-point",
                (static_cast<uint64_t>(next_round) << 32) |
                    static_cast<uint64_t>(d)));
  });

  emulator::SurfaceArchive archive(archive_path);
  for (int d = 0; d < D; ++d)
    for (int i = 0; i < kNumSpecies; ++i) {
      archive.add(OutputKind::kYield, i, d,
                  records[static_cast<size_t>(d)].yield[static_cast<size_t>(i)]);
      archive.add(OutputKind::kSsb, i, d,
                  records[static_cast<size_t>(d)].ssb[static_cast<size_t>(i)]);
    }

  if (log) {
    int fixed = 0, feasible = 0;
    for (const auto& c : out) {
      fixed += c.fixed_point ? 1 : 0;
      feasible += c.all_risk_ok() ? 1 : 0;
    }
    *log << "[pipeline] round " << next_round << " proposals: " << D
         << " candidates, " << fixed << " at a fixed point, " << feasible
         << " emulator-feasible\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stage 4: final acceptance and ranking.

struct AcceptanceRecord {
  int draw = 0;
  FishingScenario scenario;
  Vector pr_below;           // ensemble Pr(SSB_horizon < B_lim) per species
  bool risk_pass = false;    // all pr_below < risk_threshold
  bool fixed_point = false;  // best-response sweep moved no coordinate
  bool accepted = false;     // risk_pass && fixed_point
  double revenue = 0.0;      // billions, at forecast horizon prices
};

struct RunResult {
  FittedEnsembles fits;
  TrainingSet training;
  nash::RoundLedger ledger;
  std::vector<nash::NashCandidate> final_candidates;
  std::vector<AcceptanceRecord> acceptance;
  std::vector<nash::RankedScenario> ranked;  // accepted scenarios, best first
  econ::PriceModel price_model;
  data::PriceTable price_forecast;
  std::vector<std::pair<std::string, double>> timings;  // seconds per stage
};

// ---------------------------------------------------------------------------
// Output writers. All artifacts are plain CSV; files are rewritten whole at
// every checkpoint.

inline void write_scenarios(const std::string& path, const TrainingSet& ts) {
  data::ScenarioBatch batch;
  batch.ids.reserve(static_cast<size_t>(ts.size()));
  for (int s = 0; s < ts.size(); ++s)
    batch.ids.push_back(detail::scenario_id(s));
  batch.scenarios = ts.scenarios;
  data::save_scenarios(path, batch);
}

inline void write_summaries(const std::string& path, const TrainingSet& ts,
                            const KindSummaries& ks) {
  csv::Writer w(path);
  w.header({"scenario_id", "draw", "species", "horizon_mean", "horizon_var"});
  for (int s = 0; s < ts.size(); ++s) {
    const auto& m = ks.mean[static_cast<size_t>(s)];
    const auto& v = ks.var[static_cast<size_t>(s)];
    for (int d = 0; d < m.rows(); ++d)
      for (int i = 0; i < kNumSpecies; ++i)
        w.row()
            .text(detail::scenario_id(s))
            .integer(d)
            .integer(i + 1)
            .num(m(d, i))
            .num(v(d, i));
  }
}

// Inverse of write_summaries: scenario ids in first-appearance order, one
// (draws x species) matrix pair per scenario. The grid must be complete.
struct SummaryTable {
  std::vector<std::string> ids;
  KindSummaries data;
  int draws = 0;
};

inline SummaryTable read_summaries(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  t.require_columns(
      {"scenario_id", "draw", "species", "horizon_mean", "horizon_var"});
  const int cid = t.column("scenario_id"), cd = t.column("draw"),
            cs = t.column("species"), cm = t.column("horizon_mean"),
            cv = t.column("horizon_var");

  SummaryTable out;
  std::map<std::string, int> slot;
  struct Cell {
    int scenario, draw, species;
    double mean, var;
  };
  std::vector<Cell> cells;
  cells.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    const std::string id = t.field(row, cid);
    auto [it, inserted] = slot.try_emplace(id, static_cast<int>(out.ids.size()));
    if (inserted) out.ids.push_back(id);
    Cell c;
    c.scenario = it->second;
    c.draw = static_cast<int>(t.integer(row, cd));
    c.species = static_cast<int>(t.integer(row, cs)) - 1;
    c.mean = t.number(row, cm);
    c.var = t.number(row, cv);
    if (c.draw < 0 || c.species < 0 || c.species >= kNumSpecies)
      throw ParseError(path + ":" + std::to_string(row.line) +
                       ": draw or species index out of range");
    out.draws = std::max(out.draws, c.draw + 1);
    cells.push_back(c);
  }
  if (cells.empty()) throw ParseError(path + ": no summary rows");

  const int n = static_cast<int>(out.ids.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.data.mean.assign(static_cast<size_t>(n),
                       Matrix::Constant(out.draws, kNumSpecies, nan));
  out.data.var = out.data.mean;
  for (const auto& c : cells) {
    out.data.mean[static_cast<size_t>(c.scenario)](c.draw, c.species) = c.mean;
    out.data.var[static_cast<size_t>(c.scenario)](c.draw, c.species) = c.var;
  }
  for (int s = 0; s < n; ++s)
    if (!out.data.mean[static_cast<size_t>(s)].allFinite() ||
        !out.data.var[static_cast<size_t>(s)].allFinite())
      throw ParseError(path + ": incomplete summary grid for scenario '" +
                       out.ids[static_cast<size_t>(s)] + "'");
  return out;
}

inline void write_long_term(const std::string& path, const TrainingSet& ts,
                            const SpeciesCatalog& catalog,
                            const Vector& log_b_lim,
                            double acceptance_probability) {
  csv::Writer w(path);
  w.header({"scenario_id", "round", "species", "yield_mean", "ssb_q25",
            "pr_below_blim", "risk_acceptable"});
  for (int s = 0; s < ts.size(); ++s) {
    const size_t u = static_cast<size_t>(s);
    const auto summary = ensemble::long_term_summaries(
        ts.yield.mean[u], ts.yield.var[u], ts.ssb.mean[u], ts.ssb.var[u]);
    const Vector pr =
        risk_probabilities(ts.ssb.mean[u], ts.ssb.var[u], log_b_lim);
    for (int i = 0; i < kNumSpecies; ++i)
      w.row()
          .text(detail::scenario_id(s))
          .integer(ts.round_of[u])
          .text(catalog.at(i).name)
          .num(summary.yield_mean[i])
          .num(summary.ssb_q25[i])
          .num(pr[i])
          .integer((1.0 - pr[i]) >= acceptance_probability ? 1 : 0);
  }
}

inline void write_acceptance(const std::string& path,
                             const std::vector<nash::NashCandidate>& cands,
                             const std::vector<AcceptanceRecord>& records) {
  csv::Writer w(path);
  std::vector<std::string> head{"draw"};
  for (int i = 0; i < kNumSpecies; ++i)
    head.push_back("F" + std::to_string(i + 1));
  head.insert(head.end(),
              {"iterations", "init_fallbacks", "sweep_infeasible",
               "max_pr_below", "risk_pass", "fixed_point", "accepted",
               "revenue"});
  w.header(head);
  for (size_t j = 0; j < records.size(); ++j) {
    const auto& rec = records[j];
    const auto& cand = cands[j];
    auto row = w.row();
    row.integer(rec.draw);
    for (int i = 0; i < kNumSpecies; ++i) row.num(rec.scenario[i]);
    const auto count = [](const std::array<bool, kNumSpecies>& flags) {
      return static_cast<long>(std::count(flags.begin(), flags.end(), true));
    };
    row.integer(cand.iterations)
        .integer(count(cand.init_fallback))
        .integer(count(cand.last_sweep_infeasible))
        .num(rec.pr_below.maxCoeff())
        .integer(rec.risk_pass ? 1 : 0)
        .integer(rec.fixed_point ? 1 : 0)
        .integer(rec.accepted ? 1 : 0)
        .num(rec.revenue);
  }
}

// Mixture smooth of the historical fit per output kind: observed series next
// to the ensemble's truth law over the fit grid.
inline void write_history_fit(const std::string& path, const Dataset& data,
                              const SimulatorSet& sims, const RunConfig& run,
                              const FittedEnsembles& fits) {
  const auto layout = detail::make_layout(sims, run.history, run.history);
  const ScenarioRun hist =
      run_simulators(sims, data.history, FishingScenario{});

  csv::Writer w(path);
  w.header({"kind", "species", "year", "observed_log", "truth_mean",
            "truth_sd"});
  auto emit = [&](OutputKind kind, const SpeciesSeries& obs,
                  const std::vector<SpeciesSeries>& series,
                  const ensemble::EnsemblePosterior& post) {
    std::vector<SpeciesSeries> clipped;
    for (const auto& s : series)
      clipped.push_back(detail::truncate_series(s, run.history.last));
    const ensemble::BoundEnsemble bound(layout, obs, clipped);
    const int D = post.num_draws();
    const int T = layout.grid.size();
    Matrix mean_sum = Matrix::Zero(kNumSpecies, T);
    Matrix sq_sum = Matrix::Zero(kNumSpecies, T);
    Matrix var_sum = Matrix::Zero(kNumSpecies, T);
    for (int d = 0; d < D; ++d) {
      const auto sm = bound.smooth(post.spec_for_draw(d));
      mean_sum += sm.truth_mean;
      sq_sum += sm.truth_mean.cwiseProduct(sm.truth_mean);
      var_sum += sm.truth_var;
    }
    const Matrix mean = mean_sum / D;
    const Matrix var =
        (var_sum + sq_sum) / D - mean.cwiseProduct(mean);
    for (int i = 0; i < kNumSpecies; ++i)
      for (int t = 0; t < T; ++t) {
        const int year = layout.grid.first + t;
        auto row = w.row();
        row.text(to_string(kind))
            .text(data.catalog.at(i).name)
            .integer(year);
        const int c = year - obs.years.first;
        if (c >= 0 && c < obs.years.size() && obs.present(i, c))
          row.num(obs.log_values(i, c));
        else
          row.text("");
        row.num(mean(i, t)).num(std::sqrt(std::max(0.0, var(i, t))));
      }
  };
  emit(OutputKind::kYield, data.obs_yield, hist.yield, fits.yield);
  emit(OutputKind::kSsb, data.obs_ssb, hist.ssb, fits.ssb);
}

inline void write_report(const std::string& path, const RunConfig& run,
                         uint64_t master_seed, uint64_t community_seed,
                         const RunResult& res,
                         const SpeciesCatalog& catalog) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open for writing");
  out << "multispecies equilibrium search report\n";
  out << "=======================================\n";
  out << "master_seed " << master_seed << ", community_seed " << community_seed
      << "\n";
  out << "history " << run.history.first << "-" << run.history.last
      << ", horizon " << run.horizon << "\n";
  out << "rounds " << run.round_sizes[0] << "," << run.round_sizes[1] << ","
      << run.round_sizes[2] << "," << run.round_sizes[3] << ", draws "
      << run.draws << "\n";
  out << "risk threshold " << csv::format_number(run.risk_threshold)
      << ", ledger acceptance probability "
      << csv::format_number(run.acceptance_probability) << "\n\n";

  auto diag = [&](const char* kind, const ensemble::FitDiagnostics& d) {
    out << "ensemble " << kind << ": acceptance "
        << csv::format_number(d.acceptance_rate) << ", max split-Rhat "
        << csv::format_number(d.max_split_rhat) << "\n";
  };
  diag("yield", res.fits.yield.diagnostics);
  diag("ssb", res.fits.ssb.diagnostics);

  out << "\nscenarios by acceptable-species count (rows 0-9):\n";
  for (int r = 0; r < res.ledger.num_rounds(); ++r) {
    const auto h = res.ledger.histogram(r);
    out << "round " << (r + 1) << ":";
    for (int c = 0; c <= kNumSpecies; ++c) out << " " << h[static_cast<size_t>(c)];
    out << "\n";
  }

  int risk_pass = 0, fixed = 0;
  for (const auto& rec : res.acceptance) {
    risk_pass += rec.risk_pass ? 1 : 0;
    fixed += rec.fixed_point ? 1 : 0;
  }
  out << "\nfinal round: " << res.acceptance.size() << " candidates, "
      << risk_pass << " risk-acceptable, " << fixed << " at a fixed point, "
      << res.ranked.size() << " accepted\n";
  if (res.ranked.empty()) {
    out << "no scenario satisfied both the risk constraint and the "
           "equilibrium check\n";
  } else {
    const auto& best = res.ranked.front();
    out << "best scenario (revenue "
        << csv::format_number(best.revenue) << " billion):\n";
    for (int i = 0; i < kNumSpecies; ++i)
      out << "  F_" << catalog.at(i).name << " = "
          << csv::format_number(best.scenario[i]) << "\n";
  }

  out << "\ntimings (s):\n";
  for (const auto& [stage, seconds] : res.timings)
    out << "  " << stage << ": " << csv::format_number(seconds) << "\n";
}

// ---------------------------------------------------------------------------
// Full run.

inline RunResult run_rounds(const Dataset& data, const RunConfig& run,
                            uint64_t master_seed, uint64_t community_seed,
                            const std::string& out_dir,
                            std::ostream* log = nullptr) {
  run.validate();
  data.catalog.validate();
  std::filesystem::create_directories(out_dir);
  const auto path = [&](const std::string& name) {
    return out_dir + "/" + name;
  };

  RunResult res;
  using Clock = std::chrono::steady_clock;
  auto timed = [&](const char* stage, auto&& fn) {
    const auto t0 = Clock::now();
    fn();
    const double s = std::chrono::duration<double>(Clock::now() - t0).count();
    res.timings.emplace_back(stage, s);
    if (log)
      *log << "[pipeline] " << stage << " done in " << csv::format_number(s)
           << " s\n";
  };

  const SimulatorSet sims = dynamics::builtin_ensemble(community_seed);

  timed("ensemble_fit", [&] {
    res.fits = fit_ensembles(data, sims, run, master_seed, log);
    ensemble::save_posterior(path(files::kPosteriorYield), res.fits.yield);
    ensemble::save_posterior(path(files::kPosteriorSsb), res.fits.ssb);
  });

  timed("price_forecast", [&] {
    res.price_model = econ::fit_prices(data.prices);
    res.price_forecast = econ::forecast(res.price_model, run.horizon);
    data::save_prices(path(files::kPriceForecast), res.price_forecast,
                      data.catalog);
  });
  Vector horizon_price(kNumSpecies);
  for (int i = 0; i < kNumSpecies; ++i)
    horizon_price[i] = res.price_forecast.at(i, run.horizon);

  const auto predict_layout = detail::make_layout(sims, run.history, run.grid());
  std::vector<ensemble::EnsembleSpec> yield_specs, ssb_specs;
  yield_specs.reserve(static_cast<size_t>(run.draws));
  ssb_specs.reserve(static_cast<size_t>(run.draws));
  for (int d = 0; d < run.draws; ++d) {
    yield_specs.push_back(
        detail::with_layout(res.fits.yield.spec_for_draw(d), predict_layout));
    ssb_specs.push_back(
        detail::with_layout(res.fits.ssb.spec_for_draw(d), predict_layout));
  }

  const Vector log_b_lim = data.catalog.log_b_lim();
  const nash::SearchConfig search = nash::search_config(run, log_b_lim);

  for (int round = 1; round <= 4; ++round) {
    std::vector<FishingScenario> batch;
    if (round == 1) {
      const auto d0 =
          design::sobol(run.round_sizes[0], kNumSpecies, run.sobol_skip);
      batch.resize(static_cast<size_t>(d0.size()));
      for (int s = 0; s < d0.size(); ++s)
        for (int i = 0; i < kNumSpecies; ++i)
          batch[static_cast<size_t>(s)].f[static_cast<size_t>(i)] =
              d0.points(s, i);
    } else {
      std::vector<nash::NashCandidate> cands;
      timed(("propose_round" + std::to_string(round)).c_str(), [&] {
        cands = propose_candidates(res.training, run, search, round,
                                   master_seed,
                                   path(files::surfaces(round)), log);
      });
      batch.reserve(cands.size());
      for (const auto& c : cands) batch.push_back(c.scenario);
      if (round == 4) res.final_candidates = std::move(cands);
    }

    timed(("evaluate_round" + std::to_string(round)).c_str(), [&] {
      evaluate_scenarios(sims, data, predict_layout, yield_specs, ssb_specs,
                         batch, round, run.threads, res.training);
    });

    std::vector<nash::RoundLedger::Entry> entries;
    for (int s = res.training.size() - static_cast<int>(batch.size());
         s < res.training.size(); ++s) {
      const size_t u = static_cast<size_t>(s);
      const Vector pr = risk_probabilities(res.training.ssb.mean[u],
                                           res.training.ssb.var[u], log_b_lim);
      nash::RoundLedger::Entry e;
      e.scenario = res.training.scenarios[u];
      for (int i = 0; i < kNumSpecies; ++i)
        if ((1.0 - pr[i]) >= run.acceptance_probability) ++e.acceptable_species;
      entries.push_back(e);
    }
    res.ledger.rounds.push_back(std::move(entries));

    // Checkpoint: cumulative artifacts reflect every finished round.
    write_scenarios(path(files::kScenarios), res.training);
    write_summaries(path(files::kSummariesYield), res.training,
                    res.training.yield);
    write_summaries(path(files::kSummariesSsb), res.training,
                    res.training.ssb);
    nash::save_ledger(path(files::kLedger), res.ledger);
    write_long_term(path(files::kLongTerm), res.training, data.catalog,
                    log_b_lim, run.acceptance_probability);
    if (log) {
      const auto h = res.ledger.histogram(res.ledger.num_rounds() - 1);
      *log << "[pipeline] round " << round << " ledger:";
      for (int c = 0; c <= kNumSpecies; ++c)
        *log << " " << h[static_cast<size_t>(c)];
      *log << "\n";
    }
  }

  timed("acceptance", [&] {
    const int base =
        res.training.size() - static_cast<int>(res.final_candidates.size());
    for (size_t j = 0; j < res.final_candidates.size(); ++j) {
      const auto& cand = res.final_candidates[j];
      const size_t u = static_cast<size_t>(base) + j;
      AcceptanceRecord rec;
      rec.draw = cand.draw;
      rec.scenario = cand.scenario;
      rec.pr_below = risk_probabilities(res.training.ssb.mean[u],
                                        res.training.ssb.var[u], log_b_lim);
      rec.risk_pass = (rec.pr_below.array() < run.risk_threshold).all();
      rec.fixed_point = cand.fixed_point;
      rec.accepted = rec.risk_pass && rec.fixed_point;
      rec.revenue =
          econ::revenue(res.training.yield.mean[u], res.training.yield.var[u],
                        horizon_price);
      if (rec.accepted)
        res.ranked.push_back({rec.scenario, rec.revenue});
      res.acceptance.push_back(std::move(rec));
    }
    std::stable_sort(res.ranked.begin(), res.ranked.end(),
                     [](const auto& a, const auto& b) {
                       return a.revenue > b.revenue;
                     });
    write_acceptance(path(files::kAcceptance), res.final_candidates,
                     res.acceptance);
    nash::save_results(path(files::kResults), res.ranked);
  });

  timed("history_fit", [&] {
    write_history_fit(path(files::kHistoryFit), data, sims, run, res.fits);
  });

  write_report(path(files::kReport), run, master_seed, community_seed, res,
               data.catalog);
  if (log)
    *log << "[pipeline] accepted " << res.ranked.size() << " of "
         << res.final_candidates.size() << " final-round candidates\n";
  return res;
}

inline RunResult run_pipeline(const Manifest& m, std::ostream* log = nullptr) {
  m.validate();
  const Dataset data = load_dataset(m);
  return run_rounds(data, m.run, m.master_seed, m.community_seed, m.out_dir,
                    log);
}

}  // namespace mmsy::pipeline
