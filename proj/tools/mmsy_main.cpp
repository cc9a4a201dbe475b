// Command-line front end. Subcommands cover the full run (`pipeline`) and
// the individual stages (`simulate`, `fit-ensemble`, `fit-emulator`,
// `nash-search`, `revenue`), plus `report` for summarizing a finished run
// directory without touching it.
//
// Exit codes: 0 success, 1 runtime failure (numerical trouble, diverged
// simulations, I/O), 2 validation failure (bad config, malformed files).
#include <array>
#include <filesystem>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "mmsy/pipeline.hpp"

namespace {

using namespace mmsy;

struct Overrides {
  std::string config;
  std::string out;
  uint64_t seed = 0;
  bool seed_set = false;
  std::vector<int> rounds;
  int draws = 0;
};

pipeline::Manifest make_manifest(const Overrides& o) {
  pipeline::Manifest m =
      o.config.empty() ? pipeline::Manifest{} : pipeline::load_manifest(o.config);
  if (o.seed_set) m.master_seed = o.seed;
  if (!o.out.empty()) m.out_dir = o.out;
  if (!o.rounds.empty()) {
    if (o.rounds.size() != 4)
      throw ValidationError("--rounds needs exactly 4 sizes");
    for (size_t r = 0; r < 4; ++r)
      m.run.round_sizes[r] = o.rounds[r];
    if (o.draws == 0) m.run.draws = o.rounds[1];
  }
  if (o.draws > 0) {
    m.run.draws = o.draws;
    if (o.rounds.empty())
      for (size_t r = 1; r < 4; ++r) m.run.round_sizes[r] = o.draws;
  }
  m.validate();
  return m;
}

std::string join(const std::string& dir, const std::string& name) {
  return dir + "/" + name;
}

// Cumulative training set of a run directory: evaluated scenarios plus their
// per-draw horizon summaries for both output kinds.
pipeline::TrainingSet load_training(const std::string& dir, int* draws) {
  const auto batch = data::load_scenarios(join(dir, pipeline::files::kScenarios));
  auto yield = pipeline::read_summaries(join(dir, pipeline::files::kSummariesYield));
  auto ssb = pipeline::read_summaries(join(dir, pipeline::files::kSummariesSsb));
  if (yield.ids != batch.ids || ssb.ids != batch.ids)
    throw ValidationError(dir + ": summaries do not match the scenario list");
  if (yield.draws != ssb.draws)
    throw ValidationError(dir + ": yield and SSB summaries disagree on draws");
  pipeline::TrainingSet ts;
  ts.scenarios = batch.scenarios;
  ts.round_of.assign(batch.scenarios.size(), 0);
  ts.yield = std::move(yield.data);
  ts.ssb = std::move(ssb.data);
  *draws = yield.draws;
  return ts;
}

int cmd_simulate(const pipeline::Manifest& m, const std::string& scenarios_path) {
  const auto catalog = data::load_catalog(m.catalog_path);
  const auto history = data::load_fhistory(m.history_path);
  const auto batch = data::load_scenarios(scenarios_path);
  if (batch.size() == 0) {
    std::cout << "simulate: empty scenario batch, nothing to do\n";
    return 0;
  }
  std::filesystem::create_directories(m.out_dir);
  const auto sims = dynamics::builtin_ensemble(m.community_seed);
  const int n = batch.size();
  std::vector<std::vector<SpeciesSeries>> yields(sims.size()),
      ssbs(sims.size());
  for (size_t k = 0; k < sims.size(); ++k) {
    yields[k].resize(static_cast<size_t>(n));
    ssbs[k].resize(static_cast<size_t>(n));
  }
  parallel_for(n, m.run.threads, [&](int s) {
    auto run = pipeline::run_simulators(sims, history,
                                        batch.scenarios[static_cast<size_t>(s)]);
    for (size_t k = 0; k < sims.size(); ++k) {
      yields[k][static_cast<size_t>(s)] = std::move(run.yield[k]);
      ssbs[k][static_cast<size_t>(s)] = std::move(run.ssb[k]);
    }
  });
  for (size_t k = 0; k < sims.size(); ++k) {
    const auto& port = sims[k].second;
    const std::string stem =
        "sim" + std::to_string(port.id) + "_" + port.name;
    data::save_sim_outputs(join(m.out_dir, stem + "_yield.csv"), batch.ids,
                           yields[k], catalog);
    data::save_sim_outputs(join(m.out_dir, stem + "_ssb.csv"), batch.ids,
                           ssbs[k], catalog);
  }
  std::cout << "simulate: " << n << " scenarios through " << sims.size()
            << " simulators, " << 2 * sims.size() << " files in " << m.out_dir
            << "\n";
  return 0;
}

int cmd_fit_ensemble(const pipeline::Manifest& m) {
  const auto data = pipeline::load_dataset(m);
  const auto sims = dynamics::builtin_ensemble(m.community_seed);
  std::filesystem::create_directories(m.out_dir);
  const auto fits =
      pipeline::fit_ensembles(data, sims, m.run, m.master_seed, &std::cout);
  ensemble::save_posterior(join(m.out_dir, pipeline::files::kPosteriorYield),
                           fits.yield);
  ensemble::save_posterior(join(m.out_dir, pipeline::files::kPosteriorSsb),
                           fits.ssb);
  pipeline::write_history_fit(join(m.out_dir, pipeline::files::kHistoryFit),
                              data, sims, m.run, fits);
  std::cout << "fit-ensemble: posteriors and historical fit written to "
            << m.out_dir << "\n";
  return 0;
}

int cmd_fit_emulator(const pipeline::Manifest& m, int draw) {
  int draws = 0;
  const auto ts = load_training(m.out_dir, &draws);
  if (draw < 0 || draw >= draws)
    throw ValidationError("--draw must be in 0.." + std::to_string(draws - 1));
  emulator::SurfaceArchive archive(
      join(m.out_dir, "surfaces_draw" + std::to_string(draw) + ".csv"));
  int converged = 0;
  for (int kind01 = 0; kind01 < 2; ++kind01) {
    const OutputKind kind = kind01 == 0 ? OutputKind::kYield : OutputKind::kSsb;
    const auto& summ = kind01 == 0 ? ts.yield : ts.ssb;
    for (int i = 0; i < kNumSpecies; ++i) {
      Vector targets(ts.size());
      for (int s = 0; s < ts.size(); ++s) {
        const auto& mm = summ.mean[static_cast<size_t>(s)];
        const auto& vv = summ.var[static_cast<size_t>(s)];
        targets[s] =
            kind01 == 0
                ? mm(draw, i)
                : mm(draw, i) + pipeline::kLowerQuartileZ *
                                    std::sqrt(std::max(0.0, vv(draw, i)));
      }
      emulator::FitOptions opts;
      opts.restarts = m.run.emulator_restarts;
      opts.max_iter = m.run.emulator_max_iter;
      opts.seed = subseed(m.master_seed, "emulator-cli",
                          static_cast<uint64_t>(kind01) * kNumSpecies +
                              static_cast<uint64_t>(i));
      const auto surface = emulator::fit_surface(
          ts.scenarios, targets, emulator::term_list(kind, i), opts);
      archive.add(kind, i, draw, surface);
      converged += surface.converged ? 1 : 0;
    }
  }
  std::cout << "fit-emulator: draw " << draw << ", " << converged
            << "/18 optimizer fits converged\n";
  return 0;
}

int cmd_nash_search(const pipeline::Manifest& m, int round) {
  int draws = 0;
  const auto ts = load_training(m.out_dir, &draws);
  RunConfig run = m.run;
  if (run.draws > draws)
    throw ValidationError("run wants " + std::to_string(run.draws) +
                          " draws but summaries hold " + std::to_string(draws));
  const auto catalog = data::load_catalog(m.catalog_path);
  const auto search = nash::search_config(run, catalog.log_b_lim());
  const auto cands = pipeline::propose_candidates(
      ts, run, search, round, m.master_seed,
      join(m.out_dir, pipeline::files::surfaces(round)), &std::cout);

  csv::Writer w(join(m.out_dir, "candidates_round" + std::to_string(round) +
                                    ".csv"));
  std::vector<std::string> head{"draw"};
  for (int i = 1; i <= kNumSpecies; ++i) head.push_back("F" + std::to_string(i));
  head.insert(head.end(), {"iterations", "fixed_point", "risk_ok_species"});
  w.header(head);
  for (const auto& c : cands) {
    auto row = w.row();
    row.integer(c.draw);
    for (int i = 0; i < kNumSpecies; ++i) row.num(c.scenario[i]);
    row.integer(c.iterations)
        .integer(c.fixed_point ? 1 : 0)
        .integer(static_cast<long>(
            std::count(c.risk_ok.begin(), c.risk_ok.end(), true)));
  }
  std::cout << "nash-search: " << cands.size() << " candidates for round "
            << round << " written to " << m.out_dir << "\n";
  return 0;
}

int cmd_revenue(const pipeline::Manifest& m) {
  int draws = 0;
  const auto ts = load_training(m.out_dir, &draws);
  const auto catalog = data::load_catalog(m.catalog_path);
  const auto prices = data::load_prices(m.prices_path, catalog);
  const auto model = econ::fit_prices(prices);
  const auto forecast = econ::forecast(model, m.run.horizon);
  Vector price(kNumSpecies);
  for (int i = 0; i < kNumSpecies; ++i)
    price[i] = forecast.at(i, m.run.horizon);

  const csv::Table t =
      csv::read_file(join(m.out_dir, pipeline::files::kAcceptance));
  t.require_columns({"draw", "accepted"});
  const int cd = t.column("draw"), ca = t.column("accepted");
  const int base = ts.size() - static_cast<int>(t.rows.size());
  if (base < 0)
    throw ValidationError("acceptance table lists more candidates than "
                          "evaluated scenarios");
  std::vector<nash::RankedScenario> ranked;
  for (size_t j = 0; j < t.rows.size(); ++j) {
    if (t.integer(t.rows[j], ca) == 0) continue;
    const size_t u = static_cast<size_t>(base) + j;
    nash::RankedScenario r;
    r.scenario = ts.scenarios[u];
    r.revenue = econ::revenue(ts.yield.mean[u], ts.yield.var[u], price);
    ranked.push_back(r);
    (void)cd;
  }
  std::stable_sort(
      ranked.begin(), ranked.end(),
      [](const auto& a, const auto& b) { return a.revenue > b.revenue; });
  if (ranked.empty()) {
    std::cout << "revenue: no accepted scenarios to rank\n";
    return 0;
  }
  std::cout << "revenue: " << ranked.size() << " accepted scenarios\n";
  for (const auto& r : ranked) {
    std::cout << "  ";
    for (int i = 0; i < kNumSpecies; ++i)
      std::cout << csv::format_number(r.scenario[i]) << (i + 1 < kNumSpecies ? "," : "");
    std::cout << " -> " << csv::format_number(r.revenue) << " billion\n";
  }
  return 0;
}

int cmd_pipeline(const pipeline::Manifest& m) {
  const auto res = pipeline::run_pipeline(m, &std::cout);
  std::cout << "pipeline: " << res.ranked.size() << " of "
            << res.final_candidates.size()
            << " final-round candidates accepted; outputs in " << m.out_dir
            << "\n";
  return 0;
}

int cmd_report(const std::string& dir) {
  const Matrix counts = nash::load_ledger_counts(join(dir, pipeline::files::kLedger));
  std::cout << "scenarios by acceptable-species count (rows 0-9):\n";
  for (int r = 0; r < counts.cols(); ++r) {
    std::cout << "  round " << (r + 1) << ":";
    for (int c = 0; c < counts.rows(); ++c)
      std::cout << " " << static_cast<int>(counts(c, r));
    std::cout << "\n";
  }

  const csv::Table t =
      csv::read_file(join(dir, pipeline::files::kAcceptance));
  t.require_columns({"accepted", "risk_pass", "fixed_point"});
  int accepted = 0, risk = 0, fixed = 0;
  for (const auto& row : t.rows) {
    accepted += t.integer(row, t.column("accepted")) != 0 ? 1 : 0;
    risk += t.integer(row, t.column("risk_pass")) != 0 ? 1 : 0;
    fixed += t.integer(row, t.column("fixed_point")) != 0 ? 1 : 0;
  }
  std::cout << t.rows.size() << " final-round candidates: " << risk
            << " risk-acceptable, " << fixed << " at a fixed point, "
            << accepted << " accepted\n";

  const auto ranked =
      nash::load_results(join(dir, pipeline::files::kResults));
  if (ranked.empty()) {
    std::cout << "no equilibria satisfied the acceptance criteria\n";
    return 0;
  }
  const auto& best = ranked.front();
  std::cout << "best scenario (revenue " << csv::format_number(best.revenue)
            << " billion): F = ";
  for (int i = 0; i < kNumSpecies; ++i)
    std::cout << csv::format_number(best.scenario[i])
              << (i + 1 < kNumSpecies ? "," : "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"risk-constrained long-term fishing equilibria"};
  app.require_subcommand(1);

  Overrides o;
  std::string scenarios_path;
  std::string report_dir;
  int draw = 0;
  int round = 2;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "manifest INI file");
    sub->add_option("--seed", o.seed, "master seed override")
        ->each([&](const std::string&) { o.seed_set = true; });
    sub->add_option("--out", o.out, "output directory override");
  };

  auto* sim = app.add_subcommand("simulate",
                                 "run the simulator community over a scenario batch");
  add_common(sim);
  sim->add_option("--scenarios", scenarios_path, "scenario batch CSV")
      ->required();

  auto* fe = app.add_subcommand("fit-ensemble",
                                "fit the multi-simulator ensemble to history");
  add_common(fe);

  auto* fm = app.add_subcommand(
      "fit-emulator", "fit one draw's surfaces from a run's training data");
  add_common(fm);
  fm->add_option("--draw", draw, "posterior draw index");

  auto* ns = app.add_subcommand(
      "nash-search", "propose equilibrium candidates from a run's training data");
  add_common(ns);
  ns->add_option("--round", round, "round label for seeds and file names");

  auto* rev = app.add_subcommand(
      "revenue", "rank a run's accepted scenarios by forecast revenue");
  add_common(rev);

  auto* pipe = app.add_subcommand("pipeline", "full four-round run");
  add_common(pipe);
  pipe->add_option("--rounds", o.rounds, "four round sizes")
      ->delimiter(',');
  pipe->add_option("--draws", o.draws, "posterior draws kept");

  auto* rep = app.add_subcommand("report", "summarize a finished run directory");
  add_common(rep);
  rep->add_option("dir", report_dir, "run directory (defaults to --out)");

  try {
    app.parse(argc, argv);
    const pipeline::Manifest m = make_manifest(o);
    if (sim->parsed()) return cmd_simulate(m, scenarios_path);
    if (fe->parsed()) return cmd_fit_ensemble(m);
    if (fm->parsed()) return cmd_fit_emulator(m, draw);
    if (ns->parsed()) return cmd_nash_search(m, round);
    if (rev->parsed()) return cmd_revenue(m);
    if (pipe->parsed()) return cmd_pipeline(m);
    if (rep->parsed())
      return cmd_report(report_dir.empty() ? m.out_dir : report_dir);
    return 2;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
