#include "mmsy/nash.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <catch2/catch_amalgamated.hpp>

#include "mmsy/design.hpp"
#include "mmsy/emulator.hpp"
#include "support/quadratic_game.hpp"
#include "support/temp_dir.hpp"

using mmsy::FishingScenario;
using mmsy::kFLower;
using mmsy::kFUpper;
using mmsy::kNumSpecies;
using mmsy::Matrix;
using mmsy::ValidationError;
using mmsy::Vector;
using mmsy_test::QuadraticGame;
using namespace mmsy::nash;

namespace {

SearchConfig test_config() {
  SearchConfig cfg;
  cfg.log_b_lim = Vector::Zero(kNumSpecies);
  return cfg;
}

QuadraticGame decoupled_game() {
  QuadraticGame g;
  for (int i = 0; i < kNumSpecies; ++i)
    g.center[i] = 0.25 + 0.15 * i;  // distinct interior optima
  return g;
}

FishingScenario constant_scenario(double v) {
  FishingScenario f;
  for (int i = 0; i < kNumSpecies; ++i) f[i] = v;
  return f;
}

}  // namespace

TEST_CASE("decoupled game: one sweep reaches every optimum") {
  const QuadraticGame game = decoupled_game();
  const SearchConfig cfg = test_config();
  std::mt19937_64 rng(42);

  const SweepResult out =
      best_response_iteration(game, cfg, constant_scenario(1.9), rng);
  for (int i = 0; i < kNumSpecies; ++i) {
    CHECK_FALSE(out.infeasible[static_cast<size_t>(i)]);
    CHECK(std::abs(out.scenario[i] - game.center[i]) <=
          cfg.pool_resolution());
  }
}

TEST_CASE("binding constraint: choice matches the 1-D feasible grid argmax") {
  QuadraticGame game = decoupled_game();
  game.center[7] = 1.2;
  game.ssb0[7] = 10.0;
  game.slope(7, 7) = 5.0;
  SearchConfig cfg = test_config();
  cfg.log_b_lim[7] = 5.5;  // feasible iff F_8 < 0.9

  std::mt19937_64 rng(7);
  const SweepResult out =
      best_response_iteration(game, cfg, constant_scenario(0.5), rng);
  REQUIRE_FALSE(out.infeasible[7]);

  // Independent oracle: dense grid over the same surface and constraint.
  FishingScenario probe = constant_scenario(0.5);
  double oracle_f = 0.0, oracle_y = -1e300;
  const int grid = 40001;
  for (int g = 0; g < grid; ++g) {
    const double v = kFLower + (kFUpper - kFLower) * g / (grid - 1);
    probe[7] = v;
    if (!(game.ssb(7, probe) > cfg.log_b_lim[7])) continue;
    const double y = game.yield(7, probe);
    if (y > oracle_y) {
      oracle_y = y;
      oracle_f = v;
    }
  }
  CHECK(std::abs(out.scenario[7] - oracle_f) <=
        cfg.pool_resolution() + (kFUpper - kFLower) / (grid - 1));
  // Strictly below the unconstrained optimum.
  CHECK(out.scenario[7] < 1.2 - 0.25);
  // Unconstrained species are unaffected.
  CHECK(std::abs(out.scenario[2] - game.center[2]) <= cfg.pool_resolution());
}

TEST_CASE("empty feasible pool leaves every coordinate unchanged") {
  QuadraticGame game = decoupled_game();
  game.ssb0[3] = -1.0;  // species 4 SSB below threshold at every scenario
  const SearchConfig cfg = test_config();

  const FishingScenario start = constant_scenario(0.7);
  std::mt19937_64 rng(3);
  const SweepResult out = best_response_iteration(game, cfg, start, rng);
  for (int i = 0; i < kNumSpecies; ++i) {
    CHECK(out.infeasible[static_cast<size_t>(i)]);
    CHECK(out.scenario[i] == start[i]);
  }
}

TEST_CASE("sweep never lowers the yield of a feasible incumbent") {
  const SearchConfig cfg = test_config();
  std::mt19937_64 seeds(2024);
  for (int rep = 0; rep < 10; ++rep) {
    QuadraticGame game = decoupled_game();
    std::mt19937_64 rng(seeds());
    FishingScenario start;
    for (int i = 0; i < kNumSpecies; ++i) {
      game.center[i] = 0.2 + 1.6 * (rng() >> 11) * 0x1p-53;
      start[i] = 2.0 * (rng() >> 11) * 0x1p-53;
    }
    const SweepResult out = best_response_iteration(game, cfg, start, rng);
    for (int i = 0; i < kNumSpecies; ++i)
      CHECK(game.yield(i, out.scenario) >= game.yield(i, start) - 1e-12);
  }
}

TEST_CASE("initialization honors own constraint and flags fallbacks") {
  QuadraticGame game = decoupled_game();
  SearchConfig cfg = test_config();

  SECTION("slack constraints: near the unconstrained argmax") {
    const InitResult init = initialize(game, cfg, 99);
    for (int i = 0; i < kNumSpecies; ++i) {
      CHECK_FALSE(init.fallback[static_cast<size_t>(i)]);
      CHECK(std::abs(init.scenario[i] - game.center[i]) < 0.05);
    }
  }

  SECTION("own-cap constraint respected") {
    game.ssb0[5] = 10.0;
    game.slope(5, 5) = 10.0;
    cfg.log_b_lim[5] = 4.0;  // feasible iff F_6 < 0.6, optimum at 1.0
    const InitResult init = initialize(game, cfg, 99);
    CHECK_FALSE(init.fallback[5]);
    CHECK(init.scenario[5] < 0.6);
    CHECK(init.scenario[5] > 0.5);  // best feasible sits near the cap
  }

  SECTION("impossible constraint falls back to the unconstrained argmax") {
    game.ssb0[3] = -1.0;
    const InitResult init = initialize(game, cfg, 99);
    CHECK(init.fallback[3]);
    for (int i = 0; i < kNumSpecies; ++i)
      if (i != 3) CHECK_FALSE(init.fallback[static_cast<size_t>(i)]);
    CHECK(std::abs(init.scenario[3] - game.center[3]) < 0.05);
  }
}

TEST_CASE("candidates: deterministic, in-range iteration counts, one per draw") {
  const mmsy_test::PairGame pg = mmsy_test::make_pair_game(11);
  SearchConfig cfg = test_config();
  cfg.log_b_lim = pg.log_b_lim;
  cfg.init_pool = 2000;  // smaller pool keeps the unit suite fast

  std::vector<const LongTermModel*> models(4, &pg.game);
  const std::vector<NashCandidate> cands =
      find_candidates(models, cfg, 77, 2);
  REQUIRE(cands.size() == 4);

  std::set<int> iteration_values;
  for (int d = 0; d < 4; ++d) {
    const NashCandidate& c = cands[static_cast<size_t>(d)];
    CHECK(c.draw == d);
    CHECK(c.round == 2);
    CHECK(c.iterations >= 26);
    CHECK(c.iterations <= 100);
    iteration_values.insert(c.iterations);
    CHECK(c.all_risk_ok());
    // Unique equilibrium: every draw lands in the same pool-resolution band.
    CHECK(std::abs(c.scenario[pg.a] - pg.eq_a) <= 3 * cfg.pool_resolution());
    CHECK(std::abs(c.scenario[pg.b] - pg.eq_b) <= 3 * cfg.pool_resolution());
    CHECK(c.yields.size() == kNumSpecies);
    CHECK(c.ssb.size() == kNumSpecies);
  }
  CHECK(iteration_values.size() >= 2);

  const NashCandidate again = find_candidate(pg.game, cfg, 77, 0, 2);
  CHECK(again.scenario == cands[0].scenario);
  CHECK(again.iterations == cands[0].iterations);
}

TEST_CASE("search matches the exhaustive grid Nash oracle") {
  for (uint64_t seed : {1, 2, 3}) {
    const mmsy_test::PairGame pg = mmsy_test::make_pair_game(seed);
    SearchConfig cfg = test_config();
    cfg.log_b_lim = pg.log_b_lim;
    cfg.init_pool = 2000;

    const auto cells = mmsy_test::grid_nash_cells(pg);
    REQUIRE_FALSE(cells.empty());

    const NashCandidate cand =
        find_candidate(pg.game, cfg, 1000 * seed + 5, 0);
    const double cell = (kFUpper - kFLower) / 200.0;
    double best = 1e300;
    for (const auto& [fa, fb] : cells)
      best = std::min(best, std::max(std::abs(cand.scenario[pg.a] - fa),
                                     std::abs(cand.scenario[pg.b] - fb)));
    INFO("seed " << seed << " distance " << best);
    CHECK(best <= 2 * cell + 1e-9);

    if (!pg.constrained) {
      // The oracle itself should sit on the analytic equilibrium.
      double oracle = 1e300;
      for (const auto& [fa, fb] : cells)
        oracle = std::min(oracle, std::max(std::abs(fa - pg.eq_a),
                                           std::abs(fb - pg.eq_b)));
      CHECK(oracle <= 1.5 * cell);
    }
  }
}

TEST_CASE("single-species MSY diagnostic") {
  const SearchConfig cfg = test_config();

  SECTION("separable yield: independent of the other efforts") {
    const QuadraticGame game = decoupled_game();
    const double at_low =
        ss_msy_diagnostic(game, cfg, 4, constant_scenario(0.1));
    const double at_high =
        ss_msy_diagnostic(game, cfg, 4, constant_scenario(1.8));
    CHECK(at_low == at_high);
    CHECK(std::abs(at_low - game.center[4]) <=
          (kFUpper - kFLower) / (cfg.msy_grid - 1));
  }

  SECTION("coupled yield: matches the closed-form shifted optimum") {
    QuadraticGame game = decoupled_game();
    game.couple(2, 6) = 0.35;
    FishingScenario others = constant_scenario(0.5);
    others[6] = 1.4;
    const double expected = game.center[2] + 0.35 * 1.4;
    const double got = ss_msy_diagnostic(game, cfg, 2, others);
    CHECK(std::abs(got - expected) <= (kFUpper - kFLower) / (cfg.msy_grid - 1));
  }

  SECTION("grid refinement moves the result by less than coarse spacing") {
    QuadraticGame game = decoupled_game();
    game.couple(2, 6) = 0.35;
    SearchConfig fine = cfg;
    fine.msy_grid = 5000;
    const FishingScenario others = constant_scenario(0.5);
    const double coarse = ss_msy_diagnostic(game, cfg, 2, others);
    const double refined = ss_msy_diagnostic(game, fine, 2, others);
    CHECK(std::abs(coarse - refined) <= (kFUpper - kFLower) / (cfg.msy_grid - 1));
  }
}

TEST_CASE("fixed-point check accepts equilibria and rejects other points") {
  const QuadraticGame game = decoupled_game();
  const SearchConfig cfg = test_config();

  FishingScenario at_opt;
  for (int i = 0; i < kNumSpecies; ++i) at_opt[i] = game.center[i];
  CHECK(fixed_point_check(game, cfg, at_opt, 5));
  CHECK_FALSE(fixed_point_check(game, cfg, constant_scenario(1.9), 5));
}

TEST_CASE("emulated model sweep equals the generic path") {
  // Twenty training points, two fitted surfaces reused across species.
  const mmsy::design::DesignBatch batch = mmsy::design::lhc(24, kNumSpecies, 0, 2, 8);
  std::vector<FishingScenario> pts;
  Vector y_yield(batch.size()), y_ssb(batch.size());
  for (int r = 0; r < batch.size(); ++r) {
    FishingScenario f;
    for (int c = 0; c < kNumSpecies; ++c) f[c] = batch.points(r, c);
    pts.push_back(f);
    y_yield[r] = std::sin(1.7 * f[3]) + 0.3 * f[5];
    y_ssb[r] = 2.0 - 0.4 * f[3] + 0.2 * std::cos(2.1 * f[5]);
  }
  mmsy::emulator::FitOptions opt;
  opt.restarts = 1;
  opt.max_iter = 120;
  const auto ys = mmsy::emulator::fit_surface(pts, y_yield, {3, 5}, opt);
  const auto ss = mmsy::emulator::fit_surface(pts, y_ssb, {3, 5}, opt);

  DrawSurfaces surfaces;
  for (int i = 0; i < kNumSpecies; ++i) {
    surfaces.yield[static_cast<size_t>(i)] = &ys;
    surfaces.ssb[static_cast<size_t>(i)] = &ss;
  }
  const EmulatedModel model(surfaces);

  const FishingScenario base = constant_scenario(0.9);
  std::vector<double> pool{0.0, 0.31, 0.9, 1.24, 2.0};
  for (int dim : {3, 5, 7}) {
    Vector fast_y, slow_y;
    Matrix fast_s, slow_s;
    model.sweep(base, dim, pool, fast_y, fast_s);
    model.LongTermModel::sweep(base, dim, pool, slow_y, slow_s);
    REQUIRE(fast_y.size() == slow_y.size());
    CHECK((fast_y - slow_y).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((fast_s - slow_s).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("round ledger: histogram, file round trip, validation") {
  RoundLedger ledger;
  ledger.rounds.resize(2);
  auto add = [&](int round, int count) {
    RoundLedger::Entry e;
    e.scenario = constant_scenario(0.5);
    e.acceptable_species = count;
    ledger.rounds[static_cast<size_t>(round)].push_back(e);
  };
  add(0, 3);
  add(0, 3);
  add(0, 9);
  add(1, 9);
  add(1, 0);

  const auto h0 = ledger.histogram(0);
  CHECK(h0[3] == 2);
  CHECK(h0[9] == 1);
  CHECK(h0[0] == 0);

  mmsy_test::TempDir tmp;
  const std::string path = tmp.file("ledger.csv");
  save_ledger(path, ledger);
  const Matrix counts = load_ledger_counts(path);
  REQUIRE(counts.rows() == 10);
  REQUIRE(counts.cols() == 2);
  CHECK(counts(3, 0) == 2.0);
  CHECK(counts(9, 0) == 1.0);
  CHECK(counts(9, 1) == 1.0);
  CHECK(counts(0, 1) == 1.0);
  CHECK(counts.col(0).sum() == 3.0);
  CHECK(counts.col(1).sum() == 2.0);

  add(1, 11);
  CHECK_THROWS_AS(save_ledger(path, ledger), ValidationError);
}

TEST_CASE("results file: descending revenue order and round trip") {
  std::vector<RankedScenario> rows(3);
  for (int i = 0; i < 3; ++i)
    rows[static_cast<size_t>(i)].scenario = constant_scenario(0.2 * (i + 1));
  rows[0].revenue = 1.5;
  rows[1].revenue = 2.16;
  rows[2].revenue = 0.7;

  mmsy_test::TempDir tmp;
  const std::string path = tmp.file("results.csv");
  save_results(path, rows);

  const auto loaded = load_results(path);
  REQUIRE(loaded.size() == 3);
  CHECK(loaded[0].revenue == 2.16);
  CHECK(loaded[1].revenue == 1.5);
  CHECK(loaded[2].revenue == 0.7);
  CHECK(loaded[0].scenario[0] == rows[1].scenario[0]);
  CHECK(loaded[2].scenario[8] == rows[2].scenario[8]);
}

TEST_CASE("search config validation") {
  mmsy::RunConfig run;
  run.init_pool = 123;
  run.response_pool = 50;
  run.msy_grid = 77;
  const SearchConfig cfg = search_config(run, Vector::Zero(kNumSpecies));
  CHECK(cfg.init_pool == 123);
  CHECK(cfg.response_pool == 50);
  CHECK(cfg.msy_grid == 77);
  CHECK(cfg.pool_resolution() == (kFUpper - kFLower) / 50);

  CHECK_THROWS_AS(search_config(run, Vector::Zero(4)), ValidationError);
  SearchConfig bad = cfg;
  bad.response_pool = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}
