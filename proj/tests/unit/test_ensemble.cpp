#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mmsy/ensemble.hpp"
#include "mmsy/stats.hpp"
#include "support/joint_gaussian.hpp"
#include "support/random_instances.hpp"
#include "support/temp_dir.hpp"

using namespace mmsy;
using namespace mmsy::ensemble;

namespace {

bool rel_close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

// Minimal layout: one species, no simulators, short grid.
EnsembleLayout tiny_layout(int T, YearRange obs) {
  EnsembleLayout layout;
  layout.n_species = 1;
  layout.grid = {2000, 2000 + T - 1};
  layout.obs_years = obs;
  return layout;
}

EnsembleSpec tiny_spec(const EnsembleLayout& layout, double sd_truth,
                       double sd_obs) {
  EnsembleSpec spec;
  spec.layout = layout;
  spec.sd_truth = Vector::Constant(1, sd_truth);
  spec.sd_obs = Vector::Constant(1, sd_obs);
  spec.ar_shared = Vector::Constant(1, 0.5);
  spec.sd_shared = Vector::Constant(1, 0.7);
  return spec;
}

}  // namespace

TEST_CASE("single observation likelihood matches the closed form") {
  auto layout = tiny_layout(1, {2000, 2000});
  auto spec = tiny_spec(layout, 0.4, 0.3);
  spec.truth_init_mean = 1.5;
  spec.truth_init_sd = 10.0;

  auto obs = SpeciesSeries::empty(OutputKind::kYield, layout.obs_years, {0});
  obs.set(0, 2000, 2.7);

  const double var = 10.0 * 10.0 + 0.3 * 0.3;
  const double v = 2.7 - 1.5;
  const double expected = -0.5 * (std::log(2.0 * M_PI * var) + v * v / var);
  CHECK_THAT(log_likelihood(spec, obs, {}),
             Catch::Matchers::WithinAbs(expected, 1e-12));
}

TEST_CASE("filter and smoother match the dense joint-Gaussian reference") {
  int checked_nonempty = 0;
  for (uint64_t seed = 1; seed <= 12; ++seed) {
    CAPTURE(seed);
    auto inst = mmsy_test::random_small_instance(seed, 2, 2, 6);
    const auto oracle = mmsy_test::brute_force_oracle(inst.spec, inst.obs, inst.sims);

    CHECK(rel_close(log_likelihood(inst.spec, inst.obs, inst.sims),
                    oracle.log_likelihood, 1e-10));

    const auto sm = predict_truth(inst.spec, inst.obs, inst.sims);
    const int n = inst.spec.layout.n_species;
    const int T = inst.spec.layout.grid.size();
    for (int i = 0; i < n; ++i) {
      CHECK(rel_close(sm.delta_mean[i], oracle.delta_mean[i], 1e-8));
      for (int t = 0; t < T; ++t) {
        CAPTURE(i, t);
        CHECK(rel_close(sm.truth_mean(i, t), oracle.truth_mean(i, t), 1e-8));
        CHECK(rel_close(sm.truth_var(i, t), oracle.truth_var(i, t), 1e-8));
        CHECK(rel_close(sm.eta_mean(i, t), oracle.eta_mean(i, t), 1e-8));
      }
    }
    if (oracle.log_likelihood != 0.0) ++checked_nonempty;
  }
  CHECK(checked_nonempty >= 10);
}

TEST_CASE("horizon marginal equals the smoothed law at the final year") {
  for (uint64_t seed = 21; seed <= 32; ++seed) {
    CAPTURE(seed);
    auto inst = mmsy_test::random_small_instance(seed, 3, 2, 6);
    const BoundEnsemble bound(inst.spec.layout, inst.obs, inst.sims);
    const auto sm = bound.smooth(inst.spec);
    const auto [mean, var] = bound.final_truth(inst.spec);
    const int last = inst.spec.layout.grid.size() - 1;
    for (int i = 0; i < inst.spec.layout.n_species; ++i) {
      CAPTURE(i);
      CHECK_THAT(mean[i],
                 Catch::Matchers::WithinAbs(sm.truth_mean(i, last), 1e-12));
      CHECK_THAT(var[i],
                 Catch::Matchers::WithinAbs(sm.truth_var(i, last), 1e-12));
    }
  }
}

TEST_CASE("static shared offset is time-constant after smoothing") {
  auto inst = mmsy_test::random_small_instance(77, 2, 2, 6);
  const auto sm = predict_truth(inst.spec, inst.obs, inst.sims);
  for (const auto& chain : sm.chains) {
    const auto delta_row = chain.mean.row(2);
    for (int t = 1; t < delta_row.size(); ++t)
      CHECK_THAT(delta_row[t], Catch::Matchers::WithinAbs(delta_row[0], 1e-9));
  }
}

TEST_CASE("truth variance grows by one innovation per year beyond the data") {
  auto layout = tiny_layout(9, {2000, 2003});
  auto spec = tiny_spec(layout, 0.6, 0.2);
  auto obs = SpeciesSeries::empty(OutputKind::kYield, layout.obs_years, {0});
  for (int y = 2000; y <= 2003; ++y) obs.set(0, y, 1.0 + 0.1 * (y - 2000));

  const auto sm = predict_truth(spec, obs, {});
  const int t_last = layout.grid.offset(2003);
  for (int t = t_last; t + 1 < layout.grid.size(); ++t) {
    CHECK_THAT(sm.truth_var(0, t + 1) - sm.truth_var(0, t),
               Catch::Matchers::WithinAbs(0.6 * 0.6, 1e-10));
    CHECK_THAT(sm.truth_mean(0, t + 1),
               Catch::Matchers::WithinAbs(sm.truth_mean(0, t), 1e-10));
  }
}

TEST_CASE("smoothed truth pins to the data as observation noise vanishes") {
  auto layout = tiny_layout(4, {2000, 2003});
  auto spec = tiny_spec(layout, 0.5, 1e-4);
  auto obs = SpeciesSeries::empty(OutputKind::kYield, layout.obs_years, {0});
  std::vector<double> vals{2.0, 2.3, 1.9, 2.6};
  for (int y = 2000; y <= 2003; ++y) obs.set(0, y, vals[static_cast<size_t>(y - 2000)]);

  const auto sm = predict_truth(spec, obs, {});
  for (int t = 0; t < 4; ++t) {
    CHECK_THAT(sm.truth_mean(0, t),
               Catch::Matchers::WithinAbs(vals[static_cast<size_t>(t)], 1e-6));
    CHECK(sm.truth_var(0, t) < 1e-6);
  }
}

TEST_CASE("likelihood is invariant under simulator reordering") {
  auto inst = mmsy_test::random_small_instance(5, 2, 2, 5);
  for (uint64_t seed = 6; inst.spec.layout.num_sims() != 2; ++seed) {
    REQUIRE(seed < 100);
    inst = mmsy_test::random_small_instance(seed, 2, 2, 5);
  }
  REQUIRE(inst.spec.layout.num_sims() == 2);
  const double base = log_likelihood(inst.spec, inst.obs, inst.sims);

  EnsembleSpec swapped = inst.spec;
  std::swap(swapped.layout.sims[0], swapped.layout.sims[1]);
  std::swap(swapped.sims[0], swapped.sims[1]);
  std::vector<SpeciesSeries> sims{inst.sims[1], inst.sims[0]};
  CHECK_THAT(log_likelihood(swapped, inst.obs, sims),
             Catch::Matchers::WithinAbs(base, 1e-10));
}

TEST_CASE("spec and data validation rejects inconsistent shapes") {
  auto layout = tiny_layout(3, {2000, 2002});
  auto spec = tiny_spec(layout, 0.5, 0.5);
  auto obs = SpeciesSeries::empty(OutputKind::kYield, layout.obs_years, {0});

  SECTION("negative sd") {
    spec.sd_truth[0] = -1.0;
    CHECK_THROWS_AS(log_likelihood(spec, obs, {}), ValidationError);
  }
  SECTION("ar outside the unit interval") {
    spec.ar_shared[0] = 1.0;
    CHECK_THROWS_AS(log_likelihood(spec, obs, {}), ValidationError);
  }
  SECTION("simulator series mismatch") {
    CHECK_THROWS_AS(BoundEnsemble(layout, obs, {obs}), ValidationError);
  }
  SECTION("observation years outside the grid") {
    auto wide = SpeciesSeries::empty(OutputKind::kYield, {1999, 2002}, {0});
    CHECK_THROWS_AS(BoundEnsemble(layout, wide, {}), ValidationError);
  }
}

TEST_CASE("posterior equals the prior when every cell is absent") {
  auto layout = tiny_layout(3, {2000, 2002});
  auto obs = SpeciesSeries::empty(OutputKind::kYield, layout.obs_years, {0});

  McmcConfig cfg;
  cfg.iterations = 1500;
  cfg.burn_in = 500;
  cfg.chains = 2;
  cfg.draws = 400;
  const auto post = fit(layout, obs, {}, cfg, 2024);

  REQUIRE(post.num_draws() == 400);
  REQUIRE(post.names.size() == 4);  // one species, no simulators

  // ar_shared ~ U(-1,1): roughly half the draws above zero, spread wide.
  int ar_col = -1, sd_col = -1;
  for (size_t p = 0; p < post.names.size(); ++p) {
    if (post.names[p] == "ar_shared[1]") ar_col = static_cast<int>(p);
    if (post.names[p] == "sd_truth[1]") sd_col = static_cast<int>(p);
  }
  REQUIRE(ar_col >= 0);
  REQUIRE(sd_col >= 0);

  int ar_pos = 0;
  double ar_abs = 0.0;
  std::vector<double> sds;
  for (int d = 0; d < post.num_draws(); ++d) {
    if (post.draws(d, ar_col) > 0.0) ++ar_pos;
    ar_abs += std::abs(post.draws(d, ar_col));
    sds.push_back(post.draws(d, sd_col));
  }
  const double frac_pos = double(ar_pos) / post.num_draws();
  CHECK(frac_pos > 0.30);
  CHECK(frac_pos < 0.70);
  CHECK(ar_abs / post.num_draws() > 0.25);  // uniform gives 0.5

  // Half-normal(1) median is 0.674; allow generous Monte Carlo slack.
  std::sort(sds.begin(), sds.end());
  const double median = sds[sds.size() / 2];
  CHECK(median > 0.35);
  CHECK(median < 1.1);
}

TEST_CASE("posterior concentrates near the generating noise scales") {
  EnsembleLayout layout;
  layout.n_species = 1;
  layout.grid = {1990, 2029};
  layout.obs_years = {1990, 2029};
  layout.sims.push_back({{0}, {1990, 2029}});

  EnsembleSpec truth = sample_prior_spec(layout, {}, 7);
  truth.sd_truth[0] = 0.3;
  truth.sd_obs[0] = 0.25;
  truth.ar_shared[0] = 0.4;
  truth.sd_shared[0] = 0.3;
  truth.sims[0].sd_longterm[0] = 0.5;
  truth.sims[0].ar_sim[0] = 0.3;
  truth.sims[0].sd_sim[0] = 0.3;
  truth.sims[0].sd_output[0] = 0.2;

  const auto data = simulate_observations(truth, 99);

  McmcConfig cfg;
  cfg.iterations = 1200;
  cfg.burn_in = 600;
  cfg.chains = 2;
  cfg.draws = 100;
  const auto post = fit(layout, data.obs, data.sims, cfg, 31);

  CHECK(post.diagnostics.acceptance_rate > 0.09);
  CHECK(post.diagnostics.acceptance_rate < 0.6);

  // sd_obs is well identified by 40 direct observations.
  int col = -1;
  for (size_t p = 0; p < post.names.size(); ++p)
    if (post.names[p] == "sd_obs[1]") col = static_cast<int>(p);
  REQUIRE(col >= 0);
  const double mean = post.draws.col(col).mean();
  CHECK(mean > 0.1);
  CHECK(mean < 0.8);
}

TEST_CASE("thinning spreads draws over chains and keeps the draw budget") {
  auto layout = tiny_layout(3, {2000, 2002});
  auto obs = SpeciesSeries::empty(OutputKind::kYield, layout.obs_years, {0});
  obs.set(0, 2001, 1.0);

  McmcConfig cfg;
  cfg.iterations = 60;
  cfg.burn_in = 20;
  cfg.chains = 3;
  cfg.draws = 10;
  const auto post = fit(layout, obs, {}, cfg, 5);
  REQUIRE(post.num_draws() == 10);
  CHECK(post.draws.allFinite());

  // Every draw reconstitutes into a valid spec.
  for (int d = 0; d < post.num_draws(); ++d)
    CHECK_NOTHROW(post.spec_for_draw(d).validate());

  SECTION("draw budget outside the feasible range is rejected") {
    cfg.draws = 2;  // fewer than chains
    CHECK_THROWS_AS(fit(layout, obs, {}, cfg, 5), ValidationError);
    cfg.draws = 500;  // more than kept draws
    CHECK_THROWS_AS(fit(layout, obs, {}, cfg, 5), ValidationError);
  }
}

TEST_CASE("fit is deterministic in the seed") {
  auto inst = mmsy_test::random_small_instance(3, 2, 1, 5);
  McmcConfig cfg;
  cfg.iterations = 80;
  cfg.burn_in = 40;
  cfg.chains = 2;
  cfg.draws = 8;
  const auto a = fit(inst.spec.layout, inst.obs, inst.sims, cfg, 11);
  const auto b = fit(inst.spec.layout, inst.obs, inst.sims, cfg, 11);
  const auto c = fit(inst.spec.layout, inst.obs, inst.sims, cfg, 12);
  CHECK(a.draws == b.draws);
  CHECK(a.draws != c.draws);
}

TEST_CASE("non-finite data fails fast with the iteration index") {
  auto layout = tiny_layout(3, {2000, 2002});
  auto obs = SpeciesSeries::empty(OutputKind::kYield, layout.obs_years, {0});
  obs.set(0, 2000, std::numeric_limits<double>::quiet_NaN());

  McmcConfig cfg;
  cfg.iterations = 20;
  cfg.burn_in = 5;
  cfg.chains = 1;
  cfg.draws = 1;
  try {
    fit(layout, obs, {}, cfg, 1);
    FAIL("expected FitError");
  } catch (const FitError& e) {
    CHECK(e.iteration() == 0);
  }
}

TEST_CASE("posterior archive round-trips exactly") {
  auto inst = mmsy_test::random_small_instance(4, 2, 2, 4);
  McmcConfig cfg;
  cfg.iterations = 40;
  cfg.burn_in = 20;
  cfg.chains = 2;
  cfg.draws = 6;
  const auto post = fit(inst.spec.layout, inst.obs, inst.sims, cfg, 21);

  mmsy_test::TempDir dir;
  const auto path = dir.file("posterior.csv");
  save_posterior(path, post);
  const auto loaded = load_posterior(path, inst.spec.layout);
  REQUIRE(loaded.names == post.names);
  REQUIRE(loaded.draws.rows() == post.draws.rows());
  CHECK(loaded.draws == post.draws);

  SECTION("missing cells are rejected") {
    csv::Writer w(dir.file("broken.csv"));
    w.header({"draw", "param", "value"});
    {
      auto row = w.row();
      row.integer(1).text(post.names[0]).num(0.5);
    }
    w.close();
    CHECK_THROWS_AS(load_posterior(dir.file("broken.csv"), inst.spec.layout),
                    ParseError);
  }
}

TEST_CASE("mixture summaries match closed-form cases") {
  // Identical components collapse to a single Gaussian quantile.
  const int D = 8;
  Matrix ym = Matrix::Constant(D, 2, 3.0);
  Matrix yv = Matrix::Constant(D, 2, 0.0);
  Matrix sm = Matrix::Constant(D, 2, 1.0);
  Matrix sv = Matrix::Constant(D, 2, 0.25);
  const auto s = long_term_summaries(ym, yv, sm, sv);
  CHECK_THAT(s.yield_mean[0], Catch::Matchers::WithinAbs(3.0, 1e-12));
  const double z25 = -0.6744897501960817;  // standard normal 25th percentile
  CHECK_THAT(s.ssb_q25[1], Catch::Matchers::WithinAbs(1.0 + 0.5 * z25, 1e-6));

  // Two well-separated halves: the mixture's 25th percentile is the lower
  // component's median.
  Matrix sm2(2, 1), sv2(2, 1);
  sm2 << -10.0, 10.0;
  sv2 << 1.0, 1.0;
  const auto s2 = long_term_summaries(Matrix::Zero(2, 1), Matrix::Zero(2, 1),
                                      sm2, sv2);
  CHECK_THAT(s2.ssb_q25[0], Catch::Matchers::WithinAbs(-10.0, 1e-6));
}

TEST_CASE("split R-hat flags chains stuck in different modes") {
  auto inst = mmsy_test::random_small_instance(8, 1, 1, 5);
  McmcConfig cfg;
  cfg.iterations = 400;
  cfg.burn_in = 200;
  cfg.chains = 2;
  cfg.draws = 20;
  const auto post = fit(inst.spec.layout, inst.obs, inst.sims, cfg, 17);
  CHECK(post.diagnostics.split_rhat.size() == static_cast<long>(post.names.size()));
  CHECK(post.diagnostics.max_split_rhat >= 1.0);
  CHECK(post.diagnostics.max_split_rhat ==
        post.diagnostics.split_rhat.maxCoeff());
}
