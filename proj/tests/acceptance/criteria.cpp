// Acceptance criterion implementations. Tolerances are pinned here; they are
// the release gate and must not be loosened to make a failing build green.
//
// Each criterion carries its own oracle: dense joint-Gaussian conditioning
// for the smoother, dense linear solves for the emulator, long-double
// closed forms for the kernel, exhaustive grid enumeration for the
// equilibrium search, artifact-level risk recomputation for the end-to-end
// run, and simulation-based calibration for the sampler.
#include "criteria.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mmsy/csv.hpp"
#include "mmsy/data.hpp"
#include "mmsy/design.hpp"
#include "mmsy/emulator.hpp"
#include "mmsy/ensemble.hpp"
#include "mmsy/nash.hpp"
#include "mmsy/pipeline.hpp"
#include "mmsy/stats.hpp"
#include "mmsy/types.hpp"
#include "support/joint_gaussian.hpp"
#include "support/quadratic_game.hpp"
#include "support/random_instances.hpp"

#ifndef MMSY_DATA_DIR
#error "MMSY_DATA_DIR must point at the bundled dataset"
#endif

namespace mmsy_acceptance {

namespace {

bool rel_close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

std::filesystem::path scratch_dir(const char* leaf) {
  const auto dir = std::filesystem::temp_directory_path() / leaf;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

// Ensemble likelihood and smoothed moments against dense joint-Gaussian
// conditioning on randomized ragged instances, 1e-8 relative.
bool smoother_exactness(std::string& detail) {
  using namespace mmsy;
  constexpr double kTol = 1e-8;
  int informative = 0, checked = 0;
  double worst = 0.0;
  auto gap = [&](double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
  };

  for (uint64_t seed = 301; seed < 361 && informative < 20; ++seed) {
    const auto inst = mmsy_test::random_small_instance(seed);
    const ensemble::BoundEnsemble bound(inst.spec.layout, inst.obs, inst.sims);
    const auto sm = bound.smooth(inst.spec);
    const auto oracle =
        mmsy_test::brute_force_oracle(inst.spec, inst.obs, inst.sims);
    if (oracle.log_likelihood != 0.0) ++informative;
    ++checked;

    worst = std::max(worst, gap(sm.log_likelihood, oracle.log_likelihood));
    const int n = inst.spec.layout.n_species;
    const int T = inst.spec.layout.grid.size();
    for (int i = 0; i < n; ++i) {
      const auto& chain = sm.chains[static_cast<size_t>(i)];
      for (int t = 0; t < T; ++t) {
        worst = std::max(worst, gap(sm.truth_mean(i, t), oracle.truth_mean(i, t)));
        worst = std::max(worst, gap(sm.truth_var(i, t), oracle.truth_var(i, t)));
        worst = std::max(worst, gap(sm.eta_mean(i, t), oracle.eta_mean(i, t)));
        worst = std::max tosses(0.0, 0.0);
      }
      const int last = T - 1;
      worst = std::max(worst,
                       gap(chain.var(ensemble::detail::kStateEta, last),
                           oracle.eta_var(i, last)));
      worst = std::max(worst, gap(sm.delta_mean[i], oracle.delta_mean[i]));
      worst = std::max(worst,
                       gap(chain.var(ensemble::detail::kStateDelta, last),
                           oracle.delta_var[i]));
    }
    if (worst > kTol) {
      std::ostringstream os;
      os << "seed " << seed << " deviates by " << worst;
      detail = os.str();
      return false;
    }
  }
  if (informative < 20) {
    detail = "fewer than 20 informative instances";
    return false;
  }
  std::ostringstream os;
  os << checked << " instances (" << informative
     << " informative), worst relative gap " << worst;
  detail = os.str();
  return true;
}

// Zero-nugget surfaces interpolate their training targets; a pinned 3-point
// one-dimensional surface matches a dense direct solve.
bool emulator_exactness(std::string& detail) {
  using namespace mmsy;

  // Interpolation through the production fitting path with the nugget pinned
  // to zero.
  {
    const auto batch = design::sobol(48, kNumSpecies, 11);
    std::vector<FishingScenario> design_pts;
    Vector targets(batch.size());
    for (int l = 0; l < batch.size(); ++l) {
      FishingScenario f;
      for (int d = 0; d < kNumSpecies; ++d) f[d] = batch.points(l, d);
      design_pts.push_back(f);
      targets[l] = std::sin(1.3 * f[0]) + 0.8 * std::cos(0.9 * f[1]) +
                   0.5 * std::sin(f[2] + 0.4) + 0.3 * f[3] * f[3] -
                   0.4 * f[4] + 0.25 * f[5] * f[0] +
                   0.2 * std::cos(1.1 * f[6]) + 0.15 * f[7] +
                   0.1 * std::sin(2.0 * f[8]);
    }
    std::vector<int> active(kNumSpecies);
    for (int d = 0; d < kNumSpecies; ++d) active[static_cast<size_t>(d)] = d;
    emulator::FitOptions opt;
    opt.restarts = 2;
    opt.max_iter = 150;
    opt.fixed_nugget_ratio = 0.0;
    opt.seed = 5;
    const auto surface = emulator::fit_surface(design_pts, targets, active, opt);
    double worst = 0.0;
    for (int l = 0; l < batch.size(); ++l) {
      const double m = surface.predict(design_pts[static_cast<size_t>(l)]).mean;
      worst = std::max(worst, std::abs(m - targets[l]) /
                                  std::max(1.0, std::abs(targets[l])));
    }
    if (worst > 1e-6) {
      std::ostringstream os;
      os << "zero-nugget interpolation off by " << worst;
      detail = os.str();
      return false;
    }
  }

  // Pinned 3-point surface in one active dimension against a dense solve
  // with an independent factorization.
  {
    Matrix design = Matrix::Ones(3, kNumSpecies);
    design(0, 0) = 0.15;
    design(1, 0) = 0.8;
    design(2, 0) = 1.9;
    Vector targets(3);
    targets << 1.4, 0.3, -0.9;

    emulator::MeanModel mean;
    mean.beta = Vector::Constant(1, 0.35);
    emulator::KernelSpec kernel;
    kernel.sigma2 = 1.6;
    kernel.nugget = 0.2;
    kernel.rho[0] = 0.5;
    const auto surface = emulator::make_surface(design, targets, mean, kernel);

    auto m52 = [](double u) {
      const long double r5 = std::sqrt(5.0L);
      return static_cast<double>((1.0L + r5 * u + 5.0L / 3.0L * u * u) *
                                 std::exp(-r5 * u));
    };
    Matrix big(3, 3);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        big(a, b) = 1.6 * m52(std::abs(design(a, 0) - design(b, 0)) / 0.5) +
                    (a == b ? 0.2 : 0.0);
    const Eigen::FullPivLU<Matrix> lu(big);
    const Vector w = lu.solve(Vector(targets.array() - 0.35));

    double worst = 0.0;
    for (double q : {0.05, 0.42, 1.1, 1.55, 2.0}) {
      FishingScenario x;
      for (int d = 0; d < kNumSpecies; ++d) x[d] = 1.0;
      x[0] = q;
      Vector kx(3);
      for (int a = 0; a < 3; ++a)
        kx[a] = 1.6 * m52(std::abs(q - design(a, 0)) / 0.5);
      const double mean_ref = 0.35 + kx.dot(w);
      const double var_ref = 1.6 - kx.dot(lu.solve(kx));
      const auto p = surface.predict(x);
      worst = std::max(worst, std::abs(p.mean - mean_ref));
      worst = std::max(worst, std::abs(p.variance - var_ref));
    }
    if (worst > 1e-10) {
      std::ostringstream os;
      os << "dense-solve deviation " << worst;
      detail = os.str();
      return false;
    }
  }

  detail = "zero-nugget interpolation 1e-6; dense 1-D solve 1e-10";
  return true;
}

// Matern 5/2 correlation at unit scaled distance against a long-double
// evaluation of the closed form.
bool kernel_value(std::string& detail) {
  const long double r5 = std::sqrt(5.0L);
  const long double ref = (1.0L + r5 + 5.0L / 3.0L) * std::exp(-r5);
  const double got = mmsy::emulator::matern52(1.0);
  const double gap = std::abs(got - static_cast<double>(ref));
  std::ostringstream os;
  os << "m52(1) = " << got << ", gap " << gap;
  detail = os.str();
  return gap <= 1e-12;
}

// Search fixed points against exhaustive 201x201 grid enumeration on the
// coupled-pair quadratic game, ten seeds, within two grid cells.
bool nash_grid(std::string& detail) {
  using namespace mmsy;
  const double cell = (kFUpper - kFLower) / 200.0;
  const double tol = 2.0 * cell + 1e-12;
  double worst = 0.0;

  for (uint64_t seed = 1; seed <= 10; ++seed) {
    const auto pg = mmsy_test::make_pair_game(seed);
    const auto cells = mmsy_test::grid_nash_cells(pg, 201);
    if (cells.empty()) {
      std::ostringstream os;
      os << "seed " << seed << ": grid oracle found no equilibrium";
      detail = os.str();
      return false;
    }

    nash::SearchConfig cfg;
    cfg.init_pool = 4000;
    cfg.response_pool = 400;
    cfg.msy_grid = 50;
    cfg.log_b_lim = pg.log_b_lim;
    const auto cand =
        nash::find_candidate(pg.game, cfg, 0xA11CE + seed, 0, 1);

    double best = std::numeric_limits<double>::infinity();
    for (const auto& [fa, fb] : cells)
      best = std::min(best, std::max(std::abs(cand.scenario[pg.a] - fa),
                                     std::abs(cand.scenario[pg.b] - fb)));
    worst = std::max(worst, best);
    if (best > tol) {
      std::ostringstream os;
      os << "seed " << seed << ": " << best << " from nearest grid Nash cell"
         << (pg.constrained ? " (constrained)" : "");
      detail = os.str();
      return false;
    }
  }
  std::ostringstream os;
  os << "10 seeds within " << tol << " of grid oracle (worst " << worst << ")";
  detail = os.str();
  return true;
}

// Reduced end-to-end run; every accepted candidate re-verified from the
// written artifacts with an independent risk recomputation.
bool risk_soundness(std::string& detail) {
  using namespace mmsy;
  namespace fs = std::filesystem;

  pipeline::Manifest m;
  m.catalog_path = MMSY_DATA_DIR "/catalog.csv";
  m.obs_yield_path = MMSY_DATA_DIR "/observed_yield.csv";
  m.obs_ssb_path = MMSY_DATA_DIR "/observed_ssb.csv";
  m.history_path = MMSY_DATA_DIR "/fishing_history.csv";
  m.prices_path = MMSY_DATA_DIR "/prices.csv";
  m.out_dir = scratch_dir("mmsy-acceptance-risk").string();
  m.master_seed = 37;
  m.run.round_sizes = {64, 20, 20, 20};
  m.run.draws = 20;
  pipeline::run_pipeline(m);

  const auto out = [&](const char* name) { return m.out_dir + "/" + name; };
  const auto catalog = data::load_catalog(m.catalog_path);
  const Vector lb = catalog.log_b_lim();

  const csv::Table acc = csv::read_file(out("acceptance.csv"));
  std::vector<std::string> fcols;
  for (int i = 1; i <= kNumSpecies; ++i) fcols.push_back("F" + std::to_string(i));
  acc.require_columns({"accepted", "risk_pass", "fixed_point"});
  acc.require_columns(fcols);

  const csv::Table scen = csv::read_file(out("scenarios.csv"));
  const auto table = pipeline::read_summaries(out("summaries_ssb.csv"));
  const int total = static_cast<int>(table.ids.size());
  const int n_cand = static_cast<int>(acc.rows.size());
  if (total != 64 + 3 * 20 || n_cand != 20) {
    detail = "unexpected scenario or candidate count";
    return false;
  }
  const int base = total - n_cand;

  // Pr(SSB_2050 < B_lim) per species from the posterior mixture, computed
  // here from scratch.
  auto mixture_below = [](const Matrix& mean, const Matrix& var, double bound,
                          int species) {
    double acc_p = 0.0;
    for (int d = 0; d < mean.rows(); ++d) {
      const double s = std::sqrt(std::max(0.0, var(d, species)));
      acc_p += s > 0.0
                   ? 0.5 * std::erfc((mean(d, species) - bound) / (s * M_SQRT2))
                   : (mean(d, species) < bound ? 1.0 : 0.0);
    }
    return acc_p / static_cast<double>(mean.rows());
  };

  int accepted = 0;
  for (int j = 0; j < n_cand; ++j) {
    const auto& row = acc.rows[static_cast<size_t>(j)];
    const int u = base + j;

    // The candidate's F vector must match the evaluated scenario bit for bit.
    const auto& srow = scen.rows[static_cast<size_t>(u)];
    for (int i = 0; i < kNumSpecies; ++i) {
      const int ca = acc.column(fcols[static_cast<size_t>(i)]);
      const int cs = scen.column(fcols[static_cast<size_t>(i)]);
      if (acc.number(row, ca) != scen.number(srow, cs)) {
        detail = "candidate F vector does not match its scenario row";
        return false;
      }
    }

    const bool flag_accepted = acc.number(row, acc.column("accepted")) != 0.0;
    const bool flag_risk = acc.number(row, acc.column("risk_pass")) != 0.0;
    const bool flag_fixed = acc.number(row, acc.column("fixed_point")) != 0.0;
    if (flag_accepted != (flag_risk && flag_fixed)) {
      detail = "accepted flag inconsistent with risk and fixed-point flags";
      return false;
    }
    if (!flag_accepted) continue;
    ++accepted;
    for (int i = 0; i < kNumSpecies; ++i) {
      const double pr = mixture_below(table.data.mean[static_cast<size_t>(u)],
                                      table.data.var[static_cast<size_t>(u)],
                                      lb[i], i);
      if (!(pr < 0.25)) {
        std::ostringstream os;
        os << "accepted candidate " << j << " fails re-verification: species "
           << i + 1 << " Pr = " << pr;
        detail = os.str();
        return false;
      }
    }
  }
  if (accepted == 0) {
    detail = "no candidates accepted; soundness check is vacuous";
    return false;
  }
  std::ostringstream os;
  os << accepted << " accepted candidates, all re-verified below 0.25";
  detail = os.str();
  return true;
}

// Reference-table fixtures: the published equilibria row parses exactly, the
// ledger round-trips at its published shape, and the catalog prices survive
// a save/load cycle unchanged.
bool paper_formats(std::string& detail) {
  using namespace mmsy;
  const auto dir = scratch_dir("mmsy-acceptance-formats");

  // Equilibria CSV: first published row, F vector plus revenue.
  {
    const std::array<double, kNumSpecies> f_ref = {1.05, 1.49, 0.46, 0.82, 0.31,
                                                   0.48, 0.94, 0.62, 1.10};
    const double rev_ref = 2.16;
    const auto fixture = dir / "equilibria.csv";
    {
      std::ofstream os(fixture);
      os << "F1,F2,F3,F4,F5,F6,F7,F8,F9,revenue\n"
         << "1.05,1.49,0.46,0.82,0.31,0.48,0.94,0.62,1.10,2.16\n";
    }
    const auto rows = nash::load_results(fixture.string());
    if (rows.size() != 1) {
      detail = "equilibria fixture did not parse to one row";
      return false;
    }
    for (int i = 0; i < kNumSpecies; ++i)
      if (rows[0].scenario[i] != f_ref[static_cast<size_t>(i)]) {
        detail = "equilibria F vector did not parse exactly";
        return false;
      }
    if (rows[0].revenue != rev_ref) {
      detail = "equilibria revenue did not parse exactly";
      return false;
    }
    const auto again = dir / "equilibria_again.csv";
    nash::save_results(again.string(), rows);
    const auto rows2 = nash::load_results(again.string());
    if (rows2.size() != 1 || rows2[0].revenue != rev_ref) {
      detail = "equilibria row did not survive a save/load cycle";
      return false;
    }
    for (int i = 0; i < kNumSpecies; ++i)
      if (rows2[0].scenario[i] != f_ref[static_cast<size_t>(i)]) {
        detail = "equilibria F vector did not survive a save/load cycle";
        return false;
      }
  }

  // Ledger at the published counts: 10 bins by 4 rounds.
  {
    const int counts[10][4] = {{0, 0, 0, 0},   {14, 0, 0, 0},  {45, 0, 0, 0},
                               {42, 0, 0, 0},  {37, 1, 0, 0},  {31, 12, 0, 0},
                               {19, 33, 2, 0}, {8, 43, 28, 13}, {0, 11, 46, 48},
                               {0, 0, 23, 39}};
    nash::RoundLedger ledger;
    ledger.rounds.resize(4);
    for (int r = 0; r < 4; ++r)
      for (int k = 0; k < 10; ++k)
        for (int c = 0; c < counts[k][r]; ++c)
          ledger.rounds[static_cast<size_t>(r)].push_back({FishingScenario{}, k});
    const auto path = dir / "ledger.csv";
    nash::save_ledger(path.string(), ledger);
    const Matrix loaded = nash::load_ledger_counts(path.string());
    if (loaded.rows() != 10 || loaded.cols() != 4) {
      detail = "ledger shape is not 10x4";
      return false;
    }
    for (int k = 0; k < 10; ++k)
      for (int r = 0; r < 4; ++r)
        if (loaded(k, r) != counts[k][r]) {
          detail = "ledger counts did not round-trip";
          return false;
        }
  }

  // Catalog prices: published values, exact through a save/load cycle.
  {
    const std::array<double, kNumSpecies> prices = {
        1314.59, 151.96, 528.34, 785.30, 8387.12,
        1718.21, 1346.99, 1745.22, 855.33};
    const auto catalog = data::load_catalog(MMSY_DATA_DIR "/catalog.csv");
    for (int i = 0; i < kNumSpecies; ++i)
      if (catalog.at(i).price_per_tonne != prices[static_cast<size_t>(i)]) {
        detail = "bundled catalog prices do not match the published values";
        return false;
      }
    const auto path = dir / "catalog.csv";
    data::save_catalog(path.string(), catalog);
    const auto again = data::load_catalog(path.string());
    for (int i = 0; i < kNumSpecies; ++i)
      if (again.at(i).price_per_tonne != prices[static_cast<size_t>(i)]) {
        detail = "catalog prices did not survive a save/load cycle";
        return false;
      }
  }

  detail = "equilibria row exact; ledger 10x4 round-trip; prices exact";
  return true;
}

// Latin hypercube stratification must hold exactly: each of the n strata per
// dimension contains exactly one point. Sobol batches are deterministic and
// stay inside the fishing-mortality box.
bool design_integrity(std::string& detail) {
  using namespace mmsy;
  for (int n : {1, 7, 500}) {
    const auto batch = design::lhc(n, kNumSpecies, kFLower, kFUpper,
                                   0x9d2c5680cafe0001ull + n);
    for (int d = 0; d < kNumSpecies; ++d) {
      std::set<int> strata;
      for (int i = 0; i < n; ++i) {
        const double u = (batch.points(i, d) - kFLower) /
                         (kFUpper - kFLower) * n;
        const int s = static_cast<int>(std::floor(u));
        if (s < 0 || s >= n) {
          detail = "lhc point outside [0,2]";
          return false;
        }
        strata.insert(s);
      }
      if (static_cast<int>(strata.size()) != n) {
        std::ostringstream os;
        os << "lhc n=" << n << " dim=" << d << " not stratified";
        detail = os.str();
        return false;
      }
    }
  }

  const auto a = design::sobol(196, kNumSpecies, 0);
  const auto b = design::sobol(196, kNumSpecies, 0);
  if ((a.points - b.points).cwiseAbs().maxCoeff() != 0.0) {
    detail = "sobol batch not deterministic";
    return false;
  }
  for (int i = 0; i < a.size(); ++i)
    for (int d = 0; d < kNumSpecies; ++d)
      if (a.points(i, d) < kFLower || a.points(i, d) > kFUpper) {
        detail = "sobol point outside [0,2]^9";
        return false;
      }
  detail = "lhc n in {1,7,500} stratified; sobol 196 deterministic in-bounds";
  return true;
}

// Simulation-based calibration of the hyperparameter sampler on a
// one-species, one-simulator instance: with data drawn from the model, the
// rank of the generating value among thinned posterior draws must be uniform
// for every hyperparameter.
bool calibration_uniformity(std::string& detail) {
  using namespace mmsy;

  ensemble::EnsembleLayout layout;
  layout.n_species = 1;
  layout.grid = {2000, 2017};
  layout.obs_years = layout.grid;
  {
    ensemble::SimulatorLayout sim;
    sim.species = {0};
    sim.years = layout.grid;
    layout.sims.push_back(sim);
  }
  const auto map = ensemble::detail::build_param_map(layout);
  const int P = map.size();

  constexpr int kReplicates = 200;
  constexpr int kDraws = 19;  // ranks 0..19: twenty bins, one per rank
  ensemble::McmcConfig cfg;
  cfg.iterations = 6000;
  cfg.burn_in = 2000;
  cfg.chains = 1;
  cfg.draws = kDraws;

  const uint64_t root = 20260814;
  Eigen::MatrixXi bins = Eigen::MatrixXi::Zero(P, kDraws + 1);
  for (int rep = 0; rep < kReplicates; ++rep) {
    const auto truth = ensemble::sample_prior_spec(
        layout, {}, subseed(root, "sbc-truth", rep));
    const auto data =
        ensemble::simulate_observations(truth, subseed(root, "sbc-data", rep));
    const auto post = ensemble::fit(layout, data.obs, data.sims, cfg,
                                    subseed(root, "sbc-chain", rep));
    for (int p = 0; p < P; ++p) {
      const double v =
          ensemble::detail::read_param(truth, map.entries[static_cast<size_t>(p)]);
      int rank = 0;
      for (int d = 0; d < kDraws; ++d)
        if (post.draws(d, p) < v) ++rank;
      bins(p, rank) += 1;
    }
  }

  const double expect = static_cast<double>(kReplicates) / (kDraws + 1);
  double min_p = 1.0;
  int min_param = 0;
  for (int p = 0; p < P; ++p) {
    double x2 = 0.0;
    for (int r = 0; r <= kDraws; ++r) {
      const double d = bins(p, r) - expect;
      x2 += d * d / expect;
    }
    const double pv = chi_square_sf(x2, kDraws);
    if (pv < min_p) {
      min_p = pv;
      min_param = p;
    }
  }

  std::ostringstream os;
  os << "min rank-uniformity p = " << min_p << " ("
     << map.entries[static_cast<size_t>(min_param)].name << ") over " << P
     << " hyperparameters";
  detail = os.str();
  return min_p > 0.01;
}

}  // namespace mmsy_acceptance
