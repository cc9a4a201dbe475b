// Generates the bundled synthetic dataset: the species catalog, a fishing
// history, stock-assessment style observations of yield and SSB produced by
// an out-of-ensemble "nature" operating model under that history, and a
// deflated price series ending at the catalog prices.
//
// B_lim per species is the lowest observed SSB: thresholds sit at each
// stock's historical worst point, so projections at moderate effort clear
// them while sustained high effort breaches them, keeping the risk
// constraint active without being unsatisfiable.
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mmsy/csv.hpp"
#include "mmsy/data.hpp"
#include "mmsy/dynamics.hpp"
#include "mmsy/types.hpp"

namespace {

using namespace mmsy;

struct SpeciesRow {
  const char* name;
  double price;    // currency per tonne, deflated, final-year level
  double ss_fmsy;  // < 0 means no single-species F_MSY
};

constexpr std::array<SpeciesRow, kNumSpecies> kRows = {{
    {"sandeel", 1314.59, -1.0},
    {"norway_pout", 151.96, -1.0},
    {"herring", 528.34, 0.33},
    {"whiting", 785.30, 0.15},
    {"sole", 8387.12, 0.20},
    {"plaice", 1718.21, 0.21},
    {"haddock", 1346.99, 0.19},
    {"cod", 1745.22, 0.31},
    {"saithe", 855.33, 0.36},
}};

// Peak fishing mortality circa 2000, per species. Kept near each stock's
// intrinsic growth rate so the history depletes without extirpating: the
// slow flatfish and gadoids dip hardest, the fast industrial stocks least.
constexpr std::array<double, kNumSpecies> kPeakF = {
    0.87, 0.91, 0.62, 0.82, 0.48, 0.41, 0.60, 0.57, 0.45};

double history_shape(int year) {
  if (year <= 2000) return 1.0 + 0.1 * (year - 1984) / 16.0;
  return 1.1 - 0.55 * (year - 2000) / 17.0;
}

FishingHistory make_history(YearRange years, uint64_t seed) {
  FishingHistory h;
  h.years = years;
  h.f.resize(kNumSpecies, years.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.08);
  for (int i = 0; i < kNumSpecies; ++i) {
    double e = 0.0;
    for (int c = 0; c < years.size(); ++c) {
      e = 0.6 * e + noise(rng);
      const double f =
          kPeakF[static_cast<size_t>(i)] * history_shape(years.first + c) *
          std::exp(e);
      h.f(i, c) = std::clamp(f, 0.02, 1.95);
    }
  }
  h.validate();
  return h;
}

dynamics::SimulatorPort nature_port(YearRange years) {
  dynamics::SimulatorPort port;
  port.id = 99;
  port.name = "nature";
  port.species.resize(kNumSpecies);
  for (int i = 0; i < kNumSpecies; ++i)
    port.species[static_cast<size_t>(i)] = i;
  port.years = years;
  return port;
}

// Observation series: nature's log output plus assessment noise, with the
// industrial stocks (rows 1-2) unassessed before 1986.
SpeciesSeries observe(const SpeciesSeries& truth, double sd, uint64_t seed) {
  std::vector<int> all(kNumSpecies);
  for (int i = 0; i < kNumSpecies; ++i) all[static_cast<size_t>(i)] = i;
  SpeciesSeries obs = SpeciesSeries::empty(truth.kind, truth.years, all);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sd);
  for (int i = 0; i < kNumSpecies; ++i)
    for (int c = 0; c < truth.years.size(); ++c) {
      const int year = truth.years.first + c;
      if (i <= 1 && year < 1986) continue;
      obs.set(i, year, truth.log_values(i, c) + noise(rng));
    }
  obs.validate();
  return obs;
}

void save_observations(const std::string& path, const SpeciesSeries& obs,
                       const SpeciesCatalog& catalog) {
  csv::Writer w(path);
  w.header({"year", "species", "tonnes"});
  for (int c = 0; c < obs.years.size(); ++c)
    for (int i = 0; i < obs.rows(); ++i)
      if (obs.present(i, c))
        w.row()
            .integer(obs.years.first + c)
            .text(catalog.at(obs.species[static_cast<size_t>(i)]).name)
            .num(std::exp(obs.log_values(i, c)));
}

// Deflated price series: AR(1) log deviations around the catalog level,
// rescaled so the final year lands exactly on it.
void save_price_series(const std::string& path, YearRange years,
                       const SpeciesCatalog& catalog, uint64_t seed) {
  csv::Writer w(path);
  w.header({"year", "species", "price_per_tonne"});
  std::mt19937_64 rng(seed);
  const double phi = 0.85, sd = 0.07;
  std::normal_distribution<double> noise(0.0, sd);
  std::normal_distribution<double> initial(0.0,
                                           sd / std::sqrt(1.0 - phi * phi));
  Matrix dev(kNumSpecies, years.size());
  for (int i = 0; i < kNumSpecies; ++i) {
    dev(i, 0) = initial(rng);
    for (int c = 1; c < years.size(); ++c)
      dev(i, c) = phi * dev(i, c - 1) + noise(rng);
  }
  for (int c = 0; c < years.size(); ++c)
    for (int i = 0; i < kNumSpecies; ++i) {
      const double level = catalog.at(i).price_per_tonne *
                           std::exp(dev(i, c) - dev(i, years.size() - 1));
      w.row()
          .integer(years.first + c)
          .text(catalog.at(i).name)
          .num(std::round(level * 100.0) / 100.0);
    }
}

// B_lim as the lowest observed spawning biomass, the usual proxy when no
// stock-recruit breakpoint is estimated.
Vector bloss(const SpeciesSeries& obs_ssb) {
  Vector b_lim(kNumSpecies);
  for (int i = 0; i < kNumSpecies; ++i) {
    double lo = std::numeric_limits<double>::infinity();
    for (int c = 0; c < obs_ssb.years.size(); ++c)
      if (obs_ssb.present(i, c)) lo = std::min(lo, obs_ssb.log_values(i, c));
    b_lim[i] = std::round(std::exp(lo));
  }
  return b_lim;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"generate the bundled synthetic dataset"};
  std::string out_dir = "data";
  uint64_t seed = 7;
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "dataset seed");
  CLI11_PARSE(app, argc, argv);

  try {
    std::filesystem::create_directories(out_dir);
    const YearRange obs_years{1984, 2017};
    const YearRange price_years{1970, 2018};

    const FishingHistory history =
        make_history(obs_years, subseed(seed, "history"));
    const auto nature = dynamics::nature_model(subseed(seed, "nature"));
    const auto port = nature_port(obs_years);
    const auto [yield_truth, ssb_truth] =
        dynamics::run_scenario(nature, port, history, FishingScenario{});

    const SpeciesSeries obs_yield =
        observe(yield_truth, 0.15, subseed(seed, "obs-yield"));
    const SpeciesSeries obs_ssb =
        observe(ssb_truth, 0.12, subseed(seed, "obs-ssb"));

    SpeciesCatalog catalog;
    const Vector b_lim = bloss(obs_ssb);
    for (int i = 0; i < kNumSpecies; ++i) {
      SpeciesInfo info;
      info.index = i + 1;
      info.name = kRows[static_cast<size_t>(i)].name;
      info.b_lim_tonnes = b_lim[i];
      info.price_per_tonne = kRows[static_cast<size_t>(i)].price;
      if (kRows[static_cast<size_t>(i)].ss_fmsy > 0.0)
        info.ss_fmsy = kRows[static_cast<size_t>(i)].ss_fmsy;
      catalog.entries.push_back(std::move(info));
    }
    catalog.validate();

    const auto path = [&](const char* name) { return out_dir + "/" + name; };
    data::save_catalog(path("catalog.csv"), catalog);
    data::save_fhistory(path("fishing_history.csv"), history);
    save_observations(path("observed_yield.csv"), obs_yield, catalog);
    save_observations(path("observed_ssb.csv"), obs_ssb, catalog);
    save_price_series(path("prices.csv"), price_years, catalog,
                      subseed(seed, "prices"));

    std::cout << "wrote catalog, history, observations, prices to " << out_dir
              << "\n";
    for (int i = 0; i < kNumSpecies; ++i)
      std::cout << "  " << catalog.at(i).name << ": B_lim "
                << catalog.at(i).b_lim_tonnes << " t\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "make_dataset: " << e.what() << "\n";
    return 1;
  }
}
