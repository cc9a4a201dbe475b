// Randomized small ensemble instances: a random layout (species count,
// simulator coverage, year windows), a random hyperparameter spec, and data
// simulated from the model itself with a fraction of cells dropped. Small
// enough that the dense joint-Gaussian reference stays cheap.
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mmsy/ensemble.hpp"
#include "mmsy/types.hpp"

namespace mmsy_test {

struct RandomInstance {
  mmsy::ensemble::EnsembleSpec spec;
  mmsy::SpeciesSeries obs;
  std::vector<mmsy::SpeciesSeries> sims;
};

inline RandomInstance random_small_instance(uint64_t seed, int max_species = 2,
                                            int max_sims = 2,
                                            int max_years = 4) {
  std::mt19937_64 rng(seed);
  auto pick_int = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  auto pick = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };

  mmsy::ensemble::EnsembleLayout layout;
  layout.n_species = pick_int(1, max_species);
  const int first = 2000;
  const int T = pick_int(2, max_years);
  layout.grid = {first, first + T - 1};
  {
    const int a = pick_int(0, T - 1);
    const int b = pick_int(0, T - 1);
    layout.obs_years = {first + std::min(a, b), first + std::max(a, b)};
  }
  const int K = pick_int(0, max_sims);
  for (int k = 0; k < K; ++k) {
    mmsy::ensemble::SimulatorLayout sim;
    for (int i = 0; i < layout.n_species; ++i)
      if (pick(0.0, 1.0) < 0.7) sim.species.push_back(i);
    if (sim.species.empty()) sim.species.push_back(pick_int(0, layout.n_species - 1));
    const int a = pick_int(0, T - 1);
    const int b = pick_int(0, T - 1);
    sim.years = {first + std::min(a, b), first + std::max(a, b)};
    layout.sims.push_back(std::move(sim));
  }

  mmsy::ensemble::EnsembleSpec spec;
  spec.layout = layout;
  spec.truth_init_mean = pick(-1.0, 1.0);
  spec.truth_init_sd = pick(2.0, 6.0);
  spec.delta_prior_sd = pick(0.5, 3.0);
  const int n = layout.n_species;
  spec.sd_truth = mmsy::Vector::Zero(n);
  spec.sd_obs = mmsy::Vector::Zero(n);
  spec.ar_shared = mmsy::Vector::Zero(n);
  spec.sd_shared = mmsy::Vector::Zero(n);
  for (int i = 0; i < n; ++i) {
    spec.sd_truth[i] = pick(0.3, 2.0);
    spec.sd_obs[i] = pick(0.3, 2.0);
    spec.ar_shared[i] = pick(-0.8, 0.8);
    spec.sd_shared[i] = pick(0.3, 2.0);
  }
  for (int k = 0; k < K; ++k) {
    const int nk = static_cast<int>(layout.sims[static_cast<size_t>(k)].species.size());
    mmsy::ensemble::SimHyper h;
    h.sd_longterm = mmsy::Vector::Zero(nk);
    h.ar_sim = mmsy::Vector::Zero(nk);
    h.sd_sim = mmsy::Vector::Zero(nk);
    h.sd_output = mmsy::Vector::Zero(nk);
    for (int r = 0; r < nk; ++r) {
      h.sd_longterm[r] = pick(0.3, 2.0);
      h.ar_sim[r] = pick(-0.8, 0.8);
      h.sd_sim[r] = pick(0.3, 2.0);
      h.sd_output[r] = pick(0.3, 2.0);
    }
    spec.sims.push_back(std::move(h));
  }

  auto data = mmsy::ensemble::simulate_observations(spec, seed ^ 0x5bd1e995u);
  RandomInstance inst{spec, std::move(data.obs), std::move(data.sims)};

  // Drop ~25% of cells so ragged coverage is exercised.
  auto drop = [&](mmsy::SpeciesSeries& s) {
    for (int r = 0; r < s.rows(); ++r)
      for (int c = 0; c < s.years.size(); ++c)
        if (pick(0.0, 1.0) < 0.25) s.present(r, c) = false;
  };
  drop(inst.obs);
  for (auto& s : inst.sims) drop(s);
  return inst;
}

}  // namespace mmsy_test
