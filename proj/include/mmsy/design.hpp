// Experimental designs on [lo,hi]^d: plain (unscrambled) Sobol' sequences up
// to 9 dimensions and Latin hypercube samples.
//
// Sobol convention: Joe-Kuo direction numbers, Gray-code point order, and the
// sequence starts at the all-zeros point. `skip` drops that many leading
// points; with skip = 0 the point at index 1 is 0.5 in every dimension.
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "mmsy/errors.hpp"
#include "mmsy/types.hpp"

namespace mmsy::design {

enum class Generator { kSobol, kLhc };

struct DesignBatch {
  Generator generator = Generator::kSobol;
  int dim = 0;
  double lo = 0.0, hi = 0.0;
  uint64_t seed = 0;  // LHC only
  int skip = 0;       // Sobol only
  Matrix points;      // n x dim

  int size() const { return static_cast<int>(points.rows()); }

  FishingScenario scenario(int row) const {
    if (dim != kNumSpecies)
      throw ValidationError("design batch is not 9-dimensional");
    FishingScenario s;
    for (int d = 0; d < kNumSpecies; ++d) s[d] = points(row, d);
    return s;
  }
};

namespace detail {

// Joe-Kuo direction-number table (new-joe-kuo-6) for dimensions 2..9; the
// first dimension is the van der Corput sequence in base 2.
struct SobolDim {
  int s;
  int a;
  std::array<uint32_t, 5> m;
};

inline constexpr std::array<SobolDim, 8> kJoeKuo{{
    {1, 0, {1, 0, 0, 0, 0}},
    {2, 1, {1, 3, 0, 0, 0}},
    {3, 1, {1, 3, 1, 0, 0}},
    {3, 2, {1, 1, 1, 0, 0}},
    {4, 1, {1, 1, 3, 3, 0}},
    {4, 4, {1, 3, 5, 13, 0}},
    {5, 2, {1, 1, 5, 5, 17}},
    {5, 4, {1, 1, 5, 5, 5}},
}};

inline constexpr int kSobolBits = 31;

// Direction numbers v[j] for one dimension, scaled so point = xor / 2^31.
inline std::array<uint32_t, kSobolBits> sobol_directions(int dim) {
  std::array<uint32_t, kSobolBits> v{};
  if (dim == 0) {
    for (int j = 0; j < kSobolBits; ++j)
      v[static_cast<size_t>(j)] = 1u << (kSobolBits - 1 - j);
    return v;
  }
  const SobolDim& dn = kJoeKuo[static_cast<size_t>(dim - 1)];
  const int s = dn.s;
  std::vector<uint32_t> m(static_cast<size_t>(kSobolBits));
  for (int j = 0; j < s; ++j) m[static_cast<size_t>(j)] = dn.m[static_cast<size_t>(j)];
  for (int j = s; j < kSobolBits; ++j) {
    uint32_t val = m[static_cast<size_t>(j - s)] ^ (m[static_cast<size_t>(j - s)] << s);
    for (int k = 1; k < s; ++k)
      if ((dn.a >> (s - 1 - k)) & 1) val ^= m[static_cast<size_t>(j - k)] << k;
    m[static_cast<size_t>(j)] = val;
  }
  for (int j = 0; j < kSobolBits; ++j)
    v[static_cast<size_t>(j)] =
        m[static_cast<size_t>(j)] << (kSobolBits - 1 - j);
  return v;
}

inline int lowest_zero_bit(uint64_t n) {
  int c = 0;
  while (n & 1u) {
    n >>= 1;
    ++c;
  }
  return c;
}

}  // namespace detail

// First n points of the d-dimensional Sobol sequence after `skip`, scaled from
// [0,1) to [lo,hi).
inline DesignBatch sobol(int n, int d = kNumSpecies, int skip = 0,
                         double lo = kFLower, double hi = kFUpper) {
  if (n < 1) throw ValidationError("sobol: n must be >= 1");
  if (d < 1 || d > kNumSpecies)
    throw ValidationError("sobol: direction numbers available for d <= 9");
  if (skip < 0) throw ValidationError("sobol: skip must be >= 0");

  std::vector<std::array<uint32_t, detail::kSobolBits>> v;
  v.reserve(static_cast<size_t>(d));
  for (int dim = 0; dim < d; ++dim) v.push_back(detail::sobol_directions(dim));

  DesignBatch batch;
  batch.generator = Generator::kSobol;
  batch.dim = d;
  batch.lo = lo;
  batch.hi = hi;
  batch.skip = skip;
  batch.points = Matrix::Zero(n, d);

  const double scale = (hi - lo) / static_cast<double>(1u << detail::kSobolBits);
  std::vector<uint32_t> x(static_cast<size_t>(d), 0u);
  // Gray-code recurrence: point k+1 flips direction number c(k), where c is
  // the index of the lowest zero bit of k.
  for (uint64_t k = 0; k < static_cast<uint64_t>(skip) + static_cast<uint64_t>(n); ++k) {
    if (k >= static_cast<uint64_t>(skip)) {
      const int row = static_cast<int>(k) - skip;
      for (int dim = 0; dim < d; ++dim)
        batch.points(row, dim) = lo + scale * static_cast<double>(x[static_cast<size_t>(dim)]);
    }
    const int c = detail::lowest_zero_bit(k);
    if (c >= detail::kSobolBits)
      throw ValidationError("sobol: sequence index exceeds 2^31 points");
    for (int dim = 0; dim < d; ++dim)
      x[static_cast<size_t>(dim)] ^= v[static_cast<size_t>(dim)][static_cast<size_t>(c)];
  }
  return batch;
}

// Latin hypercube: per dimension an independent random permutation of the n
// strata plus uniform jitter within each stratum (McKay construction).
inline DesignBatch lhc(int n, int d, double lo = kFLower, double hi = kFUpper,
                       uint64_t seed = 0) {
  if (n < 1) throw ValidationError("lhc: n must be >= 1");
  if (d < 1) throw ValidationError("lhc: d must be >= 1");

  DesignBatch batch;
  batch.generator = Generator::kLhc;
  batch.dim = d;
  batch.lo = lo;
  batch.hi = hi;
  batch.seed = seed;
  batch.points = Matrix::Zero(n, d);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double width = (hi - lo) / static_cast<double>(n);
  std::vector<int> strata(static_cast<size_t>(n));
  for (int dim = 0; dim < d; ++dim) {
    std::iota(strata.begin(), strata.end(), 0);
    std::shuffle(strata.begin(), strata.end(), rng);
    for (int i = 0; i < n; ++i)
      batch.points(i, dim) =
          lo + (static_cast<double>(strata[static_cast<size_t>(i)]) + unit(rng)) * width;
  }
  return batch;
}

}  // namespace mmsy::design
