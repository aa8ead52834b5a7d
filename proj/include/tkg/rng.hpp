#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace tkg {

// All sampling goes through these helpers instead of <random> distributions,
// whose output sequences are implementation-defined. This keeps runs
// reproducible across standard libraries.

using Rng = std::mt19937_64;

// Uniform integer in [0, n). Rejection sampling, n >= 1.
inline std::uint64_t rng_below(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

// Uniform double in [0, 1) with 53 random bits.
inline double rng_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform double in [lo, hi).
inline double rng_uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * rng_unit(rng);
}

// Fisher-Yates shuffle with the portable index sampler above.
template <typename T>
void rng_shuffle(Rng& rng, std::vector<T>& v) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng_below(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

// First k elements of a random permutation of [0, n).
inline std::vector<std::size_t> rng_sample_indices(Rng& rng, std::size_t n,
                                                   std::size_t k) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (k > n) k = n;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng_below(rng, n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace tkg
