#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace lenval {

// std::mt19937_64's output sequence is pinned by the standard; the library
// distributions are not. Everything that must reproduce bit-for-bit across
// platforms therefore draws through these helpers instead.

inline double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Index in [0, n). Modulo bias is ~n/2^64 and irrelevant at our scales.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(n));
}

template <typename T>
void deterministic_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
  }
}

// Inverse-CDF draw from a dense probability row, scanned in index order.
// Falls back to the last positive entry if rounding pushes u past the total.
inline int sample_categorical(std::mt19937_64& rng, const std::vector<double>& probs) {
  const double u = uniform_unit(rng);
  double cum = 0.0;
  int last_positive = -1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = static_cast<int>(i);
    cum += probs[i];
    if (u < cum) return last_positive;
  }
  return last_positive;
}

}  // namespace lenval
