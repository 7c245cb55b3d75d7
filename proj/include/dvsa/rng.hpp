#pragma once

#include <cstdint>
#include <random>

#include "dvsa/tensor.hpp"

namespace dvsa {

// splitmix64 finalizer; decorrelates sub-stream seeds derived by offsets.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0,
                                std::uint64_t index = 0) {
  return std::mt19937_64(mix_seed(mix_seed(seed) ^ mix_seed(stream * 0x51ed27f5ULL + index)));
}

inline Tensor uniform_tensor(std::size_t rows, std::size_t cols, double lo, double hi,
                             std::mt19937_64& rng) {
  Tensor t(rows, cols);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data) v = dist(rng);
  return t;
}

// Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], the project-wide init.
inline Tensor fan_in_init(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  return uniform_tensor(rows, cols, -bound, bound, rng);
}

}  // namespace dvsa
