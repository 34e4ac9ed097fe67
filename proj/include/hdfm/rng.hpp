// Copyright (c) 2026 the hdfm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

#include "hdfm/field.hpp"

namespace hdfm {

// Deterministic RNG. Uniform and normal mappings are spelled out here instead
// of using std distributions so that a (seed, config) pair reproduces the same
// stream no matter which standard library the build links.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform in {0, ..., n-1}; n must be positive.
  std::uint64_t below(std::uint64_t n) { return gen_() % n; }

  // N(0, 1) via Box-Muller with a cached spare.
  double normal();

  // Derives an independent stream seed; used to give workers and per-sample
  // draws stable sub-streams.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

GridField normal_field(Rng& rng, const std::vector<std::uint32_t>& dims,
                       double sigma);

}  // namespace hdfm
