// Copyright 2026 The ef21muon Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#ifndef EF21MUON_RNG_H_
#define EF21MUON_RNG_H_

#include <cstdint>
#include <random>

#include "ef21muon/matrix.h"

namespace ef21 {

// splitmix64 finalizer; a bijection on 64-bit words.
std::uint64_t Mix64(std::uint64_t x);

// Seed for the stream identified by (master, a, b, c). Distinct tuples give
// distinct seeds with overwhelming probability, so per-(worker, round)
// streams never share state.
std::uint64_t DeriveSeed(std::uint64_t master, std::uint64_t a,
                         std::uint64_t b = 0, std::uint64_t c = 0);

// Deterministic random stream. Uniform and normal draws are computed from
// raw 64-bit engine output so values are identical across standard
// libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t NextU64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double Uniform();
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t Below(std::uint64_t n);
  double Normal();
  bool Bernoulli(double p) { return Uniform() < p; }

  Matrix NormalMatrix(std::size_t rows, std::size_t cols, double scale = 1.0);
  Matrix UniformMatrix(std::size_t rows, std::size_t cols, double lo,
                       double hi);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ef21

#endif  // EF21MUON_RNG_H_
