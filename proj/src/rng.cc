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

#include "ef21muon/rng.h"

#include <cmath>

namespace ef21 {

std::uint64_t Mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t DeriveSeed(std::uint64_t master, std::uint64_t a,
                         std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = Mix64(master);
  h = Mix64(h ^ Mix64(a + 0x1000000000000001ULL));
  h = Mix64(h ^ Mix64(b + 0x2000000000000003ULL));
  h = Mix64(h ^ Mix64(c + 0x3000000000000005ULL));
  return h;
}

double Rng::Uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::Below(std::uint64_t n) {
  if (n <= 1) return 0;
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::Normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = Uniform();
  } while (u1 <= 0.0);
  const double u2 = Uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double th = 2.0 * M_PI * u2;
  spare_ = r * std::sin(th);
  has_spare_ = true;
  return r * std::cos(th);
}

Matrix Rng::NormalMatrix(std::size_t rows, std::size_t cols, double scale) {
  Matrix m(rows, cols);
  for (std::size_t k = 0; k < m.size(); ++k) m[k] = scale * Normal();
  return m;
}

Matrix Rng::UniformMatrix(std::size_t rows, std::size_t cols, double lo,
                          double hi) {
  Matrix m(rows, cols);
  for (std::size_t k = 0; k < m.size(); ++k) m[k] = Uniform(lo, hi);
  return m;
}

}  // namespace ef21
