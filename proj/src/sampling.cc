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

#include "ef21muon/sampling.h"

#include <algorithm>
#include <cmath>

#include "ef21muon/error.h"
#include "ef21muon/svd.h"

namespace ef21 {
namespace {

double RandomSign(Rng& rng) { return rng.Uniform() < 0.5 ? -1.0 : 1.0; }

constexpr int kFamilies = 12;

}  // namespace

Matrix RandomOrthonormal(std::size_t rows, std::size_t cols, Rng& rng) {
  if (rows < cols) throw ShapeError("RandomOrthonormal needs rows >= cols");
  const Svd s = ComputeSvd(rng.NormalMatrix(rows, cols));
  return MatMulT(s.u, s.v);
}

Matrix WithSingularValues(std::size_t rows, std::size_t cols,
                          const std::vector<double>& sigma, Rng& rng) {
  const std::size_t r = std::min(rows, cols);
  const Matrix u = RandomOrthonormal(rows, r, rng);
  const Matrix v = RandomOrthonormal(cols, r, rng);
  Matrix us = u;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < r; ++k)
      us(i, k) *= k < sigma.size() ? sigma[k] : 0.0;
  return MatMulT(us, v);
}

Matrix SampleMixed(Shape shape, Rng& rng) {
  const std::size_t m = shape.rows;
  const std::size_t n = shape.cols;
  Matrix z(m, n);
  switch (static_cast<int>(rng.Below(kFamilies))) {
    case 0:
      z = rng.NormalMatrix(m, n);
      break;
    case 1:
      z[rng.Below(z.size())] = RandomSign(rng);
      break;
    case 2:
      for (std::size_t k = 0; k < z.size(); ++k) z[k] = RandomSign(rng);
      break;
    case 3:
      for (std::size_t i = 0; i < m; ++i) z(i, rng.Below(n)) = RandomSign(rng);
      break;
    case 4:
      for (std::size_t i = 0; i < n; ++i) z(rng.Below(m), i) = RandomSign(rng);
      break;
    case 5: {
      const std::size_t i = rng.Below(m);
      for (std::size_t j = 0; j < n; ++j) z(i, j) = RandomSign(rng);
      break;
    }
    case 6: {
      const std::size_t j = rng.Below(n);
      for (std::size_t i = 0; i < m; ++i) z(i, j) = rng.Normal();
      break;
    }
    case 7:
      z = MatMulT(rng.NormalMatrix(m, 1), rng.NormalMatrix(n, 1));
      break;
    case 8: {
      std::vector<double> ones(std::min(m, n), 1.0);
      z = WithSingularValues(m, n, ones, rng);
      break;
    }
    case 9: {
      std::vector<double> sig(std::min(m, n));
      for (double& s : sig) s = rng.Uniform();
      z = WithSingularValues(m, n, sig, rng);
      break;
    }
    case 10: {
      const double keep = rng.Uniform(0.1, 0.9);
      for (std::size_t k = 0; k < z.size(); ++k)
        if (rng.Uniform() < keep) z[k] = rng.Normal();
      break;
    }
    default: {
      // Heavy-tailed magnitudes with random signs.
      for (std::size_t k = 0; k < z.size(); ++k) {
        const double u = rng.Uniform(1e-3, 1.0);
        z[k] = RandomSign(rng) * std::pow(u, rng.Uniform(0.0, 4.0));
      }
      break;
    }
  }
  if (z.IsZero()) z[rng.Below(z.size())] = 1.0;
  return z;
}

namespace {

// Unit vector of R^dim in the p-norm with a gaussian direction.
std::vector<double> PSphere(std::size_t dim, double p, Rng& rng) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.Normal();
  const double nrm = VectorPNorm(v, p);
  if (nrm == 0.0) {
    v.assign(dim, 0.0);
    v[0] = 1.0;
    return v;
  }
  for (double& x : v) x /= nrm;
  return v;
}

// Draws that concentrate on the extreme points of the ball of `kind`.
Matrix GeometryDraw(const NormKind& kind, Shape shape, Rng& rng) {
  const std::size_t m = shape.rows;
  const std::size_t n = shape.cols;
  Matrix z(m, n);
  switch (kind.type) {
    case NormType::kFrobenius:
      return rng.NormalMatrix(m, n);
    case NormType::kSpectral: {
      if (rng.Uniform() < 0.2) {
        Svd s = ComputeSvd(rng.NormalMatrix(m, n));
        for (double& x : s.sigma) x = std::min(x, 1.0);
        return s.Reconstruct();
      }
      return WithSingularValues(m, n, std::vector<double>(std::min(m, n), 1.0),
                                rng);
    }
    case NormType::kNuclear:
      return MatMulT(rng.NormalMatrix(m, 1), rng.NormalMatrix(n, 1));
    case NormType::kSchattenP: {
      // Gaussian singular vectors with a randomly sharpened or flattened
      // spectrum.
      Svd s = ComputeSvd(rng.NormalMatrix(m, n));
      const double power = std::exp(rng.Uniform(-1.0, 1.0) * std::log(3.0));
      for (double& x : s.sigma) x = std::pow(x, power);
      return s.Reconstruct();
    }
    case NormType::kEntrywiseL1:
      z[rng.Below(z.size())] = RandomSign(rng);
      return z;
    case NormType::kEntrywiseLinf:
      for (std::size_t k = 0; k < z.size(); ++k) z[k] = RandomSign(rng);
      return z;
    case NormType::kMaxRowSum:
      for (std::size_t i = 0; i < m; ++i) z(i, rng.Below(n)) = RandomSign(rng);
      return z;
    case NormType::kRowMaxSum: {
      const std::size_t i = rng.Below(m);
      for (std::size_t j = 0; j < n; ++j) z(i, j) = RandomSign(rng);
      return z;
    }
    case NormType::kColumnLpq: {
      if (rng.Uniform() < 0.4) {
        // Entrywise power reshaping of a gaussian matrix.
        z = rng.NormalMatrix(m, n);
        const double power = std::exp(rng.Uniform(-1.0, 1.0) * std::log(3.0));
        for (std::size_t k = 0; k < z.size(); ++k)
          z[k] = std::copysign(std::pow(std::abs(z[k]), power), z[k]);
        return z;
      }
      std::vector<double> w = PSphere(n, kind.q, rng);
      if (rng.Uniform() < 0.3) {
        w.assign(n, 0.0);
        w[rng.Below(n)] = 1.0;
      }
      const int style = static_cast<int>(rng.Below(3));
      for (std::size_t j = 0; j < n; ++j) {
        std::vector<double> u(m, 0.0);
        if (style == 0) {
          u[rng.Below(m)] = RandomSign(rng);
        } else if (style == 1) {
          for (double& x : u) x = RandomSign(rng);
          const double nrm = VectorPNorm(u, kind.p);
          for (double& x : u) x /= nrm;
        } else {
          u = PSphere(m, kind.p, rng);
        }
        for (std::size_t i = 0; i < m; ++i) z(i, j) = w[j] * u[i];
      }
      return z;
    }
  }
  return rng.NormalMatrix(m, n);
}

}  // namespace

Matrix SampleUnitBall(const NormKind& kind, Shape shape, Rng& rng) {
  Matrix z = rng.Uniform() < 0.75 ? GeometryDraw(kind, shape, rng)
                                  : SampleMixed(shape, rng);
  if (z.IsZero()) z[rng.Below(z.size())] = 1.0;
  const double nrm = Norm(z, kind);
  // Interior points (clipped spectra) are kept as drawn.
  if (nrm > 1.0 || kind.type != NormType::kSpectral) z *= 1.0 / nrm;
  return z;
}

}  // namespace ef21
