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

#include "ef21muon/lmo.h"

#include <algorithm>
#include <cmath>

#include "ef21muon/error.h"
#include "ef21muon/svd.h"

namespace ef21 {
namespace {

double Sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

LmoResult SpectralExact(const Matrix& g) {
  const Svd s = ComputeSvd(g);
  LmoResult out{Matrix(g.rows(), g.cols()), 0.0};
  for (double x : s.sigma) out.dual_norm_value += x;
  // Directions with numerically zero singular values carry no mass.
  const double tol = s.sigma.front() * 1e-14 *
                     static_cast<double>(std::max(g.rows(), g.cols()));
  for (std::size_t k = 0; k < s.sigma.size(); ++k) {
    if (s.sigma[k] <= tol) break;
    for (std::size_t i = 0; i < g.rows(); ++i) {
      const double uik = s.u(i, k);
      for (std::size_t j = 0; j < g.cols(); ++j)
        out.direction(i, j) -= uik * s.v(j, k);
    }
  }
  return out;
}

LmoResult SpectralNewtonSchulz(const Matrix& g, const NewtonSchulzConfig& c) {
  Matrix o = NewtonSchulz(g, c);
  LmoResult out{Matrix(g.rows(), g.cols()), Dot(g, o)};
  out.direction = -o;
  return out;
}

LmoResult Nuclear(const Matrix& g) {
  const Svd s = ComputeSvd(g);
  LmoResult out{Matrix(g.rows(), g.cols()), s.sigma.front()};
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j)
      out.direction(i, j) = -s.u(i, 0) * s.v(j, 0);
  return out;
}

LmoResult Frobenius(const Matrix& g) {
  const double nrm = FrobeniusNorm(g);
  LmoResult out{g, nrm};
  out.direction *= -1.0 / nrm;
  return out;
}

LmoResult L1(const Matrix& g) {
  std::size_t arg = 0;
  double best = -1.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (std::abs(g[k]) > best) {
      best = std::abs(g[k]);
      arg = k;
    }
  }
  LmoResult out{Matrix(g.rows(), g.cols()), best};
  out.direction[arg] = -Sign(g[arg]);
  return out;
}

LmoResult Linf(const Matrix& g) {
  LmoResult out{Matrix(g.rows(), g.cols()), 0.0};
  for (std::size_t k = 0; k < g.size(); ++k) {
    out.direction[k] = -Sign(g[k]);
    out.dual_norm_value += std::abs(g[k]);
  }
  return out;
}

// Unit ball of max_i sum_j |z_ij|: each row is an independent l1 ball, so
// every row puts its unit mass on its own largest entry.
LmoResult MaxRowSum(const Matrix& g) {
  LmoResult out{Matrix(g.rows(), g.cols()), 0.0};
  for (std::size_t i = 0; i < g.rows(); ++i) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t j = 0; j < g.cols(); ++j) {
      if (std::abs(g(i, j)) > best) {
        best = std::abs(g(i, j));
        arg = j;
      }
    }
    out.direction(i, arg) = -Sign(g(i, arg));
    out.dual_norm_value += best;
  }
  return out;
}

// Unit ball of sum_i max_j |z_ij|: the whole budget goes to the row with the
// largest l1 mass, filled with signs.
LmoResult RowMaxSum(const Matrix& g) {
  std::size_t arg = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < g.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < g.cols(); ++j) s += std::abs(g(i, j));
    if (s > best) {
      best = s;
      arg = i;
    }
  }
  LmoResult out{Matrix(g.rows(), g.cols()), best};
  for (std::size_t j = 0; j < g.cols(); ++j)
    out.direction(arg, j) = -Sign(g(arg, j));
  return out;
}

}  // namespace

bool LmoSupported(const NormKind& kind) {
  switch (kind.type) {
    case NormType::kSchattenP:
    case NormType::kColumnLpq:
      return false;
    default:
      return true;
  }
}

LmoResult LmoDirection(const Matrix& g, const NormKind& kind,
                       const LmoOptions& options) {
  RequireFinite(g, "lmo");
  if (!LmoSupported(kind)) {
    throw UnsupportedNormError("no closed-form LMO for norm " + ToString(kind));
  }
  if (g.IsZero()) return {Matrix(g.rows(), g.cols()), 0.0};
  switch (kind.type) {
    case NormType::kSpectral:
      return options.backend == SpectralBackend::kNewtonSchulz
                 ? SpectralNewtonSchulz(g, options.newton_schulz)
                 : SpectralExact(g);
    case NormType::kNuclear: return Nuclear(g);
    case NormType::kFrobenius: return Frobenius(g);
    case NormType::kEntrywiseL1: return L1(g);
    case NormType::kEntrywiseLinf: return Linf(g);
    case NormType::kMaxRowSum: return MaxRowSum(g);
    case NormType::kRowMaxSum: return RowMaxSum(g);
    default: break;
  }
  throw UnsupportedNormError("no closed-form LMO for norm " + ToString(kind));
}

Matrix Sharp(const Matrix& g, const NormKind& kind, const LmoOptions& options) {
  LmoResult r = LmoDirection(g, kind, options);
  r.direction *= -r.dual_norm_value;
  return r.direction;
}

Matrix DualSubgradient(const Matrix& g, const NormKind& kind,
                       const LmoOptions& options) {
  RequireFinite(g, "dual_subgradient");
  if (g.IsZero()) throw ZeroInputError("dual_subgradient of the zero matrix");
  LmoResult r = LmoDirection(g, kind, options);
  r.direction *= -1.0;
  return r.direction;
}

Matrix LmoStep(const Matrix& x, const Matrix& g, double t, const NormKind& kind,
               const LmoOptions& options) {
  RequireSameShape(x, g, "lmo_step");
  if (t < 0.0) throw ConfigError("lmo_step: radius must be nonnegative");
  if (t == 0.0 || g.IsZero()) return x;
  const LmoResult r = LmoDirection(g, kind, options);
  Matrix out = x;
  out.Axpy(t, r.direction);
  return out;
}

Matrix SharpStep(const Matrix& x, const Matrix& g, double gamma,
                 const NormKind& kind, const LmoOptions& options) {
  RequireSameShape(x, g, "sharp_step");
  if (gamma == 0.0 || g.IsZero()) return x;
  Matrix out = x;
  out.Axpy(-gamma, Sharp(g, kind, options));
  return out;
}

Matrix NewtonSchulz(const Matrix& g, const NewtonSchulzConfig& config) {
  RequireFinite(g, "newton_schulz");
  if (g.IsZero()) throw ZeroInputError("newton_schulz of the zero matrix");
  if (config.iterations < 1) {
    throw ConfigError("newton_schulz: iterations must be >= 1");
  }
  const bool tall = g.rows() > g.cols();
  Matrix x = tall ? g.Transpose() : g;
  x *= 1.0 / (FrobeniusNorm(g) * config.safety);
  for (int it = 0; it < config.iterations; ++it) {
    const Matrix a = MatMulT(x, x);
    Matrix b = a;
    b *= config.b;
    b.Axpy(config.c, MatMul(a, a));
    Matrix next = MatMul(b, x);
    next.Axpy(config.a, x);
    x = std::move(next);
  }
  return tall ? x.Transpose() : x;
}

double NewtonSchulzScalar(double x, const NewtonSchulzConfig& config) {
  for (int it = 0; it < config.iterations; ++it) {
    const double x2 = x * x;
    x = config.a * x + config.b * x2 * x + config.c * x2 * x2 * x;
  }
  return x;
}

Matrix ColumnwiseMaxRowSumSharp(const Matrix& g) {
  RequireFinite(g, "columnwise sharp");
  Matrix out(g.rows(), g.cols());
  double total = 0.0;
  for (std::size_t j = 0; j < g.cols(); ++j) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < g.rows(); ++i) {
      if (std::abs(g(i, j)) > best) {
        best = std::abs(g(i, j));
        arg = i;
      }
    }
    out(arg, j) = Sign(g(arg, j));
    total += best;
  }
  out *= total;
  return out;
}

}  // namespace ef21
