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

#include "ef21muon/svd.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ef21muon/error.h"

namespace ef21 {
namespace {

constexpr int kMaxSweeps = 80;
constexpr double kEps = 2.220446049250313e-16;

// Column j of a row-major matrix viewed through strided access.
double ColDot(const Matrix& a, std::size_t p, std::size_t q) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, p) * a(i, q);
  return s;
}

void Rotate(Matrix& a, std::size_t p, std::size_t q, double c, double s) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double ap = a(i, p);
    const double aq = a(i, q);
    a(i, p) = c * ap - s * aq;
    a(i, q) = s * ap + c * aq;
  }
}

// Fills column j of u with a unit vector orthogonal to columns [0, j).
void CompleteColumn(Matrix& u, std::size_t j) {
  const std::size_t m = u.rows();
  std::vector<double> best;
  double best_norm = 0.0;
  // The basis vector with the largest residual is the best conditioned
  // start; its residual norm is at least sqrt((m - j) / m).
  for (std::size_t e = 0; e < m; ++e) {
    std::vector<double> w(m, 0.0);
    w[e] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < j; ++k) {
        double d = 0.0;
        for (std::size_t i = 0; i < m; ++i) d += u(i, k) * w[i];
        for (std::size_t i = 0; i < m; ++i) w[i] -= d * u(i, k);
      }
    }
    double nrm = 0.0;
    for (double x : w) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm > best_norm) {
      best_norm = nrm;
      best = std::move(w);
    }
  }
  if (best_norm < 1e-8) {
    throw ConvergenceError("svd: failed to complete orthonormal basis");
  }
  for (std::size_t i = 0; i < m; ++i) u(i, j) = best[i] / best_norm;
}

// Requires a.rows() >= a.cols().
Svd TallSvd(const Matrix& input) {
  const std::size_t m = input.rows();
  const std::size_t n = input.cols();
  Matrix a = input;
  Matrix v = Matrix::Identity(n);

  const double tol = kEps * static_cast<double>(m);
  // Columns below this squared length are numerically zero; rotating them
  // against parallel columns would only shuffle rounding noise forever.
  const double fro = FrobeniusNorm(input);
  const double negligible = (kEps * fro) * (kEps * fro);
  bool converged = false;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = ColDot(a, p, p);
        const double beta = ColDot(a, q, q);
        const double gamma = ColDot(a, p, q);
        if (gamma == 0.0 || alpha <= negligible || beta <= negligible) continue;
        if (std::abs(gamma) <= tol * std::sqrt(alpha) * std::sqrt(beta)) {
          continue;
        }
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        Rotate(a, p, q, c, s);
        Rotate(v, p, q, c, s);
      }
    }
  }
  if (!converged) throw ConvergenceError("svd: Jacobi sweeps did not converge");

  std::vector<double> sig(n);
  for (std::size_t j = 0; j < n; ++j) sig[j] = std::sqrt(ColDot(a, j, j));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sig[x] > sig[y]; });

  Svd out{Matrix(m, n), std::vector<double>(n), Matrix(n, n)};
  const double smax = n ? sig[order[0]] : 0.0;
  const double tiny = smax * 1e-14 * static_cast<double>(std::max(m, n));
  std::vector<bool> filled(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.sigma[k] = sig[j];
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v(i, j);
    if (sig[j] > tiny && sig[j] > 0.0) {
      for (std::size_t i = 0; i < m; ++i) out.u(i, k) = a(i, j) / sig[j];
      filled[k] = true;
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (!filled[k]) CompleteColumn(out.u, k);
  }
  return out;
}

void FixSigns(Svd& s) {
  for (std::size_t k = 0; k < s.u.cols(); ++k) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < s.u.rows(); ++i) {
      const double mag = std::abs(s.u(i, k));
      if (mag > best) {
        best = mag;
        arg = i;
      }
    }
    if (s.u(arg, k) < 0.0) {
      for (std::size_t i = 0; i < s.u.rows(); ++i) s.u(i, k) = -s.u(i, k);
      for (std::size_t i = 0; i < s.v.rows(); ++i) s.v(i, k) = -s.v(i, k);
    }
  }
}

}  // namespace

Matrix Svd::Reconstruct() const {
  Matrix us = u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t k = 0; k < us.cols(); ++k) us(i, k) *= sigma[k];
  return MatMulT(us, v);
}

Svd ComputeSvd(const Matrix& input) {
  RequireFinite(input, "svd");
  // Power-of-two rescaling keeps squared column lengths clear of underflow
  // and overflow without perturbing any mantissa.
  double amax = 0.0;
  for (std::size_t k = 0; k < input.size(); ++k)
    amax = std::max(amax, std::abs(input[k]));
  int exponent = 0;
  if (amax > 0.0) std::frexp(amax, &exponent);
  Matrix m = input;
  if (exponent != 0) {
    for (std::size_t k = 0; k < m.size(); ++k)
      m[k] = std::ldexp(m[k], -exponent);
  }
  Svd out;
  if (m.rows() >= m.cols()) {
    out = TallSvd(m);
  } else {
    Svd t = TallSvd(m.Transpose());
    out.u = std::move(t.v);
    out.sigma = std::move(t.sigma);
    out.v = std::move(t.u);
  }
  for (double& x : out.sigma) x = std::ldexp(x, exponent);
  FixSigns(out);
  return out;
}

std::vector<double> SingularValues(const Matrix& m) {
  return ComputeSvd(m).sigma;
}

}  // namespace ef21
