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

#ifndef EF21MUON_LMO_H_
#define EF21MUON_LMO_H_

#include "ef21muon/matrix.h"
#include "ef21muon/norms.h"

namespace ef21 {

// Quintic Newton-Schulz iteration X <- aX + (b A + c A^2) X, A = X X^T,
// started from g / (||g||_F * safety).
struct NewtonSchulzConfig {
  int iterations = 5;
  double a = 3.4445;
  double b = -4.7750;
  double c = 2.0315;
  double safety = 1.01;
};

enum class SpectralBackend { kExactSvd, kNewtonSchulz };

struct LmoOptions {
  SpectralBackend backend = SpectralBackend::kExactSvd;
  NewtonSchulzConfig newton_schulz;
};

struct LmoResult {
  Matrix direction;              // minimizer of <G, Z> over ||Z|| <= 1
  double dual_norm_value = 0.0;  // ||G||_*
};

// True for kinds with a closed-form LMO: spectral, nuclear, frobenius,
// l1, linf, maxrowsum and rowmaxsum.
bool LmoSupported(const NormKind& kind);

// Exact unit-ball LMO. A zero g yields a zero direction and value 0.
// Ties: sign(0) = 0 for linf; argmax ties go to the lowest row-major index.
// With the Newton-Schulz backend the spectral direction is -NS(g) and the
// reported value is <g, NS(g)>, an approximation of the nuclear norm.
// Throws UnsupportedNormError for schatten and column norms.
LmoResult LmoDirection(const Matrix& g, const NormKind& kind,
                       const LmoOptions& options = {});

// g^sharp = -||g||_* * direction.
Matrix Sharp(const Matrix& g, const NormKind& kind,
             const LmoOptions& options = {});

// H with <H, g> = ||g||_* and ||H|| = 1. Throws ZeroInputError for g = 0.
Matrix DualSubgradient(const Matrix& g, const NormKind& kind,
                       const LmoOptions& options = {});

// x + t * direction; returns x unchanged when t = 0 or g = 0.
Matrix LmoStep(const Matrix& x, const Matrix& g, double t,
               const NormKind& kind, const LmoOptions& options = {});

// x - gamma * g^sharp.
Matrix SharpStep(const Matrix& x, const Matrix& g, double gamma,
                 const NormKind& kind, const LmoOptions& options = {});

// Approximates the polar factor U V^T of g. Throws ZeroInputError for g = 0.
Matrix NewtonSchulz(const Matrix& g, const NewtonSchulzConfig& config = {});

// Scalar polynomial p(x) = a x + b x^3 + c x^5 iterated `iterations` times:
// the map NewtonSchulz applies to each normalized singular value.
double NewtonSchulzScalar(double x, const NewtonSchulzConfig& config = {});

// Alternative max-row-sum sharp that keeps a single nonzero entry per
// column, -(sum_j max_i |g_ij|) times a column-argmax sign pattern. Kept so
// tests can compare it with the exact row-wise construction used by
// LmoDirection; it is not the maximizer of <g, X> - ||X||^2 / 2 in general.
Matrix ColumnwiseMaxRowSumSharp(const Matrix& g);

}  // namespace ef21

#endif  // EF21MUON_LMO_H_
