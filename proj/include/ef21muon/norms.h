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

#ifndef EF21MUON_NORMS_H_
#define EF21MUON_NORMS_H_

#include <string>
#include <vector>

#include "ef21muon/matrix.h"

namespace ef21 {

enum class NormType {
  kSpectral,       // largest singular value
  kNuclear,        // sum of singular values
  kFrobenius,
  kEntrywiseL1,    // sum |x_ij|
  kEntrywiseLinf,  // max |x_ij|
  kSchattenP,      // (sum sigma^p)^(1/p), 1 < p < inf
  kColumnLpq,      // (sum_j ||x_:j||_p^q)^(1/q), p, q in [1, inf]
  kMaxRowSum,      // max_i sum_j |x_ij|, the inf->inf operator norm
  kRowMaxSum,      // sum_i max_j |x_ij|, dual of kMaxRowSum
};

struct NormKind {
  NormType type = NormType::kFrobenius;
  double p = 2.0;
  double q = 2.0;

  static NormKind Spectral() { return {NormType::kSpectral}; }
  static NormKind Nuclear() { return {NormType::kNuclear}; }
  static NormKind Frobenius() { return {NormType::kFrobenius}; }
  static NormKind L1() { return {NormType::kEntrywiseL1}; }
  static NormKind Linf() { return {NormType::kEntrywiseLinf}; }
  static NormKind MaxRowSum() { return {NormType::kMaxRowSum}; }
  static NormKind RowMaxSum() { return {NormType::kRowMaxSum}; }
  // Throws ConfigError unless 1 < p < inf.
  static NormKind SchattenP(double p);
  // Throws ConfigError unless p, q in [1, inf] (inf is allowed).
  static NormKind ColumnLpq(double p, double q);

  bool operator==(const NormKind& o) const;
  bool operator!=(const NormKind& o) const { return !(*this == o); }
};

// Canonical text form, e.g. "spectral", "schatten:3", "column:2:1".
std::string ToString(const NormKind& k);
// Parses the canonical form; throws ConfigError on unknown input.
NormKind ParseNormKind(const std::string& text);

// Exact norm value. Throws NonFiniteError on NaN/Inf input.
double Norm(const Matrix& m, const NormKind& kind);

// Dual under the trace inner product. An involution for every kind.
NormKind DualOf(const NormKind& kind);

// rho_lower * ||X|| <= ||X||_F <= rho_upper * ||X|| for all X of `shape`.
struct NormEquivalence {
  double rho_lower = 1.0;
  double rho_upper = 1.0;
};

NormEquivalence NormEquivalenceOf(const NormKind& kind, Shape shape);

// Vector p-norm helper shared by the mixed-norm code paths.
double VectorPNorm(const std::vector<double>& v, double p);

}  // namespace ef21

#endif  // EF21MUON_NORMS_H_
