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

#ifndef EF21MUON_SVD_H_
#define EF21MUON_SVD_H_

#include <vector>

#include "ef21muon/matrix.h"

namespace ef21 {

// Thin decomposition m = U diag(sigma) V^T with r = min(rows, cols):
// U is rows x r, V is cols x r, sigma is sorted descending.
//
// Signs are fixed so the largest-magnitude entry of every column of U is
// nonnegative (the first such entry on ties), which makes U and V
// reproducible for inputs with distinct singular values.
struct Svd {
  Matrix u;
  std::vector<double> sigma;
  Matrix v;

  Matrix Reconstruct() const;
};

// One-sided Jacobi. Throws NonFiniteError on NaN/Inf input and
// ConvergenceError if the sweeps fail to orthogonalize the columns.
Svd ComputeSvd(const Matrix& m);

std::vector<double> SingularValues(const Matrix& m);

}  // namespace ef21

#endif  // EF21MUON_SVD_H_
