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

#ifndef EF21MUON_SAMPLING_H_
#define EF21MUON_SAMPLING_H_

#include "ef21muon/matrix.h"
#include "ef21muon/norms.h"
#include "ef21muon/rng.h"

namespace ef21 {

// Random test matrices drawn from a mixture of structured families:
// gaussian, single spikes, sign patterns, one-per-row and one-per-column
// signs, single rows and columns, rank one, orthogonal polar factors,
// random spectra and sparse gaussian. The mixture reaches the extreme
// points of every norm ball in the catalog, which keeps sampled suprema
// close to the analytic dual norms.
Matrix SampleMixed(Shape shape, Rng& rng);

// A point of the closed unit ball of `kind`. Three quarters of the draws
// come from families concentrated on the extreme points of that ball, the
// rest from SampleMixed. Draws are normalized to the unit sphere, except
// that spectral balls also receive interior points made by clipping
// singular values at one.
Matrix SampleUnitBall(const NormKind& kind, Shape shape, Rng& rng);

// Orthonormal-column factor of a gaussian matrix (rows >= cols required).
Matrix RandomOrthonormal(std::size_t rows, std::size_t cols, Rng& rng);

// U diag(sigma) V^T with Haar-like U, V and the given singular values.
Matrix WithSingularValues(std::size_t rows, std::size_t cols,
                          const std::vector<double>& sigma, Rng& rng);

}  // namespace ef21

#endif  // EF21MUON_SAMPLING_H_
