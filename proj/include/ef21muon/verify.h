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

#ifndef EF21MUON_VERIFY_H_
#define EF21MUON_VERIFY_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ef21muon/harness.h"
#include "ef21muon/norms.h"
#include "ef21muon/optimizer.h"
#include "ef21muon/problems.h"
#include "ef21muon/rng.h"

namespace ef21 {

struct CheckReport {
  std::string name;
  bool passed = false;
  double worst_residual = 0.0;
  std::size_t samples = 0;
  double tolerance = 0.0;
  std::string detail;

  // passed = worst_residual <= tolerance.
  void Finish();
};

std::string ToJson(const CheckReport& report);
std::string ToJson(const std::vector<CheckReport>& reports);

// Central differences along `directions` random unit directions per layer
// and per worker; the residual is |fd - <grad, D>| / max(||grad_i||_F,
// 1e-12). Tolerance 1e-5. eps must lie in [1e-7, 1e-3].
CheckReport FdGradientCheck(const Objective& obj, const LayeredTensor& x,
                            double eps, Rng& rng, std::size_t directions = 50);

// For random G of `shape`: |<G, lmo(G)> + ||G||_*| / ||G||_*, the primal
// norm of lmo(G) above one, and the gap by which any of
// `samples_per_trial` sampled feasible points beats the LMO. Tolerance
// 1e-10.
CheckReport LmoOptimalityCheck(const NormKind& kind, Shape shape,
                               std::size_t trials,
                               std::size_t samples_per_trial, Rng& rng);

// Exhaustive 2x2 check for the entrywise l-infinity and l1 balls: every
// matrix with entries in {-1, 0, 1} inside the ball is a candidate.
// Throws UnsupportedNormError for other norms.
CheckReport CornerEnumerationCheck(const NormKind& kind, std::size_t trials,
                                   Rng& rng);

// Per-round descent inequality for a run. Radius schedules use
//   f(X+) <= f(X) + sum_i 2 t_i ||grad_i f - G_i||_* - t_i ||grad_i f||_*
//            + (L0_i + L1_i ||grad_i f||_*) / 2 * t_i^2,
// stepsize schedules use
//   f(X+) <= f(X) + sum_i 3 gamma_i / 2 ||grad_i f - G_i||_*^2
//            - gamma_i / 4 ||grad_i f||_*^2
//            - (1 / (4 gamma_i) - L_i / 2) gamma_i^2 ||G_i||_*^2
// with L_i = L0_i + L1_i ||grad_i f||_*. A round violates when the left
// side exceeds the right by more than 1e-8 + margin * (1 + |f(X)|).
class DescentMonitor {
 public:
  DescentMonitor(SmoothnessProfile profile, ScheduleType schedule,
                 double margin = 0.0);

  void Observe(const RoundEvent& event);
  CheckReport Report() const;
  std::size_t violations() const { return violations_; }

 private:
  SmoothnessProfile profile_;
  double margin_;
  std::size_t rounds_ = 0;
  std::size_t violations_ = 0;
  ScheduleType schedule_;
  double worst_ = 0.0;
};

// Non-increase of a sequence: worst value of s[k+1] - s[k] against
// tol * (1 + |s[k]|).
CheckReport MonotoneCheck(const std::string& name,
                          const std::vector<double>& series, double tol);

// (1/K) sum_{k<K} ||grad f(X^k)||_*^2 <= 4 psi0 / (K gamma) for every
// recorded K >= 1, from the avg_sq_grad column. Residual: worst ratio of
// left to right side minus one.
CheckReport TelescopedBoundCheck(const RunResult& result, double gamma);

// Empirical E||C(X) - X||^2 <= (1 - alpha) ||X||^2 within `se_factor`
// standard errors for each of `matrices` sampled inputs over `draws`
// compressor draws; `claimed` overrides the analytic alpha (fault
// injection).
CheckReport ContractionCheck(const CompressorKind& kind, const NormKind& norm,
                             Shape shape, std::size_t matrices,
                             std::size_t draws, double se_factor, Rng& rng,
                             std::optional<double> claimed = std::nullopt);

enum class VerifySuite { kIdentities, kCompressors, kConvergence, kAll };
VerifySuite ParseVerifySuite(const std::string& text);

// The suites behind the verify command. `inject_fault` adds an alpha
// overclaim to the compressor suite and halved smoothness constants to
// the convergence suite, which must then fail.
std::vector<CheckReport> RunVerifySuite(VerifySuite suite, std::uint64_t seed,
                                        bool inject_fault = false);

}  // namespace ef21

#endif  // EF21MUON_VERIFY_H_
