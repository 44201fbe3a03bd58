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

#ifndef EF21MUON_PROBLEMS_H_
#define EF21MUON_PROBLEMS_H_

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ef21muon/matrix.h"
#include "ef21muon/norms.h"
#include "ef21muon/rng.h"

namespace ef21 {

struct ModelSpec {
  std::vector<Shape> shapes;
  std::vector<NormKind> norms;

  std::size_t num_layers() const { return shapes.size(); }
  // Throws ConfigError when empty, when a shape has a zero dimension or
  // when the two lists differ in length.
  void Validate() const;
};

// Distributed objective f = (1/n) sum_j f_j over layered parameters.
// Instances are immutable after construction and safe to share across
// threads; all randomness comes from the caller's Rng.
class Objective {
 public:
  virtual ~Objective() = default;

  const ModelSpec& spec() const { return spec_; }
  std::size_t num_workers() const { return num_workers_; }

  virtual double WorkerValue(std::size_t j, const LayeredTensor& x) const = 0;
  virtual LayeredTensor WorkerGradient(std::size_t j,
                                       const LayeredTensor& x) const = 0;
  // Unbiased estimate of WorkerGradient. The default adds gaussian noise
  // whose expected squared l2 norm on layer i is exactly sigma_i^2.
  virtual LayeredTensor WorkerStochasticGradient(std::size_t j,
                                                 const LayeredTensor& x,
                                                 Rng& rng) const;

  // Means over workers, accumulated in worker order.
  double Value(const LayeredTensor& x) const;
  LayeredTensor Gradient(const LayeredTensor& x) const;
  LayeredTensor StochasticGradient(const LayeredTensor& x, Rng& rng) const;

  // Per-layer noise level: E||g_i - grad_i f_j||_2^2 <= sigma_i^2 for every
  // worker (with equality for the default gaussian model).
  const std::vector<double>& noise_sigma() const { return noise_sigma_; }

  // Lower bounds of f and f_j, when known analytically.
  std::optional<double> f_star() const { return f_star_; }
  std::optional<double> worker_f_star(std::size_t j) const;

 protected:
  Objective(ModelSpec spec, std::size_t num_workers,
            std::vector<double> noise_sigma);

  void CheckWorker(std::size_t j) const;
  void CheckShapes(const LayeredTensor& x) const;

  std::optional<double> f_star_;
  std::vector<double> worker_f_star_;

 private:
  ModelSpec spec_;
  std::size_t num_workers_;
  std::vector<double> noise_sigma_;
};

using ObjectivePtr = std::shared_ptr<const Objective>;

// ---------------------------------------------------------------------------
// Quadratic ensemble
//
//   f_j(X) = sum_i 1/2 vec(X_i - B_ij)^T A_ij vec(X_i - B_ij)
//
// A_ij = Q diag(lambda) Q^T with Haar Q and eigenvalues log-spaced at
// random in [1, conditioning] (both endpoints always present when the
// layer has two or more entries; a single-entry layer gets conditioning).
// B_i ~ N(0, I) and B_ij = B_i + heterogeneity * N(0, I).

struct QuadraticOptions {
  std::size_t num_workers = 1;
  double heterogeneity = 0.0;
  double conditioning = 1.0;
  // Per-layer noise; empty means noiseless. A single value applies to
  // every layer.
  std::vector<double> noise_sigma;
  // Scales every A_ij (and therefore the objective).
  double scale = 1.0;
};

class QuadraticEnsemble : public Objective {
 public:
  QuadraticEnsemble(const ModelSpec& spec, const QuadraticOptions& options,
                    Rng& rng);
  // Explicit data: a[i][j] is d_i x d_i symmetric PSD, b[i][j] has the
  // shape of layer i.
  QuadraticEnsemble(const ModelSpec& spec,
                    std::vector<std::vector<Matrix>> a,
                    std::vector<std::vector<Matrix>> b,
                    std::vector<double> noise_sigma = {});

  double WorkerValue(std::size_t j, const LayeredTensor& x) const override;
  LayeredTensor WorkerGradient(std::size_t j,
                               const LayeredTensor& x) const override;

  const Matrix& hessian(std::size_t layer, std::size_t worker) const {
    return a_[layer][worker];
  }
  const Matrix& center(std::size_t layer, std::size_t worker) const {
    return b_[layer][worker];
  }
  // Minimizer of f, layer by layer.
  const LayeredTensor& minimizer() const { return minimizer_; }

  // Largest eigenvalue of A_ij and of the mean Hessian of layer i: the
  // exact Euclidean gradient-Lipschitz constants.
  double EuclideanSmoothness(std::size_t layer, std::size_t worker) const;
  double EuclideanSmoothness(std::size_t layer) const;

  // A constant L with ||A v||_(i)* <= L ||v||_(i) for the layer norm:
  // lambda_max for Frobenius, max |A_kl| for l1, min(sum |A_kl|, generic)
  // for linf and lambda_max * rho_upper / rho_lower(dual) otherwise.
  double DualSmoothness(std::size_t layer, std::size_t worker) const;
  double DualSmoothness(std::size_t layer) const;

 private:
  void Finish();
  double DualBound(const Matrix& a, double lambda_max,
                   std::size_t layer) const;

  std::vector<std::vector<Matrix>> a_;  // [layer][worker]
  std::vector<std::vector<Matrix>> b_;
  std::vector<Matrix> mean_a_;
  std::vector<std::vector<double>> lambda_max_;
  std::vector<double> mean_lambda_max_;
  LayeredTensor minimizer_;
};

std::shared_ptr<const QuadraticEnsemble> MakeQuadraticEnsemble(
    const ModelSpec& spec, const QuadraticOptions& options, Rng& rng);

// ---------------------------------------------------------------------------
// Divergence instance: three strongly convex quadratics on R^{3x1},
//   f_j(x) = (a_j^T x)^2 + ||x||^2 / 4,
// a_1 = (-3, 2, 2), a_2 = (2, -3, 2), a_3 = (2, 2, -3). From x = t(1,1,1)
// each worker's Top1 keeps its own -5.5t entry, so gradient descent on the
// averaged compressed gradients scales x by 1 + 5.5 gamma / 3 per round.

inline constexpr double kDivergenceStepsize = 0.03;

std::shared_ptr<const QuadraticEnsemble> MakeDivergenceInstance();
// The frozen starting point t(1, 1, 1) with t = 1.
LayeredTensor DivergenceStart();

// ---------------------------------------------------------------------------
// Tiny tanh network with squared loss.
//
//   out(x) = W_L tanh(W_{L-1} ... tanh(W_1 x)),
//   f_j = 1/(2 N_j) sum over the shard of ||out(x) - y||^2.
//
// Layer l has shape (width_l, width_{l-1}); inputs are rows of
// `inputs` (N x width_0) and targets rows of `targets` (N x width_L).

struct Dataset {
  Matrix inputs;
  Matrix targets;

  std::size_t size() const { return inputs.rows(); }
};

// CSV with a header line x0,...,y0,...; values printed with 17 significant
// digits so a write/read round trip is exact.
void WriteDatasetCsv(const Dataset& data, const std::string& path);
// Throws ConfigError on unreadable or malformed files.
Dataset ReadDatasetCsv(const std::string& path);

struct MlpOptions {
  std::size_t num_workers = 1;
  std::size_t dataset_size = 64;
  // Standard deviation of the label noise added to teacher outputs.
  double label_noise = 0.1;
  // Minibatch per stochastic gradient, drawn without replacement from the
  // worker's shard; 0 or >= shard size means the full shard.
  std::size_t batch_size = 0;
  // Extra gaussian gradient noise per layer (see Objective).
  std::vector<double> noise_sigma;
};

class TinyMlp : public Objective {
 public:
  // Shards are contiguous blocks of rows; sizes differ by at most one.
  TinyMlp(const ModelSpec& spec, Dataset data, const MlpOptions& options);

  double WorkerValue(std::size_t j, const LayeredTensor& x) const override;
  LayeredTensor WorkerGradient(std::size_t j,
                               const LayeredTensor& x) const override;
  LayeredTensor WorkerStochasticGradient(std::size_t j,
                                         const LayeredTensor& x,
                                         Rng& rng) const override;

  const Dataset& data() const { return data_; }
  std::size_t shard_begin(std::size_t j) const { return shard_[j]; }
  std::size_t shard_end(std::size_t j) const { return shard_[j + 1]; }

 private:
  double Loss(const std::vector<std::size_t>& rows, const LayeredTensor& x,
              LayeredTensor* grad) const;

  Dataset data_;
  std::size_t batch_size_;
  std::vector<std::size_t> shard_;
};

// Synthetic data from a random teacher of the same architecture, then a
// TinyMlp on it. Requires at least two layers with chained shapes.
std::shared_ptr<const TinyMlp> MakeTinyMlp(const ModelSpec& spec,
                                           const MlpOptions& options,
                                           Rng& rng);

// ---------------------------------------------------------------------------
// Smoothness constants.

// Per-layer (L0, L1) for f and per worker, with the aggregates used by the
// stepsize formulas computed from the per-worker values on demand.
struct SmoothnessProfile {
  std::vector<double> l0;                         // [layer]
  std::vector<double> l1;                         // [layer]
  std::vector<std::vector<double>> worker_l0;     // [worker][layer]
  std::vector<std::vector<double>> worker_l1;     // [worker][layer]

  std::size_t num_layers() const { return l0.size(); }
  std::size_t num_workers() const { return worker_l0.size(); }

  // sqrt((1/n) sum_j (L0_ij)^2)
  double LTilde(std::size_t layer) const;
  // (1/n) sum_j L0_ij
  double L0Bar(std::size_t layer) const;
  // max_j L1_ij
  double L1Max(std::size_t layer) const;
  // max_j L0_ij
  double L0Max(std::size_t layer) const;

  // Throws ConfigError on negative or non-finite constants or ragged
  // tables.
  void Validate() const;
};

// Exact constants of a quadratic ensemble in its layer norms (L1 = 0).
SmoothnessProfile QuadraticProfile(const QuadraticEnsemble& q);

struct SmoothnessFit {
  // L1 = 0 and L0 = the largest observed ratio; satisfies the inequality
  // on every sampled pair.
  SmoothnessProfile conservative;
  // Nonnegative least-squares fit of r = (L0 + L1 g) d, scaled up just
  // enough to satisfy the inequality on every sampled pair.
  SmoothnessProfile least_squares;
  std::size_t pairs_used = 0;
};

// Fits ||grad_i h(X) - grad_i h(Y)||_* <= (L0 + L1 ||grad_i h(X)||_*)
// ||X_i - Y_i|| for h = f and every f_j over `pairs` random ordered pairs
// of distinct trajectory points (all pairs when fewer exist). Layer norms
// come from obj.spec(). Throws DegenerateTrajectoryError when fewer than
// two points are given or some layer never moves across the sampled pairs.
SmoothnessFit EstimateSmoothness(const Objective& obj,
                                 const std::vector<LayeredTensor>& trajectory,
                                 std::size_t pairs, Rng& rng);

}  // namespace ef21

#endif  // EF21MUON_PROBLEMS_H_
