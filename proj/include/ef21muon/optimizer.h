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

#ifndef EF21MUON_OPTIMIZER_H_
#define EF21MUON_OPTIMIZER_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ef21muon/compressors.h"
#include "ef21muon/lmo.h"
#include "ef21muon/matrix.h"
#include "ef21muon/norms.h"
#include "ef21muon/problems.h"
#include "ef21muon/rng.h"

namespace ef21 {

// kDeterministic: workers send C(grad f_j(W) - G_j).
// kStochastic: workers keep momentum M_j and send C(M_j - G_j).
// kNoErrorFeedback: workers send C(grad f_j(W)) and the server averages
// the compressed gradients directly (the naive baseline).
enum class Variant { kDeterministic, kStochastic, kNoErrorFeedback };

// kRadius: X_i <- lmo over the ball of radius t_i around X_i.
// kStepsize: X_i <- X_i - gamma_i * sharp(G_i).
enum class ScheduleType { kRadius, kStepsize };

std::string ToString(Variant v);
std::string ToString(ScheduleType s);
Variant ParseVariant(const std::string& text);
ScheduleType ParseScheduleType(const std::string& text);

struct HyperParams {
  ScheduleType schedule = ScheduleType::kRadius;
  // Per-layer constant radius or stepsize; one value applies to all layers.
  std::vector<double> rate = {0.1};
  // Optional per-round overrides: rate_table[k][i]; rounds past the table
  // fall back to `rate`.
  std::vector<std::vector<double>> rate_table;
  // Per-layer momentum in (0, 1]; one value applies to all layers.
  std::vector<double> beta = {1.0};
  std::vector<NormKind> norms;
  CompressorKind server_compressor;
  CompressorKind worker_compressor;
  Variant variant = Variant::kDeterministic;
  LmoOptions lmo;
  BitConfig bits;

  double Rate(std::size_t round, std::size_t layer) const;
  double Beta(std::size_t layer) const;
  // Throws ConfigError on negative rates, beta outside (0, 1], or list
  // lengths other than 1 and `layers`.
  void Validate(std::size_t layers) const;
};

struct ServerState {
  LayeredTensor x;  // iterate X^k
  LayeredTensor w;  // model shift W^k
  LayeredTensor g;  // aggregated estimator G^k
  std::size_t round = 0;
};

struct WorkerState {
  std::size_t id = 0;
  LayeredTensor w;  // replica of the model shift
  LayeredTensor g;  // gradient shift G_j
  LayeredTensor m;  // momentum M_j (stochastic variant)
};

// How G_j^0 and M_j^0 are chosen.
//   kExactGradient         G_j = M_j = grad f_j(X0)
//   kStochasticGradient    G_j = M_j = grad f_j(X0; xi)
//   kCompressedStochastic  M_j = grad f_j(X0; xi), G_j = C_j(M_j)
//   kDefault               exact for deterministic and naive variants,
//                          stochastic for the momentum variant
enum class InitPolicy {
  kDefault,
  kExactGradient,
  kStochasticGradient,
  kCompressedStochastic,
};

std::string ToString(InitPolicy p);
InitPolicy ParseInitPolicy(const std::string& text);
InitPolicy ResolveInitPolicy(InitPolicy p, Variant v);

// Stream seeds. Worker streams and the server stream are disjoint for
// every round; initialization draws use their own tag.
std::uint64_t ServerStreamSeed(std::uint64_t master, std::size_t round);
std::uint64_t WorkerStreamSeed(std::uint64_t master, std::size_t worker,
                               std::size_t round);
std::uint64_t InitStreamSeed(std::uint64_t master, std::size_t worker);

struct Cluster {
  ServerState server;
  std::vector<WorkerState> workers;
};

// W^0 = X^0 everywhere and G^0 = (1/n) sum_j G_j^0.
Cluster Initialize(const Objective& obj, const LayeredTensor& x0,
                   const HyperParams& hp, InitPolicy policy,
                   std::uint64_t master_seed);

struct ServerRoundOutput {
  std::vector<CompressedMessage> broadcast;  // S^k, one per layer
  std::vector<double> radius;    // t_i^k actually travelled
  std::vector<double> stepsize;  // gamma_i^k = t_i^k / ||G_i^k||_*
  std::vector<double> grad_dual_norm;  // ||G_i^k||_*
  std::vector<bool> skipped;     // layers with G_i^k = 0
};

// X^{k+1} = lmo step on G^k, S^k = C(X^{k+1} - W^k), W^{k+1} = W^k + S^k.
// Layers whose G_i^k is zero keep X_i and report stepsize 0. When
// `inputs` is given it receives the uncompressed X^{k+1} - W^k.
ServerRoundOutput ServerRound(ServerState& s, const HyperParams& hp,
                              Rng& rng, LayeredTensor* inputs = nullptr);

// Applies S^k to the replica and returns the uplink R_j^{k+1}, one message
// per layer. `inputs`, when given, receives the uncompressed arguments.
std::vector<CompressedMessage> WorkerRound(
    WorkerState& w, const std::vector<CompressedMessage>& broadcast,
    const Objective& obj, const HyperParams& hp, Rng& rng,
    LayeredTensor* inputs = nullptr);

// G^{k+1} = G^k + (1/n) sum_j R_j in worker order (the naive variant
// replaces G by the average). Advances the round counter. Throws
// MissingWorkerError unless there is exactly one uplink per worker.
void Aggregate(ServerState& s,
               const std::vector<std::vector<CompressedMessage>>& uplinks,
               std::size_t num_workers, Variant variant);

// One full round for all workers, sequentially.
struct RoundTrace {
  ServerRoundOutput server;
  std::vector<std::vector<CompressedMessage>> uplinks;
};
RoundTrace Step(Cluster& c, const Objective& obj, const HyperParams& hp,
                std::uint64_t master_seed);

// Canonical little-endian snapshot (see README). Deserialize throws
// MalformedPayloadError.
std::vector<std::uint8_t> SerializeCluster(const Cluster& c);
Cluster DeserializeCluster(const std::vector<std::uint8_t>& bytes);

// ---------------------------------------------------------------------------
// Theory-driven hyperparameters.
//
//   kT1  deterministic, smooth:  gamma_i = 1 / (2 L_i + 4/a_D sqrt(12 +
//        66/a_P^2) Ltilde_i)
//   kT2  deterministic, (L0,L1): t_i = eta_i / sqrt(K+1), no server
//        compression
//   kT3  stochastic, smooth:     gamma_i = 1 / (2 L_i + 2 sqrt(zeta_i))
//   kT4  stochastic, (L0,L1):    beta = (K+1)^{-1/2}, t_i = eta_i /
//        (K+1)^{3/4} with the capped eta_i
enum class Theorem { kT1, kT2, kT3, kT4 };

std::string ToString(Theorem t);
Theorem ParseTheorem(const std::string& text);

struct TheoryInputs {
  std::optional<SmoothnessProfile> profile;
  std::optional<double> alpha_p;
  std::optional<double> alpha_d;
  std::size_t num_workers = 1;
  std::size_t rounds = 0;  // K
  // Per-layer rho_lower ||X|| <= ||X||_F <= rho_upper ||X||.
  std::vector<NormEquivalence> equivalence;
  // T3: momentum per layer. When empty it comes from the tuned formula
  //   beta = min{1, (D L n / (rl^2 s^2 K))^(1/2), (D L a_D / (rl^2 s^2
  //   K))^(1/3), (D L a_D^2 / (rl^2 s^2 K))^(1/4)}
  // which needs delta0 = D and sigma.
  std::vector<double> beta;
  std::optional<double> delta0;
  std::vector<double> sigma;
  // T2: radius scale (default 1). T4: requested scale, capped by the
  // theorem (default: the cap itself).
  std::vector<double> eta;
};

struct TheoryResult {
  ScheduleType schedule = ScheduleType::kStepsize;
  std::vector<double> rate;  // gamma_i or t_i
  std::vector<double> beta;
  std::vector<double> eta;   // T2/T4 only
  std::vector<double> zeta;  // T3 only
  Variant variant = Variant::kDeterministic;
  InitPolicy init = InitPolicy::kExactGradient;
};

// Largest stepsize or radius each theorem permits. Throws
// MissingConstantError naming every absent symbol and ConfigError for
// alphas outside (0, 1] or server compression under T2/T4.
TheoryResult TheoryStepsize(Theorem theorem, const TheoryInputs& in);

// Per-layer norm equivalence constants of a model.
std::vector<NormEquivalence> EquivalencesOf(const ModelSpec& spec);

// Warnings for worker compressors whose known contraction norm does not
// match the theorem: dual layer norms for T1/T2, Frobenius for T3/T4.
std::vector<std::string> CompressorFamilyWarnings(
    Theorem theorem, const CompressorKind& worker, const ModelSpec& spec);

// ---------------------------------------------------------------------------
// Lyapunov functions evaluated on the current states.
//
//   kT1  f(X) - f* + sum_i 6 gamma_i / a_D (1/n) sum_j ||grad_i f_j(X) -
//        G_ij||_*^2 + sum_i 66 gamma_i / a_D^2 (2/a_P - 1) Ltilde_i^2
//        ||X_i - W_i||^2
//   kT2  f(X) - f* + sum_i 2 t_i / (1 - sqrt(1 - a_D)) (1/n) sum_j
//        ||grad_i f_j(X) - G_ij||_*
enum class LyapunovKind { kT1, kT2 };

struct LyapunovParams {
  LyapunovKind kind = LyapunovKind::kT1;
  double alpha_p = 1.0;
  double alpha_d = 1.0;
  std::vector<double> rate;  // gamma_i (kT1) or t_i (kT2), per layer
  std::vector<double> l_tilde;  // kT1 only, per layer
};

// Throws UnknownFStarError when the objective has no f*.
double Lyapunov(const LyapunovParams& params, const Objective& obj,
                const ServerState& server,
                const std::vector<WorkerState>& workers);

}  // namespace ef21

#endif  // EF21MUON_OPTIMIZER_H_
