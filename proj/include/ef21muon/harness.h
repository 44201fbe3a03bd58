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

#ifndef EF21MUON_HARNESS_H_
#define EF21MUON_HARNESS_H_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ef21muon/optimizer.h"
#include "ef21muon/problems.h"

namespace ef21 {

enum class ObjectiveType { kQuadratic, kMlp, kDivergence };
// kDefault: the divergence start for the divergence instance, random
// otherwise.
enum class StartPolicy { kDefault, kRandom, kZeros };
// Sweeps either reuse the master seed or derive one per value.
enum class SeedPolicy { kShared, kDerived };
enum class LyapunovMode { kAuto, kNone, kT1, kT2 };
// kExact uses the analytic constants of quadratic objectives; kEstimate
// fits them on a pilot cloud of points around X0 (always used for MLPs).
enum class SmoothnessSource { kExact, kEstimate };

struct ObjectiveConfig {
  ObjectiveType type = ObjectiveType::kQuadratic;
  std::size_t num_workers = 1;
  // Instance data and X0 come from this seed, never from the master seed,
  // so seed sweeps vary only the algorithm's randomness.
  std::uint64_t seed = 1;
  double heterogeneity = 0.0;
  double conditioning = 1.0;
  double scale = 1.0;
  std::vector<double> noise_sigma;
  std::size_t dataset_size = 64;
  double label_noise = 0.1;
  std::size_t batch_size = 0;
  std::string dataset_path;  // MLP: read this CSV instead of a teacher
  StartPolicy start = StartPolicy::kDefault;
  double start_scale = 1.0;
};

struct RunConfig {
  ModelSpec model;
  ObjectiveConfig objective;
  // Hyperparameter source: a theorem, or the manual values in `hp`.
  std::optional<Theorem> theorem;
  // Manual schedule, rates, momentum, variant, LMO backend, compressors
  // and bit widths. `hp.norms` is always taken from `model`.
  HyperParams hp;
  InitPolicy init = InitPolicy::kDefault;
  std::vector<double> eta;
  // Contraction overrides; otherwise analytic where known, estimated else.
  std::optional<double> alpha_p;
  std::optional<double> alpha_d;
  SmoothnessSource smoothness = SmoothnessSource::kExact;
  LyapunovMode lyapunov = LyapunovMode::kAuto;

  std::size_t rounds = 100;
  std::uint64_t seed = 0;
  std::size_t record_every = 1;
  // Worker/sweep parallelism; 0 reads MUON_EF_THREADS (default 1).
  std::size_t threads = 0;
  std::vector<double> thresholds;
  SeedPolicy seed_policy = SeedPolicy::kShared;
  bool log_messages = false;
  bool track_alpha = true;

  // Compressors priced by the account command; empty means the built-in
  // table of top-k, rank-k and natural kinds.
  std::vector<CompressorKind> account;

  std::string output_dir = "out";
};

// Everything a run needs, derived from a RunConfig.
struct RunSetup {
  ObjectivePtr objective;
  LayeredTensor x0;
  HyperParams hp;
  InitPolicy init = InitPolicy::kDefault;
  std::optional<TheoryResult> theory;
  std::optional<double> alpha_p;
  std::optional<double> alpha_d;
  std::optional<SmoothnessProfile> profile;
  std::optional<LyapunovParams> lyapunov;
  std::vector<std::string> warnings;
};

// Builds the objective, X0 and the hyperparameters. Throws ConfigError,
// MissingConstantError and the objective's errors.
RunSetup Prepare(const RunConfig& config);

std::size_t ThreadCount(const RunConfig& config);

struct CommLedger {
  std::vector<std::vector<std::uint64_t>> uplink;  // [round][worker]
  std::vector<std::uint64_t> downlink;             // [round], one broadcast
  std::vector<std::uint64_t> uplink_cumulative;    // through each round
  std::vector<std::uint64_t> downlink_cumulative;
  // Smallest analytic contraction seen per compressor ("server:<kind>",
  // "worker:<kind>") over the actual compressor inputs; pairs without a
  // formula are absent.
  std::map<std::string, double> min_alpha;

  std::uint64_t uplink_total() const;
  std::uint64_t downlink_total() const;
};

struct RoundRecord {
  std::size_t round = 0;
  double f = 0.0;
  std::vector<double> layer_grad;  // ||grad_i f(X^k)||_(i)*
  double grad_norm = 0.0;          // sqrt(sum_i layer_grad_i^2)
  std::optional<double> lyapunov;
  std::uint64_t uplink_bits = 0;    // cumulative before round k
  std::uint64_t downlink_bits = 0;
  double min_grad = 0.0;     // min over s <= k of grad_norm
  double avg_sq_grad = 0.0;  // (1/k) sum_{s<k} grad_norm^2; k = 0: own value
};

struct RunSummary {
  double final_f = 0.0;
  double final_grad = 0.0;
  double min_grad = 0.0;
  std::size_t min_grad_round = 0;
  // First round whose gradient norm is below each threshold.
  std::vector<std::optional<std::size_t>> crossings;
};

struct RunResult {
  std::string config_echo;
  std::uint64_t seed = 0;
  HyperParams hp;
  InitPolicy init = InitPolicy::kDefault;
  std::optional<TheoryResult> theory;
  std::optional<double> alpha_p;
  std::optional<double> alpha_d;
  std::optional<double> psi0;
  // f* - (1/n) sum_j f_j*, when both are known.
  std::optional<double> heterogeneity_gap;
  std::vector<std::string> warnings;
  std::vector<RoundRecord> records;
  CommLedger ledger;
  RunSummary summary;
  // Length-prefixed canonical messages in send order when logging is on.
  std::vector<std::uint8_t> message_log;
};

// Per-round view handed to observers after aggregation.
struct RoundEvent {
  std::size_t round = 0;
  const Objective* objective = nullptr;
  const LayeredTensor* x_before = nullptr;
  const LayeredTensor* g_before = nullptr;  // server G^k
  const ServerRoundOutput* server = nullptr;
  const Cluster* cluster = nullptr;  // state after the round
};
using RoundObserver = std::function<void(const RoundEvent&)>;

// K synchronous rounds of server, broadcast, workers and aggregation.
// Errors are rethrown with the round number prepended.
RunResult Run(const RunConfig& config, const RoundObserver& observer = {});

// Splits a message log back into messages.
std::vector<CompressedMessage> ReadMessageLog(
    const std::vector<std::uint8_t>& log);

// One run per value of `axis`, a config key such as "compressors.worker".
// Throws UnknownAxisError for keys that do not exist.
std::vector<RunResult> Sweep(const RunConfig& base, const std::string& axis,
                             const std::vector<std::string>& values);

enum class RateMetric { kMinGrad, kAvgSqGrad, kGradNorm };
RateMetric ParseRateMetric(const std::string& text);

struct RateFit {
  double slope = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

// Least-squares slope of log(value) against log(round). Rounds below 1 and
// nonpositive values are ignored; throws InsufficientDataError with fewer
// than ten usable points.
RateFit FitRate(const std::vector<double>& rounds,
                const std::vector<double>& values);
RateFit FitRate(const RunResult& result, RateMetric metric,
                std::size_t first_round, std::size_t last_round);

// Per-round cost of one compressor over every layer of a model, relative
// to sending the layers uncompressed at the same value width.
struct AccountRow {
  CompressorKind kind;
  double bits = 0.0;
  double relative = 0.0;
};

// The default account list: identity, natural, top-k at 20/15/10/5 percent
// with natural variants, and rank-k at 20/15/10/5 percent likewise.
std::vector<CompressorKind> DefaultAccountKinds();
// Prices `config.account` (or the default list) on the model shapes with
// the configured bit widths. Randomized kinds use their expected cost.
std::vector<AccountRow> Account(const RunConfig& config);
std::string AccountTable(const std::vector<AccountRow>& rows);

// Serialized outputs. CSV columns: round, f, grad_dual_norm, lyapunov,
// uplink_bits_cum, downlink_bits_cum, min_grad, avg_sq_grad, then
// grad_layer_<i>. Reals use 17 significant digits; a missing Lyapunov
// value is an empty field.
std::string MetricsCsv(const RunResult& result);
std::vector<RoundRecord> ParseMetricsCsv(const std::string& text);
std::string SummaryJson(const RunResult& result);

}  // namespace ef21

#endif  // EF21MUON_HARNESS_H_
