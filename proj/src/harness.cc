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

#include "ef21muon/harness.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

#include "ef21muon/config.h"
#include "ef21muon/error.h"
#include "ef21muon/sampling.h"
#include "json.hpp"

namespace ef21 {
namespace {

// Tags for streams derived from the objective seed.
constexpr std::uint64_t kInstanceTag = 0x1157a11ce;
constexpr std::uint64_t kStartTag = 0x57a27;
constexpr std::uint64_t kAlphaTag = 0xa1fa;
constexpr std::uint64_t kPilotTag = 0x9110;
constexpr std::uint64_t kSweepTag = 0x5eed;

std::uint64_t ObjectiveStream(const RunConfig& c, std::uint64_t tag) {
  return DeriveSeed(c.objective.seed, tag, 0, 0);
}

ModelSpec ResolvedSpec(const RunConfig& c) {
  ModelSpec spec = c.model;
  if (spec.norms.size() == 1 && spec.shapes.size() > 1) {
    spec.norms.assign(spec.shapes.size(), spec.norms[0]);
  }
  return spec;
}

ObjectivePtr BuildObjective(const RunConfig& c, const ModelSpec& spec) {
  const ObjectiveConfig& o = c.objective;
  Rng rng(ObjectiveStream(c, kInstanceTag));
  switch (o.type) {
    case ObjectiveType::kQuadratic: {
      spec.Validate();
      QuadraticOptions q;
      q.num_workers = o.num_workers;
      q.heterogeneity = o.heterogeneity;
      q.conditioning = o.conditioning;
      q.noise_sigma = o.noise_sigma;
      q.scale = o.scale;
      return MakeQuadraticEnsemble(spec, q, rng);
    }
    case ObjectiveType::kDivergence: {
      auto d = MakeDivergenceInstance();
      const ModelSpec& fixed = d->spec();
      const bool same_shapes = spec.shapes.empty() ||
                               (spec.shapes.size() == 1 &&
                                spec.shapes[0] == fixed.shapes[0]);
      const bool same_norms =
          spec.norms.empty() ||
          (spec.norms.size() == 1 && spec.norms[0] == fixed.norms[0]);
      if (!same_shapes || !same_norms || o.num_workers != 3 ||
          !o.noise_sigma.empty()) {
        throw ConfigError(
            "the divergence instance has one 3x1 frobenius layer, three "
            "workers and no noise");
      }
      return d;
    }
    case ObjectiveType::kMlp: {
      spec.Validate();
      MlpOptions m;
      m.num_workers = o.num_workers;
      m.dataset_size = o.dataset_size;
      m.label_noise = o.label_noise;
      m.batch_size = o.batch_size;
      m.noise_sigma = o.noise_sigma;
      if (!o.dataset_path.empty()) {
        return std::make_shared<const TinyMlp>(
            spec, ReadDatasetCsv(o.dataset_path), m);
      }
      return MakeTinyMlp(spec, m, rng);
    }
  }
  throw ConfigError("unknown objective type");
}

LayeredTensor BuildStart(const RunConfig& c, const Objective& obj) {
  const ModelSpec& spec = obj.spec();
  StartPolicy start = c.objective.start;
  if (start == StartPolicy::kDefault) {
    if (c.objective.type == ObjectiveType::kDivergence) return DivergenceStart();
    start = StartPolicy::kRandom;
  }
  if (start == StartPolicy::kZeros) return ZerosOf(spec.shapes);
  Rng rng(ObjectiveStream(c, kStartTag));
  LayeredTensor x;
  for (const Shape& s : spec.shapes) {
    double scale = c.objective.start_scale;
    if (c.objective.type == ObjectiveType::kMlp) {
      scale /= std::sqrt(static_cast<double>(s.cols));
    }
    x.push_back(rng.NormalMatrix(s.rows, s.cols, scale));
  }
  return x;
}

// Smallest contraction of `kind` over the layers in the given norms:
// analytic when a formula exists, estimated otherwise.
double ResolveAlpha(const CompressorKind& kind, const ModelSpec& spec,
                    const std::vector<NormKind>& norms, std::uint64_t seed,
                    const char* role, std::vector<std::string>& warnings) {
  double alpha = 1.0;
  Rng rng(seed);
  for (std::size_t i = 0; i < spec.num_layers(); ++i) {
    double a;
    try {
      a = AnalyticAlpha(kind, spec.shapes[i], norms[i]).alpha;
    } catch (const NoFormulaError&) {
      const Shape shape = spec.shapes[i];
      const ContractionReport est = EstimateAlpha(
          kind, norms[i], [shape](Rng& r) { return SampleMixed(shape, r); },
          20, 100, rng);
      a = est.alpha;
      warnings.push_back(std::string(role) + " contraction of " +
                         ToString(kind) + " in the " + ToString(norms[i]) +
                         " norm on layer " + std::to_string(i) +
                         " is estimated (" + std::to_string(a) + ")");
    }
    alpha = std::min(alpha, a);
  }
  if (!(alpha > 0.0)) {
    throw ConfigError(std::string(role) + " compressor " + ToString(kind) +
                      " is not contractive (alpha = " + std::to_string(alpha) +
                      ")");
  }
  return alpha;
}

std::vector<NormKind> DualNorms(const ModelSpec& spec) {
  std::vector<NormKind> out;
  for (const NormKind& k : spec.norms) out.push_back(DualOf(k));
  return out;
}

SmoothnessProfile ResolveProfile(const RunConfig& c, const Objective& obj,
                                 const LayeredTensor& x0, bool generalized) {
  if (c.smoothness == SmoothnessSource::kExact) {
    if (const auto* q = dynamic_cast<const QuadraticEnsemble*>(&obj)) {
      return QuadraticProfile(*q);
    }
  }
  // Pilot cloud around X0.
  Rng rng(ObjectiveStream(c, kPilotTag));
  std::vector<LayeredTensor> pilot = {x0};
  for (int k = 0; k < 11; ++k) {
    LayeredTensor p = x0;
    for (Matrix& m : p) {
      const double scale = 0.5 * c.objective.start_scale /
                           std::sqrt(static_cast<double>(m.cols()));
      m += rng.NormalMatrix(m.rows(), m.cols(), scale);
    }
    pilot.push_back(std::move(p));
  }
  const SmoothnessFit fit = EstimateSmoothness(obj, pilot, 200, rng);
  return generalized ? fit.least_squares : fit.conservative;
}

[[noreturn]] void RethrowWithContext(const Error& e, const std::string& ctx) {
  const std::string msg = ctx + e.what();
#define EF21_RETHROW(T) \
  if (dynamic_cast<const T*>(&e)) throw T(msg);
  EF21_RETHROW(NonFiniteError)
  EF21_RETHROW(ShapeError)
  EF21_RETHROW(ConvergenceError)
  EF21_RETHROW(UnsupportedNormError)
  EF21_RETHROW(ZeroInputError)
  EF21_RETHROW(MalformedPayloadError)
  EF21_RETHROW(NoFormulaError)
  EF21_RETHROW(MissingConstantError)
  EF21_RETHROW(MissingWorkerError)
  EF21_RETHROW(UnknownFStarError)
  EF21_RETHROW(DegenerateTrajectoryError)
  EF21_RETHROW(InsufficientDataError)
  EF21_RETHROW(UnknownAxisError)
  EF21_RETHROW(ConfigError)
#undef EF21_RETHROW
  throw Error(msg);
}

void AppendLog(std::vector<std::uint8_t>& log, const CompressedMessage& m) {
  const std::vector<std::uint8_t> bytes = Serialize(m);
  const std::uint64_t n = bytes.size();
  for (int b = 0; b < 8; ++b) log.push_back(std::uint8_t(n >> (8 * b)));
  log.insert(log.end(), bytes.begin(), bytes.end());
}

void TrackAlpha(std::map<std::string, double>& table, const std::string& key,
                const CompressorKind& kind, const Matrix& input,
                const NormKind& norm) {
  double a;
  try {
    a = AnalyticAlpha(kind, input, norm).alpha;
  } catch (const Error&) {
    return;
  }
  auto it = table.find(key);
  if (it == table.end()) {
    table.emplace(key, a);
  } else {
    it->second = std::min(it->second, a);
  }
}

// Runs body(j) for j in [0, n) on up to `threads` threads in contiguous
// blocks; the first exception in worker order is rethrown.
template <typename F>
void ParallelFor(std::size_t n, std::size_t threads, F body) {
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t j = lo; j < hi; ++j) {
      try {
        body(j);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    run(0, n);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back(run, t * n / threads, (t + 1) * n / threads);
    }
    for (std::thread& th : pool) th.join();
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string Num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::size_t ThreadCount(const RunConfig& config) {
  if (config.threads > 0) return config.threads;
  if (const char* env = std::getenv("MUON_EF_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return v;
  }
  return 1;
}

RunSetup Prepare(const RunConfig& config) {
  RunSetup s;
  const ModelSpec spec = ResolvedSpec(config);
  s.objective = BuildObjective(config, spec);
  const Objective& obj = *s.objective;
  const ModelSpec& used = obj.spec();
  s.x0 = BuildStart(config, obj);
  s.hp = config.hp;
  s.hp.norms = used.norms;
  s.init = config.init;

  LyapunovMode mode = config.lyapunov;
  if (mode == LyapunovMode::kAuto) {
    mode = LyapunovMode::kNone;
    if (config.theorem == Theorem::kT1 && obj.f_star()) mode = LyapunovMode::kT1;
    if (config.theorem == Theorem::kT2 && obj.f_star()) mode = LyapunovMode::kT2;
  }
  if (mode != LyapunovMode::kNone && !obj.f_star()) {
    throw UnknownFStarError("Lyapunov tracking needs f*, unknown here");
  }

  const bool stochastic_theorem =
      config.theorem == Theorem::kT3 || config.theorem == Theorem::kT4;
  const bool need_alphas = config.theorem.has_value() ||
                           mode != LyapunovMode::kNone;
  if (need_alphas) {
    s.alpha_p = config.alpha_p;
    if (!s.alpha_p) {
      s.alpha_p = ResolveAlpha(s.hp.server_compressor, used, used.norms,
                               ObjectiveStream(config, kAlphaTag), "server",
                               s.warnings);
    }
    s.alpha_d = config.alpha_d;
    if (!s.alpha_d) {
      const std::vector<NormKind> target =
          stochastic_theorem
              ? std::vector<NormKind>(used.num_layers(), NormKind::Frobenius())
              : DualNorms(used);
      s.alpha_d = ResolveAlpha(s.hp.worker_compressor, used, target,
                               ObjectiveStream(config, kAlphaTag + 1),
                               "worker", s.warnings);
    }
  }
  const bool generalized =
      config.theorem == Theorem::kT2 || config.theorem == Theorem::kT4;
  if (config.theorem || mode == LyapunovMode::kT1) {
    s.profile = ResolveProfile(config, obj, s.x0, generalized);
  }

  if (config.theorem) {
    TheoryInputs in;
    in.profile = s.profile;
    in.alpha_p = s.alpha_p;
    in.alpha_d = s.alpha_d;
    in.num_workers = obj.num_workers();
    in.rounds = config.rounds;
    in.equivalence = EquivalencesOf(used);
    in.eta = config.eta;
    if (config.theorem == Theorem::kT3) {
      in.sigma = obj.noise_sigma().empty() ? std::vector<double>{0.0}
                                           : obj.noise_sigma();
      if (obj.f_star()) in.delta0 = obj.Value(s.x0) - *obj.f_star();
    }
    s.theory = TheoryStepsize(*config.theorem, in);
    s.hp.schedule = s.theory->schedule;
    s.hp.rate = s.theory->rate;
    s.hp.beta = s.theory->beta;
    s.hp.variant = s.theory->variant;
    if (s.init == InitPolicy::kDefault) s.init = s.theory->init;
    for (std::string& w : CompressorFamilyWarnings(
             *config.theorem, s.hp.worker_compressor, used)) {
      s.warnings.push_back(std::move(w));
    }
  }
  s.init = ResolveInitPolicy(s.init, s.hp.variant);
  s.hp.Validate(used.num_layers());

  if (mode != LyapunovMode::kNone) {
    LyapunovParams lp;
    lp.kind = mode == LyapunovMode::kT1 ? LyapunovKind::kT1 : LyapunovKind::kT2;
    const ScheduleType want = mode == LyapunovMode::kT1
                                  ? ScheduleType::kStepsize
                                  : ScheduleType::kRadius;
    if (s.hp.schedule != want) {
      throw ConfigError("Lyapunov " + std::string(mode == LyapunovMode::kT1
                                                      ? "t1 needs a stepsize"
                                                      : "t2 needs a radius") +
                        " schedule");
    }
    lp.alpha_p = *s.alpha_p;
    lp.alpha_d = *s.alpha_d;
    lp.rate = s.hp.rate;
    if (s.profile) {
      for (std::size_t i = 0; i < used.num_layers(); ++i) {
        lp.l_tilde.push_back(s.profile->LTilde(i));
      }
    }
    s.lyapunov = lp;
  }
  return s;
}

std::uint64_t CommLedger::uplink_total() const {
  return uplink_cumulative.empty() ? 0 : uplink_cumulative.back();
}

std::uint64_t CommLedger::downlink_total() const {
  return downlink_cumulative.empty() ? 0 : downlink_cumulative.back();
}

RunResult Run(const RunConfig& config, const RoundObserver& observer) {
  RunSetup setup;
  try {
    setup = Prepare(config);
  } catch (const Error& e) {
    RethrowWithContext(e, "setup: ");
  }
  const Objective& obj = *setup.objective;
  const HyperParams& hp = setup.hp;
  const std::size_t n = obj.num_workers();
  const std::size_t p = obj.spec().num_layers();
  const std::size_t threads = ThreadCount(config);

  RunResult res;
  res.config_echo = CanonicalConfig(config);
  res.seed = config.seed;
  res.hp = hp;
  res.init = setup.init;
  res.theory = setup.theory;
  res.alpha_p = setup.alpha_p;
  res.alpha_d = setup.alpha_d;
  res.warnings = setup.warnings;
  if (obj.f_star()) {
    double mean = 0.0;
    bool known = true;
    for (std::size_t j = 0; j < n; ++j) {
      const auto fj = obj.worker_f_star(j);
      if (!fj) {
        known = false;
        break;
      }
      mean += *fj / double(n);
    }
    if (known) res.heterogeneity_gap = *obj.f_star() - mean;
  }

  std::vector<NormKind> duals = DualNorms(obj.spec());
  std::vector<NormKind> worker_target = duals;
  if (hp.variant == Variant::kStochastic) {
    worker_target.assign(p, NormKind::Frobenius());
  }
  const std::string server_key = "server:" + ToString(hp.server_compressor);
  const std::string worker_key = "worker:" + ToString(hp.worker_compressor);

  std::size_t k = 0;
  try {
    Cluster c = Initialize(obj, setup.x0, hp, setup.init, config.seed);
    double sum_sq = 0.0;
    double min_grad = std::numeric_limits<double>::infinity();
    std::uint64_t up_cum = 0, down_cum = 0;

    auto measure = [&](std::size_t round) {
      RoundRecord r;
      r.round = round;
      const LayeredTensor grad = obj.Gradient(c.server.x);
      double sq = 0.0;
      for (std::size_t i = 0; i < p; ++i) {
        const double g = Norm(grad[i], duals[i]);
        r.layer_grad.push_back(g);
        sq += g * g;
      }
      r.grad_norm = std::sqrt(sq);
      if (!std::isfinite(r.grad_norm)) {
        throw NonFiniteError("gradient norm is not finite");
      }
      if (r.grad_norm < min_grad) {
        min_grad = r.grad_norm;
        res.summary.min_grad_round = round;
      }
      r.min_grad = min_grad;
      r.avg_sq_grad = round == 0 ? sq : sum_sq / double(round);
      sum_sq += sq;
      r.uplink_bits = up_cum;
      r.downlink_bits = down_cum;
      for (std::size_t t = 0; t < config.thresholds.size(); ++t) {
        if (!res.summary.crossings[t] && r.grad_norm < config.thresholds[t]) {
          res.summary.crossings[t] = round;
        }
      }
      const bool keep = round % config.record_every == 0 ||
                        round == config.rounds;
      if (keep) {
        r.f = obj.Value(c.server.x);
        if (!std::isfinite(r.f)) {
          throw NonFiniteError("objective value is not finite");
        }
        if (setup.lyapunov) {
          r.lyapunov = Lyapunov(*setup.lyapunov, obj, c.server, c.workers);
          if (round == 0) res.psi0 = r.lyapunov;
        }
      }
      if (keep) res.records.push_back(std::move(r));
    };
    res.summary.crossings.assign(config.thresholds.size(), std::nullopt);

    std::vector<std::vector<CompressedMessage>> uplinks(n);
    std::vector<LayeredTensor> worker_inputs(n);
    LayeredTensor server_inputs;
    const bool want_inputs = config.track_alpha;
    for (k = 0; k < config.rounds; ++k) {
      measure(k);
      LayeredTensor x_before, g_before;
      if (observer) {
        x_before = c.server.x;
        g_before = c.server.g;
      }
      Rng server_rng(ServerStreamSeed(config.seed, k));
      const ServerRoundOutput out = ServerRound(
          c.server, hp, server_rng, want_inputs ? &server_inputs : nullptr);
      std::uint64_t down = 0;
      for (std::size_t i = 0; i < p; ++i) {
        down += out.broadcast[i].bit_cost;
        if (config.log_messages) AppendLog(res.message_log, out.broadcast[i]);
        if (want_inputs) {
          TrackAlpha(res.ledger.min_alpha, server_key, hp.server_compressor,
                     server_inputs[i], obj.spec().norms[i]);
        }
      }
      ParallelFor(n, threads, [&](std::size_t j) {
        WorkerState& w = c.workers[j];
        Rng rng(WorkerStreamSeed(config.seed, w.id, k));
        uplinks[j] = WorkerRound(w, out.broadcast, obj, hp, rng,
                                 want_inputs ? &worker_inputs[j] : nullptr);
      });
      std::vector<std::uint64_t> up_row(n, 0);
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < p; ++i) {
          up_row[j] += uplinks[j][i].bit_cost;
          if (config.log_messages) AppendLog(res.message_log, uplinks[j][i]);
          if (want_inputs) {
            TrackAlpha(res.ledger.min_alpha, worker_key, hp.worker_compressor,
                       worker_inputs[j][i], worker_target[i]);
          }
        }
        up_cum += up_row[j];
      }
      down_cum += down;
      res.ledger.uplink.push_back(std::move(up_row));
      res.ledger.downlink.push_back(down);
      res.ledger.uplink_cumulative.push_back(up_cum);
      res.ledger.downlink_cumulative.push_back(down_cum);
      Aggregate(c.server, uplinks, n, hp.variant);
      if (observer) {
        RoundEvent ev;
        ev.round = k;
        ev.objective = &obj;
        ev.x_before = &x_before;
        ev.g_before = &g_before;
        ev.server = &out;
        ev.cluster = &c;
        observer(ev);
      }
    }
    measure(config.rounds);
    const RoundRecord& last = res.records.back();
    res.summary.final_f = last.f;
    res.summary.final_grad = last.grad_norm;
    res.summary.min_grad = min_grad;
  } catch (const Error& e) {
    RethrowWithContext(e, "round " + std::to_string(k) + ": ");
  }
  return res;
}

std::vector<CompressedMessage> ReadMessageLog(
    const std::vector<std::uint8_t>& log) {
  std::vector<CompressedMessage> out;
  std::size_t pos = 0;
  while (pos < log.size()) {
    if (log.size() - pos < 8) {
      throw MalformedPayloadError("message log: truncated length");
    }
    std::uint64_t len = 0;
    for (int b = 0; b < 8; ++b) len |= std::uint64_t(log[pos + b]) << (8 * b);
    pos += 8;
    if (log.size() - pos < len) {
      throw MalformedPayloadError("message log: truncated message");
    }
    out.push_back(Deserialize(std::vector<std::uint8_t>(
        log.begin() + pos, log.begin() + pos + len)));
    pos += len;
  }
  return out;
}

std::vector<RunResult> Sweep(const RunConfig& base, const std::string& axis,
                             const std::vector<std::string>& values) {
  if (!IsConfigKey(axis)) {
    throw UnknownAxisError("unknown sweep axis '" + axis + "'");
  }
  std::vector<RunConfig> configs;
  for (std::size_t v = 0; v < values.size(); ++v) {
    RunConfig c = base;
    if (base.seed_policy == SeedPolicy::kDerived && axis != "harness.seed") {
      c.seed = DeriveSeed(base.seed, kSweepTag, v, 0);
    }
    ApplySetting(c, axis, values[v]);
    c.threads = 1;
    configs.push_back(std::move(c));
  }
  std::vector<RunResult> results(configs.size());
  ParallelFor(configs.size(), ThreadCount(base),
              [&](std::size_t v) { results[v] = Run(configs[v]); });
  return results;
}

RateMetric ParseRateMetric(const std::string& text) {
  if (text == "min_grad") return RateMetric::kMinGrad;
  if (text == "avg_sq_grad") return RateMetric::kAvgSqGrad;
  if (text == "grad_norm") return RateMetric::kGradNorm;
  throw ConfigError("unknown rate metric '" + text + "'");
}

RateFit FitRate(const std::vector<double>& rounds,
                const std::vector<double>& values) {
  if (rounds.size() != values.size()) {
    throw ShapeError("rate fit: rounds and values differ in length");
  }
  std::vector<double> lx, ly;
  for (std::size_t t = 0; t < rounds.size(); ++t) {
    if (rounds[t] >= 1.0 && values[t] > 0.0 && std::isfinite(values[t])) {
      lx.push_back(std::log(rounds[t]));
      ly.push_back(std::log(values[t]));
    }
  }
  if (lx.size() < 10) {
    throw InsufficientDataError("rate fit needs at least 10 points, got " +
                                std::to_string(lx.size()));
  }
  const double m = double(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t t = 0; t < lx.size(); ++t) {
    mx += lx[t] / m;
    my += ly[t] / m;
  }
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t t = 0; t < lx.size(); ++t) {
    sxx += (lx[t] - mx) * (lx[t] - mx);
    sxy += (lx[t] - mx) * (ly[t] - my);
    syy += (ly[t] - my) * (ly[t] - my);
  }
  if (sxx == 0.0) throw InsufficientDataError("rate fit: all rounds equal");
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  fit.points = lx.size();
  return fit;
}

RateFit FitRate(const RunResult& result, RateMetric metric,
                std::size_t first_round, std::size_t last_round) {
  std::vector<double> rounds, values;
  for (const RoundRecord& r : result.records) {
    if (r.round < first_round || r.round > last_round) continue;
    rounds.push_back(double(r.round));
    switch (metric) {
      case RateMetric::kMinGrad: values.push_back(r.min_grad); break;
      case RateMetric::kAvgSqGrad: values.push_back(r.avg_sq_grad); break;
      case RateMetric::kGradNorm: values.push_back(r.grad_norm); break;
    }
  }
  return FitRate(rounds, values);
}

std::string MetricsCsv(const RunResult& result) {
  std::ostringstream out;
  out << "round,f,grad_dual_norm,lyapunov,uplink_bits_cum,downlink_bits_cum,"
         "min_grad,avg_sq_grad";
  const std::size_t p =
      result.records.empty() ? 0 : result.records[0].layer_grad.size();
  for (std::size_t i = 0; i < p; ++i) out << ",grad_layer_" << i;
  out << "\n";
  for (const RoundRecord& r : result.records) {
    out << r.round << "," << Num(r.f) << "," << Num(r.grad_norm) << ","
        << (r.lyapunov ? Num(*r.lyapunov) : "") << "," << r.uplink_bits << ","
        << r.downlink_bits << "," << Num(r.min_grad) << ","
        << Num(r.avg_sq_grad);
    for (double g : r.layer_grad) out << "," << Num(g);
    out << "\n";
  }
  return out.str();
}

std::vector<RoundRecord> ParseMetricsCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("metrics CSV: empty");
  std::size_t columns = 1;
  for (char ch : line) columns += ch == ',';
  if (columns < 8) throw ConfigError("metrics CSV: bad header");
  std::vector<RoundRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        f.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    f.push_back(cur);
    if (f.size() != columns) throw ConfigError("metrics CSV: ragged row");
    RoundRecord r;
    r.round = std::stoull(f[0]);
    r.f = std::strtod(f[1].c_str(), nullptr);
    r.grad_norm = std::strtod(f[2].c_str(), nullptr);
    if (!f[3].empty()) r.lyapunov = std::strtod(f[3].c_str(), nullptr);
    r.uplink_bits = std::stoull(f[4]);
    r.downlink_bits = std::stoull(f[5]);
    r.min_grad = std::strtod(f[6].c_str(), nullptr);
    r.avg_sq_grad = std::strtod(f[7].c_str(), nullptr);
    for (std::size_t c = 8; c < f.size(); ++c) {
      r.layer_grad.push_back(std::strtod(f[c].c_str(), nullptr));
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string SummaryJson(const RunResult& result) {
  using nlohmann::json;
  json j;
  j["config"] = result.config_echo;
  j["seed"] = result.seed;
  j["schedule"] = ToString(result.hp.schedule);
  j["rate"] = result.hp.rate;
  j["beta"] = result.hp.beta;
  j["variant"] = ToString(result.hp.variant);
  j["init"] = ToString(result.init);
  j["server_compressor"] = ToString(result.hp.server_compressor);
  j["worker_compressor"] = ToString(result.hp.worker_compressor);
  j["alpha_p"] = result.alpha_p ? json(*result.alpha_p) : json(nullptr);
  j["alpha_d"] = result.alpha_d ? json(*result.alpha_d) : json(nullptr);
  j["psi0"] = result.psi0 ? json(*result.psi0) : json(nullptr);
  j["heterogeneity_gap"] = result.heterogeneity_gap
                               ? json(*result.heterogeneity_gap)
                               : json(nullptr);
  if (result.theory) {
    j["theory"] = {{"rate", result.theory->rate},
                   {"beta", result.theory->beta},
                   {"eta", result.theory->eta},
                   {"zeta", result.theory->zeta}};
  }
  j["warnings"] = result.warnings;
  const RunSummary& s = result.summary;
  json crossings = json::array();
  for (const auto& c : s.crossings) crossings.push_back(c ? json(*c) : json(nullptr));
  j["summary"] = {{"final_f", s.final_f},
                  {"final_grad", s.final_grad},
                  {"min_grad", s.min_grad},
                  {"min_grad_round", s.min_grad_round},
                  {"threshold_crossings", crossings}};
  j["ledger"] = {{"rounds", result.ledger.downlink.size()},
                 {"uplink_bits_total", result.ledger.uplink_total()},
                 {"downlink_bits_total", result.ledger.downlink_total()},
                 {"min_alpha", result.ledger.min_alpha}};
  return j.dump(2) + "\n";
}

std::vector<CompressorKind> DefaultAccountKinds() {
  std::vector<CompressorKind> out = {CompressorKind::Identity(),
                                     CompressorKind::Natural()};
  for (bool rank : {false, true}) {
    for (double f : {0.2, 0.15, 0.1, 0.05}) {
      const CompressorKind k =
          rank ? CompressorKind::RankK(f) : CompressorKind::TopK(f);
      out.push_back(k);
      if (f == 0.15 || f == 0.1) {
        out.push_back(CompressorKind::Composed(k, CompressorKind::Natural()));
      }
    }
  }
  return out;
}

std::vector<AccountRow> Account(const RunConfig& config) {
  if (config.model.shapes.empty()) throw ConfigError("model.shapes is empty");
  const std::vector<CompressorKind> kinds =
      config.account.empty() ? DefaultAccountKinds() : config.account;
  double dense = 0.0;
  for (const Shape& s : config.model.shapes) {
    dense += PredictBitCost(CompressorKind::Identity(), s, config.hp.bits);
  }
  std::vector<AccountRow> rows;
  for (const CompressorKind& k : kinds) {
    AccountRow r;
    r.kind = k;
    for (const Shape& s : config.model.shapes) {
      r.bits += PredictBitCost(k, s, config.hp.bits);
    }
    r.relative = r.bits / dense;
    rows.push_back(r);
  }
  return rows;
}

std::string AccountTable(const std::vector<AccountRow>& rows) {
  std::string out = "compressor,bits_per_round,relative\n";
  char buf[128];
  for (const AccountRow& r : rows) {
    std::snprintf(buf, sizeof(buf), ",%.0f,%.4f\n", r.bits, r.relative);
    out += ToString(r.kind) + buf;
  }
  return out;
}

}  // namespace ef21
