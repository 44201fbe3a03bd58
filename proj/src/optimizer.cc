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

#include "ef21muon/optimizer.h"

#include <cmath>
#include <cstring>
#include <limits>

#include "ef21muon/error.h"

namespace ef21 {
namespace {

double PerLayer(const std::vector<double>& v, std::size_t layer,
                const char* what) {
  if (v.empty()) throw ConfigError(std::string(what) + ": no values");
  if (v.size() == 1) return v[0];
  if (layer >= v.size()) {
    throw ConfigError(std::string(what) + ": no value for layer " +
                      std::to_string(layer));
  }
  return v[layer];
}

void CheckLength(const std::vector<double>& v, std::size_t layers,
                 const char* what) {
  if (v.size() != 1 && v.size() != layers) {
    throw ConfigError(std::string(what) + ": expected 1 or " +
                      std::to_string(layers) + " values, got " +
                      std::to_string(v.size()));
  }
}

}  // namespace

std::string ToString(Variant v) {
  switch (v) {
    case Variant::kDeterministic: return "deterministic";
    case Variant::kStochastic: return "stochastic";
    case Variant::kNoErrorFeedback: return "no_error_feedback";
  }
  return "?";
}

std::string ToString(ScheduleType s) {
  return s == ScheduleType::kRadius ? "radius" : "stepsize";
}

Variant ParseVariant(const std::string& text) {
  if (text == "deterministic") return Variant::kDeterministic;
  if (text == "stochastic") return Variant::kStochastic;
  if (text == "no_error_feedback") return Variant::kNoErrorFeedback;
  throw ConfigError("unknown variant '" + text + "'");
}

ScheduleType ParseScheduleType(const std::string& text) {
  if (text == "radius") return ScheduleType::kRadius;
  if (text == "stepsize") return ScheduleType::kStepsize;
  throw ConfigError("unknown schedule '" + text + "'");
}

std::string ToString(InitPolicy p) {
  switch (p) {
    case InitPolicy::kDefault: return "default";
    case InitPolicy::kExactGradient: return "exact";
    case InitPolicy::kStochasticGradient: return "stochastic";
    case InitPolicy::kCompressedStochastic: return "compressed_stochastic";
  }
  return "?";
}

InitPolicy ParseInitPolicy(const std::string& text) {
  if (text == "default") return InitPolicy::kDefault;
  if (text == "exact") return InitPolicy::kExactGradient;
  if (text == "stochastic") return InitPolicy::kStochasticGradient;
  if (text == "compressed_stochastic") return InitPolicy::kCompressedStochastic;
  throw ConfigError("unknown init policy '" + text + "'");
}

InitPolicy ResolveInitPolicy(InitPolicy p, Variant v) {
  if (p != InitPolicy::kDefault) return p;
  return v == Variant::kStochastic ? InitPolicy::kStochasticGradient
                                   : InitPolicy::kExactGradient;
}

std::string ToString(Theorem t) {
  switch (t) {
    case Theorem::kT1: return "t1";
    case Theorem::kT2: return "t2";
    case Theorem::kT3: return "t3";
    case Theorem::kT4: return "t4";
  }
  return "?";
}

Theorem ParseTheorem(const std::string& text) {
  if (text == "t1") return Theorem::kT1;
  if (text == "t2") return Theorem::kT2;
  if (text == "t3") return Theorem::kT3;
  if (text == "t4") return Theorem::kT4;
  throw ConfigError("unknown theorem '" + text + "'");
}

double HyperParams::Rate(std::size_t round, std::size_t layer) const {
  if (round < rate_table.size()) {
    return PerLayer(rate_table[round], layer, "rate table");
  }
  return PerLayer(rate, layer, "rate");
}

double HyperParams::Beta(std::size_t layer) const {
  return PerLayer(beta, layer, "beta");
}

void HyperParams::Validate(std::size_t layers) const {
  CheckLength(rate, layers, "rate");
  CheckLength(beta, layers, "beta");
  if (norms.size() != layers) {
    throw ConfigError("hyperparameters: expected " + std::to_string(layers) +
                      " norms");
  }
  for (double r : rate) {
    if (!(r >= 0.0) || !std::isfinite(r)) {
      throw ConfigError("rate must be finite and >= 0");
    }
  }
  for (const auto& row : rate_table) {
    CheckLength(row, layers, "rate table");
    for (double r : row) {
      if (!(r >= 0.0) || !std::isfinite(r)) {
        throw ConfigError("rate table entries must be finite and >= 0");
      }
    }
  }
  for (double b : beta) {
    if (!(b > 0.0 && b <= 1.0)) throw ConfigError("beta must lie in (0, 1]");
  }
  for (const NormKind& k : norms) {
    if (!LmoSupported(k)) {
      throw ConfigError("norm '" + ToString(k) + "' has no LMO");
    }
  }
}

std::uint64_t ServerStreamSeed(std::uint64_t master, std::size_t round) {
  return DeriveSeed(master, 0, round, 0);
}

std::uint64_t WorkerStreamSeed(std::uint64_t master, std::size_t worker,
                               std::size_t round) {
  return DeriveSeed(master, 1 + worker, round, 0);
}

std::uint64_t InitStreamSeed(std::uint64_t master, std::size_t worker) {
  return DeriveSeed(master, 1 + worker, 0, 1);
}

Cluster Initialize(const Objective& obj, const LayeredTensor& x0,
                   const HyperParams& hp, InitPolicy policy,
                   std::uint64_t master_seed) {
  const std::size_t p = obj.spec().num_layers();
  hp.Validate(p);
  policy = ResolveInitPolicy(policy, hp.variant);
  const std::size_t n = obj.num_workers();
  Cluster c;
  c.server.x = x0;
  c.server.w = x0;
  c.server.g = ZerosOf(obj.spec().shapes);
  for (std::size_t j = 0; j < n; ++j) {
    Rng rng(InitStreamSeed(master_seed, j));
    WorkerState w;
    w.id = j;
    w.w = x0;
    switch (policy) {
      case InitPolicy::kExactGradient:
        w.m = obj.WorkerGradient(j, x0);
        w.g = w.m;
        break;
      case InitPolicy::kStochasticGradient:
        w.m = obj.WorkerStochasticGradient(j, x0, rng);
        w.g = w.m;
        break;
      case InitPolicy::kCompressedStochastic:
      case InitPolicy::kDefault:
        w.m = obj.WorkerStochasticGradient(j, x0, rng);
        w.g.clear();
        for (std::size_t i = 0; i < p; ++i) {
          w.g.push_back(Decompress(
              Compress(hp.worker_compressor, w.m[i], rng, hp.bits)));
        }
        break;
    }
    AddInPlace(c.server.g, w.g);
    c.workers.push_back(std::move(w));
  }
  for (Matrix& m : c.server.g) m *= 1.0 / double(n);
  return c;
}

ServerRoundOutput ServerRound(ServerState& s, const HyperParams& hp,
                              Rng& rng, LayeredTensor* inputs) {
  if (inputs) inputs->clear();
  const std::size_t p = s.x.size();
  ServerRoundOutput out;
  out.radius.resize(p);
  out.stepsize.resize(p);
  out.grad_dual_norm.resize(p);
  out.skipped.resize(p);
  for (std::size_t i = 0; i < p; ++i) {
    const double rate = hp.Rate(s.round, i);
    const LmoResult lmo = LmoDirection(s.g[i], hp.norms[i], hp.lmo);
    const double dual = lmo.dual_norm_value;
    out.grad_dual_norm[i] = dual;
    out.skipped[i] = dual == 0.0;
    if (dual == 0.0) {
      out.radius[i] = 0.0;
      out.stepsize[i] = 0.0;
    } else {
      // Both schedules apply X - gamma sharp(G) = X + gamma ||G||_* lmo(G),
      // a radius t entering as gamma = t / ||G||_*, so the two forms give
      // bit-identical iterates for matching rates.
      const double gamma =
          hp.schedule == ScheduleType::kRadius ? rate / dual : rate;
      out.stepsize[i] = gamma;
      out.radius[i] = gamma * dual;
      if (gamma != 0.0) s.x[i].Axpy(gamma * dual, lmo.direction);
    }
    Matrix shift = s.x[i] - s.w[i];
    CompressedMessage msg = Compress(hp.server_compressor, shift, rng, hp.bits);
    s.w[i] += Decompress(msg);
    out.broadcast.push_back(std::move(msg));
    if (inputs) inputs->push_back(std::move(shift));
  }
  return out;
}

std::vector<CompressedMessage> WorkerRound(
    WorkerState& w, const std::vector<CompressedMessage>& broadcast,
    const Objective& obj, const HyperParams& hp, Rng& rng,
    LayeredTensor* inputs) {
  const std::size_t p = w.w.size();
  if (inputs) inputs->clear();
  std::vector<CompressedMessage> up;
  up.reserve(p);
  auto send = [&](Matrix arg) {
    up.push_back(Compress(hp.worker_compressor, arg, rng, hp.bits));
    if (inputs) inputs->push_back(std::move(arg));
    return Decompress(up.back());
  };
  if (broadcast.size() != p) {
    throw ShapeError("worker round: one broadcast message per layer required");
  }
  for (std::size_t i = 0; i < p; ++i) w.w[i] += Decompress(broadcast[i]);
  switch (hp.variant) {
    case Variant::kDeterministic: {
      const LayeredTensor grad = obj.WorkerGradient(w.id, w.w);
      for (std::size_t i = 0; i < p; ++i) {
        w.g[i] += send(grad[i] - w.g[i]);
      }
      break;
    }
    case Variant::kStochastic: {
      const LayeredTensor grad = obj.WorkerStochasticGradient(w.id, w.w, rng);
      for (std::size_t i = 0; i < p; ++i) {
        const double beta = hp.Beta(i);
        if (beta == 1.0) {
          w.m[i] = grad[i];
        } else {
          w.m[i] *= 1.0 - beta;
          w.m[i].Axpy(beta, grad[i]);
        }
        w.g[i] += send(w.m[i] - w.g[i]);
      }
      break;
    }
    case Variant::kNoErrorFeedback: {
      const LayeredTensor grad = obj.WorkerGradient(w.id, w.w);
      for (std::size_t i = 0; i < p; ++i) {
        w.g[i] = send(grad[i]);
      }
      break;
    }
  }
  return up;
}

void Aggregate(ServerState& s,
               const std::vector<std::vector<CompressedMessage>>& uplinks,
               std::size_t num_workers, Variant variant) {
  if (uplinks.size() != num_workers) {
    throw MissingWorkerError("aggregate: expected " +
                             std::to_string(num_workers) + " uplinks, got " +
                             std::to_string(uplinks.size()));
  }
  const std::size_t p = s.g.size();
  for (std::size_t j = 0; j < num_workers; ++j) {
    if (uplinks[j].size() != p) {
      throw MissingWorkerError("aggregate: worker " + std::to_string(j) +
                               " sent " + std::to_string(uplinks[j].size()) +
                               " layers");
    }
  }
  const double inv = 1.0 / double(num_workers);
  for (std::size_t i = 0; i < p; ++i) {
    Matrix sum(s.g[i].shape());
    for (std::size_t j = 0; j < num_workers; ++j) {
      sum += Decompress(uplinks[j][i]);
    }
    if (variant == Variant::kNoErrorFeedback) {
      s.g[i] = sum * inv;
    } else {
      s.g[i].Axpy(inv, sum);
    }
  }
  ++s.round;
}

RoundTrace Step(Cluster& c, const Objective& obj, const HyperParams& hp,
                std::uint64_t master_seed) {
  const std::size_t k = c.server.round;
  RoundTrace t;
  Rng server_rng(ServerStreamSeed(master_seed, k));
  t.server = ServerRound(c.server, hp, server_rng);
  for (WorkerState& w : c.workers) {
    Rng rng(WorkerStreamSeed(master_seed, w.id, k));
    t.uplinks.push_back(WorkerRound(w, t.server.broadcast, obj, hp, rng));
  }
  Aggregate(c.server, t.uplinks, c.workers.size(), hp.variant);
  return t;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kClusterMagic[8] = {'E', 'F', '2', '1', 'C', 'L', 'U', '1'};

void PutU64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(std::uint8_t(v >> (8 * b)));
}

void PutF64(std::vector<std::uint8_t>& out, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  PutU64(out, v);
}

void PutTensor(std::vector<std::uint8_t>& out, const LayeredTensor& t) {
  for (const Matrix& m : t) {
    for (double d : m.values()) PutF64(out, d);
  }
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
  std::uint64_t U64() {
    Need(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= std::uint64_t(b_[pos_ + k]) << (8 * k);
    pos_ += 8;
    return v;
  }
  double F64() {
    const std::uint64_t v = U64();
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
  LayeredTensor Tensor(const std::vector<Shape>& shapes) {
    LayeredTensor t;
    for (const Shape& s : shapes) {
      Need(8 * s.size());
      Matrix m(s);
      for (std::size_t k = 0; k < s.size(); ++k) m[k] = F64();
      t.push_back(std::move(m));
    }
    return t;
  }
  void Need(std::size_t n) const {
    if (b_.size() - pos_ < n) {
      throw MalformedPayloadError("cluster snapshot: truncated");
    }
  }
  bool AtEnd() const { return pos_ == b_.size(); }
  std::size_t pos() const { return pos_; }
  void Skip(std::size_t n) {
    Need(n);
    pos_ += n;
  }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> SerializeCluster(const Cluster& c) {
  std::vector<std::uint8_t> out(kClusterMagic, kClusterMagic + 8);
  PutU64(out, c.server.round);
  PutU64(out, c.server.x.size());
  for (const Matrix& m : c.server.x) {
    PutU64(out, m.rows());
    PutU64(out, m.cols());
  }
  PutTensor(out, c.server.x);
  PutTensor(out, c.server.w);
  PutTensor(out, c.server.g);
  PutU64(out, c.workers.size());
  for (const WorkerState& w : c.workers) {
    PutU64(out, w.id);
    PutTensor(out, w.w);
    PutTensor(out, w.g);
    PutTensor(out, w.m);
  }
  return out;
}

Cluster DeserializeCluster(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kClusterMagic, 8) != 0) {
    throw MalformedPayloadError("cluster snapshot: bad magic");
  }
  Reader r(bytes);
  r.Skip(8);
  Cluster c;
  c.server.round = r.U64();
  const std::uint64_t p = r.U64();
  if (p == 0 || p > (bytes.size() / 16)) {
    throw MalformedPayloadError("cluster snapshot: bad layer count");
  }
  std::vector<Shape> shapes;
  for (std::uint64_t i = 0; i < p; ++i) {
    const std::uint64_t rows = r.U64();
    const std::uint64_t cols = r.U64();
    if (rows == 0 || cols == 0 || rows > bytes.size() || cols > bytes.size() ||
        rows * cols > bytes.size()) {
      throw MalformedPayloadError("cluster snapshot: bad shape");
    }
    shapes.push_back({rows, cols});
  }
  c.server.x = r.Tensor(shapes);
  c.server.w = r.Tensor(shapes);
  c.server.g = r.Tensor(shapes);
  const std::uint64_t n = r.U64();
  if (n > bytes.size()) {
    throw MalformedPayloadError("cluster snapshot: bad worker count");
  }
  for (std::uint64_t j = 0; j < n; ++j) {
    WorkerState w;
    w.id = r.U64();
    w.w = r.Tensor(shapes);
    w.g = r.Tensor(shapes);
    w.m = r.Tensor(shapes);
    c.workers.push_back(std::move(w));
  }
  if (!r.AtEnd()) throw MalformedPayloadError("cluster snapshot: trailing bytes");
  return c;
}

// ---------------------------------------------------------------------------

std::vector<NormEquivalence> EquivalencesOf(const ModelSpec& spec) {
  std::vector<NormEquivalence> out;
  for (std::size_t i = 0; i < spec.num_layers(); ++i) {
    out.push_back(NormEquivalenceOf(spec.norms[i], spec.shapes[i]));
  }
  return out;
}

namespace {

void CheckAlpha(const std::optional<double>& a, const char* name) {
  if (a && !(*a > 0.0 && *a <= 1.0)) {
    throw ConfigError(std::string(name) + " must lie in (0, 1]");
  }
}

double Finite(double v, const char* what, std::size_t layer) {
  if (!std::isfinite(v) || !(v > 0.0)) {
    throw ConfigError(std::string(what) + " is not positive and finite on "
                      "layer " + std::to_string(layer) +
                      " (are the smoothness constants all zero?)");
  }
  return v;
}

}  // namespace

TheoryResult TheoryStepsize(Theorem theorem, const TheoryInputs& in) {
  CheckAlpha(in.alpha_p, "alpha_P");
  CheckAlpha(in.alpha_d, "alpha_D");
  std::vector<std::string> missing;
  auto need = [&](bool present, const char* symbol) {
    if (!present) missing.push_back(symbol);
  };
  const bool stochastic = theorem == Theorem::kT3 || theorem == Theorem::kT4;
  const bool generalized = theorem == Theorem::kT2 || theorem == Theorem::kT4;
  need(in.profile.has_value(), "smoothness profile (L0, L1)");
  if (theorem == Theorem::kT1 || theorem == Theorem::kT3) {
    need(in.alpha_p.has_value(), "alpha_P");
  }
  if (theorem != Theorem::kT2) need(in.alpha_d.has_value(), "alpha_D");
  if (generalized) need(in.rounds >= 1, "K");
  if (stochastic) need(!in.equivalence.empty(), "rho (norm equivalence)");
  if (theorem == Theorem::kT3 && in.beta.empty()) {
    need(in.delta0.has_value(), "delta0 (for beta)");
    need(!in.sigma.empty(), "sigma (for beta)");
    need(in.rounds >= 1, "K (for beta)");
  }
  if (!missing.empty()) {
    std::string msg = "theory stepsize " + ToString(theorem) + ": missing ";
    for (std::size_t k = 0; k < missing.size(); ++k) {
      msg += (k ? ", " : "") + missing[k];
    }
    throw MissingConstantError(msg);
  }
  if (generalized && in.alpha_p && *in.alpha_p != 1.0) {
    throw ConfigError("theory stepsize " + ToString(theorem) +
                      ": requires the identity server compressor (alpha_P = "
                      "1)");
  }
  const SmoothnessProfile& prof = *in.profile;
  prof.Validate();
  const std::size_t p = prof.num_layers();
  if (stochastic && in.equivalence.size() != p) {
    throw ConfigError("theory stepsize: one norm equivalence per layer");
  }

  TheoryResult res;
  const double k1 = double(in.rounds) + 1.0;
  switch (theorem) {
    case Theorem::kT1: {
      const double ap = *in.alpha_p, ad = *in.alpha_d;
      res.schedule = ScheduleType::kStepsize;
      res.variant = Variant::kDeterministic;
      res.init = InitPolicy::kExactGradient;
      res.beta.assign(p, 1.0);
      for (std::size_t i = 0; i < p; ++i) {
        const double denom = 2.0 * prof.l0[i] +
                             4.0 / ad * std::sqrt(12.0 + 66.0 / (ap * ap)) *
                                 prof.LTilde(i);
        res.rate.push_back(Finite(1.0 / denom, "T1 stepsize", i));
      }
      break;
    }
    case Theorem::kT2: {
      res.schedule = ScheduleType::kRadius;
      res.variant = Variant::kDeterministic;
      res.init = InitPolicy::kExactGradient;
      res.beta.assign(p, 1.0);
      for (std::size_t i = 0; i < p; ++i) {
        const double eta = in.eta.empty() ? 1.0 : PerLayer(in.eta, i, "eta");
        if (!(eta > 0.0)) throw ConfigError("eta must be > 0");
        res.eta.push_back(eta);
        res.rate.push_back(eta / std::sqrt(k1));
      }
      break;
    }
    case Theorem::kT3: {
      const double ap = *in.alpha_p, ad = *in.alpha_d;
      res.schedule = ScheduleType::kStepsize;
      res.variant = Variant::kStochastic;
      res.init = InitPolicy::kStochasticGradient;
      for (std::size_t i = 0; i < p; ++i) {
        const NormEquivalence& eq = in.equivalence[i];
        const double l = prof.l0[i];
        const double lt = prof.LTilde(i);
        double beta;
        if (!in.beta.empty()) {
          beta = PerLayer(in.beta, i, "beta");
        } else {
          const double s = PerLayer(in.sigma, i, "sigma");
          const double base = *in.delta0 * l /
                              (eq.rho_lower * eq.rho_lower * s * s *
                               double(in.rounds));
          beta = 1.0;
          if (s > 0.0) {
            beta = std::min({1.0, std::sqrt(base * double(in.num_workers)),
                             std::cbrt(base * ad),
                             std::pow(base * ad * ad, 0.25)});
          }
        }
        if (!(beta > 0.0 && beta <= 1.0)) {
          throw ConfigError("T3 momentum must lie in (0, 1]");
        }
        const double ratio =
            (eq.rho_upper * eq.rho_upper) / (eq.rho_lower * eq.rho_lower);
        const double zeta =
            ratio * (12.0 / (beta * beta) * l * l +
                     24.0 * (beta + 2.0) / (ap * ap) * l * l +
                     36.0 * (beta * beta + 4.0) / (ad * ad) * lt * lt +
                     144.0 * beta * beta * (2.0 * beta + 5.0) /
                         (ap * ap * ad * ad) * lt * lt);
        res.beta.push_back(beta);
        res.zeta.push_back(zeta);
        res.rate.push_back(Finite(1.0 / (2.0 * l + 2.0 * std::sqrt(zeta)),
                                  "T3 stepsize", i));
      }
      break;
    }
    case Theorem::kT4: {
      const double ad = *in.alpha_d;
      res.schedule = ScheduleType::kRadius;
      res.variant = Variant::kStochastic;
      res.init = InitPolicy::kCompressedStochastic;
      const double beta = 1.0 / std::sqrt(k1);
      const double inf = std::numeric_limits<double>::infinity();
      const double root = std::sqrt(1.0 - ad);
      for (std::size_t i = 0; i < p; ++i) {
        const NormEquivalence& eq = in.equivalence[i];
        const double l1 = prof.l1[i];
        const double l1max = prof.L1Max(i);
        const double c1 = l1 > 0.0 ? std::sqrt(k1) / (6.0 * l1 * l1) : inf;
        const double c2 =
            (root > 0.0 && l1max > 0.0)
                ? (1.0 - root) * eq.rho_lower /
                      (24.0 * std::sqrt(k1) * root * eq.rho_upper * l1max *
                       l1max)
                : inf;
        const double c3 =
            l1max > 0.0 ? beta * eq.rho_lower * std::sqrt(k1) /
                              (24.0 * eq.rho_upper * l1max * l1max)
                        : inf;
        const double cap = std::min({c1, c2, c3, 1.0});
        double eta = std::sqrt(cap);
        if (!in.eta.empty()) {
          const double want = PerLayer(in.eta, i, "eta");
          if (!(want > 0.0)) throw ConfigError("eta must be > 0");
          eta = std::min(eta, want);
        }
        res.beta.push_back(beta);
        res.eta.push_back(eta);
        res.rate.push_back(eta / std::pow(k1, 0.75));
      }
      break;
    }
  }
  return res;
}

std::vector<std::string> CompressorFamilyWarnings(Theorem theorem,
                                                  const CompressorKind& worker,
                                                  const ModelSpec& spec) {
  std::vector<std::string> warnings;
  const bool euclidean = theorem == Theorem::kT3 || theorem == Theorem::kT4;
  for (std::size_t i = 0; i < spec.num_layers(); ++i) {
    const NormKind target =
        euclidean ? NormKind::Frobenius() : DualOf(spec.norms[i]);
    try {
      AnalyticAlpha(worker, Matrix(spec.shapes[i], 1.0), target);
    } catch (const NoFormulaError&) {
      warnings.push_back("layer " + std::to_string(i) + ": " +
                         ToString(worker) +
                         " has no known contraction in the " +
                         ToString(target) + " norm required by " +
                         ToString(theorem) + "; alpha_D must be estimated");
    }
  }
  return warnings;
}

double Lyapunov(const LyapunovParams& params, const Objective& obj,
                const ServerState& server,
                const std::vector<WorkerState>& workers) {
  if (!obj.f_star()) {
    throw UnknownFStarError("Lyapunov function needs f*, which is unknown");
  }
  const std::size_t p = obj.spec().num_layers();
  const std::size_t n = workers.size();
  if (n != obj.num_workers()) {
    throw MissingWorkerError("Lyapunov: one state per worker required");
  }
  const double ad = params.alpha_d, ap = params.alpha_p;
  double psi = obj.Value(server.x) - *obj.f_star();
  std::vector<LayeredTensor> grads;
  for (std::size_t j = 0; j < n; ++j) {
    grads.push_back(obj.WorkerGradient(workers[j].id, server.x));
  }
  for (std::size_t i = 0; i < p; ++i) {
    const NormKind& kind = obj.spec().norms[i];
    const NormKind dual = DualOf(kind);
    const double rate = PerLayer(params.rate, i, "lyapunov rate");
    double mismatch = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = Norm(grads[j][i] - workers[j].g[i], dual);
      mismatch += params.kind == LyapunovKind::kT1 ? e * e : e;
    }
    mismatch /= double(n);
    if (params.kind == LyapunovKind::kT1) {
      const double lt = PerLayer(params.l_tilde, i, "lyapunov L~");
      const double shift = Norm(server.x[i] - server.w[i], kind);
      psi += 6.0 * rate / ad * mismatch +
             66.0 * rate / (ad * ad) * (2.0 / ap - 1.0) * lt * lt * shift *
                 shift;
    } else {
      psi += 2.0 * rate / (1.0 - std::sqrt(1.0 - ad)) * mismatch;
    }
  }
  return psi;
}

}  // namespace ef21
