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

#include "ef21muon/verify.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ef21muon/compressors.h"
#include "ef21muon/error.h"
#include "ef21muon/lmo.h"
#include "ef21muon/sampling.h"
#include "json.hpp"

namespace ef21 {

namespace {

using json = nlohmann::json;

json ReportJson(const CheckReport& r) {
  json j;
  j["name"] = r.name;
  j["passed"] = r.passed;
  j["worst_residual"] = r.worst_residual;
  j["samples"] = r.samples;
  j["tolerance"] = r.tolerance;
  j["detail"] = r.detail;
  return j;
}

std::string Fmt(double v) {
  std::ostringstream out;
  out.precision(6);
  out << v;
  return out.str();
}

// A unit-Frobenius direction supported on one layer.
LayeredTensor LayerDirection(const LayeredTensor& like, std::size_t layer,
                             Rng& rng) {
  LayeredTensor d = ZerosLike(like);
  Matrix m = rng.NormalMatrix(like[layer].rows(), like[layer].cols());
  const double n = FrobeniusNorm(m);
  if (n > 0.0) m *= 1.0 / n;
  d[layer] = std::move(m);
  return d;
}

}  // namespace

void CheckReport::Finish() { passed = worst_residual <= tolerance; }

std::string ToJson(const CheckReport& report) {
  return ReportJson(report).dump(2);
}

std::string ToJson(const std::vector<CheckReport>& reports) {
  json j;
  j["checks"] = json::array();
  bool all = true;
  for (const CheckReport& r : reports) {
    j["checks"].push_back(ReportJson(r));
    all = all && r.passed;
  }
  j["passed"] = all;
  return j.dump(2);
}

CheckReport FdGradientCheck(const Objective& obj, const LayeredTensor& x,
                            double eps, Rng& rng, std::size_t directions) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw ConfigError("finite-difference eps must lie in [1e-7, 1e-3], got " +
                      Fmt(eps));
  }
  CheckReport r;
  r.name = "fd_gradient";
  r.tolerance = 1e-5;
  std::string where;

  // Function index n stands for the mean f, 0..n-1 for the workers.
  const std::size_t n = obj.num_workers();
  for (std::size_t fn = 0; fn <= n; ++fn) {
    auto value = [&](const LayeredTensor& p) {
      return fn == n ? obj.Value(p) : obj.WorkerValue(fn, p);
    };
    const LayeredTensor grad =
        fn == n ? obj.Gradient(x) : obj.WorkerGradient(fn, x);
    const double f0 = value(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      // Below this gradient size the error is measured in absolute terms;
      // rounding in f(x +- eps D) alone reaches about 1e-16 |f| / eps.
      const double scale =
          std::max(FrobeniusNorm(grad[i]), 1e-4 * (1.0 + std::abs(f0)));
      for (std::size_t s = 0; s < directions; ++s) {
        const LayeredTensor d = LayerDirection(x, i, rng);
        const double fd =
            (value(Sum(x, Scaled(d, eps))) - value(Difference(x, Scaled(d, eps)))) /
            (2.0 * eps);
        const double err = std::abs(fd - Dot(grad[i], d[i])) / scale;
        ++r.samples;
        if (err > r.worst_residual) {
          r.worst_residual = err;
          where = (fn == n ? std::string("f") : "f_" + std::to_string(fn)) +
                  ", layer " + std::to_string(i);
        }
      }
    }
  }
  r.detail = "eps " + Fmt(eps) + ", worst at " + (where.empty() ? "-" : where);
  r.Finish();
  return r;
}

CheckReport LmoOptimalityCheck(const NormKind& kind, Shape shape,
                               std::size_t trials,
                               std::size_t samples_per_trial, Rng& rng) {
  CheckReport r;
  r.name = "lmo_optimality:" + ToString(kind);
  r.tolerance = 1e-10;
  const NormKind dual = DualOf(kind);
  double worst_identity = 0.0, worst_feasible = 0.0, worst_gap = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const Matrix g = SampleMixed(shape, rng);
    const LmoResult res = LmoDirection(g, kind);
    // The dual norm is computed independently of the LMO.
    const double dn = Norm(g, dual);
    const double denom = std::max(dn, std::numeric_limits<double>::min());
    const double inner = Dot(g, res.direction);
    worst_identity = std::max(
        {worst_identity, std::abs(inner + dn) / denom,
         std::abs(res.dual_norm_value - dn) / denom});
    worst_feasible =
        std::max(worst_feasible, Norm(res.direction, kind) - 1.0);
    for (std::size_t s = 0; s < samples_per_trial; ++s) {
      const Matrix z = SampleUnitBall(kind, shape, rng);
      worst_gap = std::max(worst_gap, (inner - Dot(g, z)) / denom);
    }
    r.samples += 1 + samples_per_trial;
  }
  r.worst_residual = std::max({worst_identity, worst_feasible, worst_gap});
  r.detail = "identity " + Fmt(worst_identity) + ", feasibility " +
             Fmt(worst_feasible) + ", sampled gap " + Fmt(worst_gap);
  r.Finish();
  return r;
}

CheckReport CornerEnumerationCheck(const NormKind& kind, std::size_t trials,
                                   Rng& rng) {
  if (kind.type != NormType::kEntrywiseLinf &&
      kind.type != NormType::kEntrywiseL1) {
    throw UnsupportedNormError("corner enumeration covers linf and l1 only, got " +
                               ToString(kind));
  }
  // All 3^4 patterns inside the ball. The ball's vertices are among them,
  // so the smallest inner product over the list is the exact minimum.
  std::vector<Matrix> corners;
  for (int code = 0; code < 81; ++code) {
    Matrix z(2, 2);
    int c = code;
    for (std::size_t k = 0; k < 4; ++k) {
      z[k] = static_cast<double>(c % 3) - 1.0;
      c /= 3;
    }
    if (Norm(z, kind) <= 1.0) corners.push_back(std::move(z));
  }
  CheckReport r;
  r.name = "lmo_corners:" + ToString(kind);
  r.tolerance = 1e-10;
  for (std::size_t t = 0; t < trials; ++t) {
    // Small integers give ties and zeros; the rest are continuous.
    Matrix g = t % 2 == 0
                   ? rng.NormalMatrix(2, 2)
                   : Matrix(2, 2, {static_cast<double>(rng.Below(5)) - 2.0,
                                   static_cast<double>(rng.Below(5)) - 2.0,
                                   static_cast<double>(rng.Below(5)) - 2.0,
                                   static_cast<double>(rng.Below(5)) - 2.0});
    const LmoResult res = LmoDirection(g, kind);
    double best = std::numeric_limits<double>::infinity();
    for (const Matrix& z : corners) best = std::min(best, Dot(g, z));
    const double scale = std::max(1.0, std::abs(best));
    const double inner = Dot(g, res.direction);
    r.worst_residual =
        std::max({r.worst_residual, std::abs(inner - best) / scale,
                  std::abs(res.dual_norm_value + best) / scale,
                  Norm(res.direction, kind) - 1.0});
    ++r.samples;
  }
  r.detail = std::to_string(corners.size()) + " feasible patterns";
  r.Finish();
  return r;
}

DescentMonitor::DescentMonitor(SmoothnessProfile profile,
                               ScheduleType schedule, double margin)
    : profile_(std::move(profile)), margin_(margin), schedule_(schedule) {}

void DescentMonitor::Observe(const RoundEvent& event) {
  const Objective& obj = *event.objective;
  const LayeredTensor& x = *event.x_before;
  const LayeredTensor& g = *event.g_before;
  const ServerRoundOutput& out = *event.server;
  const std::vector<NormKind>& norms = obj.spec().norms;

  const double f = obj.Value(x);
  const double f_next = obj.Value(event.cluster->server.x);
  const LayeredTensor grad = obj.Gradient(x);

  double bound = f;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const NormKind dual = DualOf(norms[i]);
    const double gn = Norm(grad[i], dual);
    const double err = Norm(grad[i] - g[i], dual);
    const double li = profile_.l0[i] + profile_.l1[i] * gn;
    if (schedule_ == ScheduleType::kRadius) {
      const double t = out.radius[i];
      bound += 2.0 * t * err - t * gn + 0.5 * li * t * t;
    } else {
      const double gamma = out.stepsize[i];
      const double gs = Norm(g[i], dual);
      // (1/(4 gamma) - L/2) gamma^2 |G|^2, written without the division.
      bound += 1.5 * gamma * err * err - 0.25 * gamma * gn * gn -
               (0.25 * gamma - 0.5 * li * gamma * gamma) * gs * gs;
    }
  }
  const double excess = f_next - bound - margin_ * (1.0 + std::abs(f));
  ++rounds_;
  if (excess > 1e-8) ++violations_;
  worst_ = std::max(worst_, excess);
}

CheckReport DescentMonitor::Report() const {
  CheckReport r;
  r.name = schedule_ == ScheduleType::kRadius ? "descent_radius"
                                               : "descent_stepsize";
  r.worst_residual = worst_;
  r.samples = rounds_;
  r.tolerance = 1e-8;
  r.detail = std::to_string(violations_) + " violations in " +
             std::to_string(rounds_) + " rounds, margin " + Fmt(margin_);
  r.Finish();
  return r;
}

CheckReport MonotoneCheck(const std::string& name,
                          const std::vector<double>& series, double tol) {
  CheckReport r;
  r.name = name;
  r.tolerance = tol;
  std::size_t at = 0;
  for (std::size_t k = 0; k + 1 < series.size(); ++k) {
    const double rise = (series[k + 1] - series[k]) / (1.0 + std::abs(series[k]));
    if (rise > r.worst_residual) {
      r.worst_residual = rise;
      at = k;
    }
    ++r.samples;
  }
  r.detail = r.worst_residual > 0.0 ? "largest rise after index " +
                                          std::to_string(at)
                                    : "non-increasing";
  r.Finish();
  return r;
}

CheckReport TelescopedBoundCheck(const RunResult& result, double gamma) {
  if (!result.psi0) {
    throw UnknownFStarError("telescoped bound needs the initial Lyapunov value");
  }
  if (!(gamma > 0.0)) throw ConfigError("telescoped bound needs gamma > 0");
  CheckReport r;
  r.name = "telescoped_bound";
  r.tolerance = 1e-12;
  r.worst_residual = -1.0;
  for (const RoundRecord& rec : result.records) {
    if (rec.round == 0) continue;
    const double rhs =
        4.0 * *result.psi0 / (static_cast<double>(rec.round) * gamma);
    r.worst_residual = std::max(r.worst_residual, rec.avg_sq_grad / rhs - 1.0);
    ++r.samples;
  }
  r.detail = "gamma " + Fmt(gamma) + ", psi0 " + Fmt(*result.psi0);
  r.Finish();
  return r;
}

CheckReport ContractionCheck(const CompressorKind& kind, const NormKind& norm,
                             Shape shape, std::size_t matrices,
                             std::size_t draws, double se_factor, Rng& rng,
                             std::optional<double> claimed) {
  CheckReport r;
  r.name = "contraction:" + ToString(kind) + "@" + ToString(norm);
  r.tolerance = 1e-12;
  r.worst_residual = -1.0;
  double worst_alpha = 1.0;
  for (std::size_t s = 0; s < matrices; ++s) {
    // The first input has entries of equal magnitude, the extreme case for
    // sparsifiers.
    Matrix x = SampleMixed(shape, rng);
    if (s == 0) {
      for (double& v : x.values()) v = rng.Bernoulli(0.5) ? 1.0 : -1.0;
    }
    const double alpha =
        claimed ? *claimed : AnalyticAlpha(kind, x, norm).alpha;
    worst_alpha = std::min(worst_alpha, alpha);
    const double nx = Norm(x, norm);
    if (nx == 0.0) continue;
    const std::size_t m = IsRandomized(kind) ? draws : 1;
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t d = 0; d < m; ++d) {
      const Matrix c = Decompress(Compress(kind, x, rng));
      const double e = Norm(c - x, norm) / nx;
      sum += e * e;
      sum_sq += e * e * e * e;
    }
    const double mean = sum / static_cast<double>(m);
    double se = 0.0;
    if (m > 1) {
      const double var = std::max(
          0.0, (sum_sq - sum * mean) / static_cast<double>(m - 1));
      se = std::sqrt(var / static_cast<double>(m));
    }
    r.worst_residual =
        std::max(r.worst_residual, mean - (1.0 - alpha) - se_factor * se);
    r.samples += m;
  }
  r.detail = std::string(claimed ? "claimed" : "analytic") + " alpha " +
             Fmt(worst_alpha);
  r.Finish();
  return r;
}

VerifySuite ParseVerifySuite(const std::string& text) {
  if (text == "identities") return VerifySuite::kIdentities;
  if (text == "compressors") return VerifySuite::kCompressors;
  if (text == "convergence") return VerifySuite::kConvergence;
  if (text == "all") return VerifySuite::kAll;
  throw ConfigError("unknown verify suite '" + text +
                    "' (identities, compressors, convergence, all)");
}

namespace {

// Adds one to the first gradient entry of every worker.
class CorruptedGradient : public Objective {
 public:
  explicit CorruptedGradient(ObjectivePtr base)
      : Objective(base->spec(), base->num_workers(), base->noise_sigma()),
        base_(std::move(base)) {}

  double WorkerValue(std::size_t j, const LayeredTensor& x) const override {
    return base_->WorkerValue(j, x);
  }
  LayeredTensor WorkerGradient(std::size_t j,
                               const LayeredTensor& x) const override {
    LayeredTensor g = base_->WorkerGradient(j, x);
    g[0][0] += 1.0;
    return g;
  }

 private:
  ObjectivePtr base_;
};

RunConfig QuadraticRun(std::vector<Shape> shapes, std::vector<NormKind> norms,
                       std::size_t workers, double conditioning,
                       std::uint64_t seed) {
  RunConfig c;
  c.model.shapes = std::move(shapes);
  c.model.norms = std::move(norms);
  c.objective.num_workers = workers;
  c.objective.conditioning = conditioning;
  c.objective.heterogeneity = 0.5;
  c.objective.seed = seed;
  c.seed = seed;
  c.threads = 1;
  c.track_alpha = false;
  return c;
}

void Identities(std::uint64_t seed, bool fault,
                std::vector<CheckReport>& out) {
  Rng rng(DeriveSeed(seed, 0x1d, 0, 0));
  {
    RunConfig c = QuadraticRun({{4, 3}, {3, 3}},
                               {NormKind::Spectral(), NormKind::Frobenius()},
                               3, 10.0, seed);
    RunSetup s = Prepare(c);
    ObjectivePtr obj = s.objective;
    if (fault) obj = std::make_shared<CorruptedGradient>(obj);
    CheckReport r = FdGradientCheck(*obj, s.x0, 1e-5, rng);
    r.name += ":quadratic";
    out.push_back(r);
  }
  {
    RunConfig c;
    c.model.shapes = {{5, 3}, {2, 5}};
    c.model.norms = {NormKind::Spectral(), NormKind::Spectral()};
    c.objective.type = ObjectiveType::kMlp;
    c.objective.num_workers = 2;
    c.objective.dataset_size = 32;
    c.objective.seed = seed;
    RunSetup s = Prepare(c);
    CheckReport r = FdGradientCheck(*s.objective, s.x0, 1e-5, rng);
    r.name += ":mlp";
    out.push_back(r);
  }
  for (const NormKind& k :
       {NormKind::Spectral(), NormKind::Nuclear(), NormKind::Frobenius(),
        NormKind::L1(), NormKind::Linf(), NormKind::MaxRowSum(),
        NormKind::RowMaxSum()}) {
    out.push_back(LmoOptimalityCheck(k, {5, 4}, 200, 20, rng));
  }
  out.push_back(CornerEnumerationCheck(NormKind::Linf(), 200, rng));
  out.push_back(CornerEnumerationCheck(NormKind::L1(), 200, rng));
}

void Compressors(std::uint64_t seed, bool fault,
                 std::vector<CheckReport>& out) {
  Rng rng(DeriveSeed(seed, 0xc0, 0, 0));
  const Shape shape{8, 6};
  struct Case {
    CompressorKind kind;
    NormKind norm;
  };
  const std::vector<Case> cases = {
      {CompressorKind::TopK(0.25), NormKind::Frobenius()},
      {CompressorKind::RankK(0.5), NormKind::Frobenius()},
      {CompressorKind::TopKSvd(2), NormKind::Spectral()},
      {CompressorKind::RandomDropout(0.5), NormKind::Frobenius()},
      {CompressorKind::Damping(0.5), NormKind::Nuclear()},
      {CompressorKind::ColumnTopK(2.0, 2), NormKind::ColumnLpq(2.0, 1.0)},
  };
  for (const Case& c : cases) {
    out.push_back(ContractionCheck(c.kind, c.norm, shape, 20, 400, 4.0, rng));
  }
  if (fault) {
    // An overclaimed alpha for top-k: half the error it really allows.
    CheckReport r = ContractionCheck(CompressorKind::TopK(0.25),
                                     NormKind::Frobenius(), shape, 20, 1, 4.0,
                                     rng, 0.625);
    r.name += ":overclaim";
    out.push_back(r);
  }
}

SmoothnessProfile Halved(SmoothnessProfile p) {
  for (double& v : p.l0) v *= 0.5;
  for (auto& row : p.worker_l0) {
    for (double& v : row) v *= 0.5;
  }
  return p;
}

void Convergence(std::uint64_t seed, bool fault,
                 std::vector<CheckReport>& out) {
  struct MonitorRun {
    RunConfig config;
    std::string label;
  };
  std::vector<MonitorRun> runs;
  {
    RunConfig c = QuadraticRun({{4, 3}, {3, 3}},
                               {NormKind::Spectral(), NormKind::L1()}, 3, 10.0,
                               seed);
    c.hp.schedule = ScheduleType::kRadius;
    c.hp.rate = {0.05};
    c.hp.worker_compressor = CompressorKind::TopK(0.25);
    c.hp.server_compressor = CompressorKind::Damping(0.5);
    c.rounds = 1000;
    runs.push_back({c, "ef21"});
  }
  {
    RunConfig c = QuadraticRun({{4, 3}}, {NormKind::Frobenius()}, 3, 10.0, seed);
    c.hp.schedule = ScheduleType::kStepsize;
    c.hp.rate = {0.02};
    c.hp.worker_compressor = CompressorKind::RankK(0.5);
    c.rounds = 1000;
    runs.push_back({c, "ef21"});
  }
  {
    // Flat curvature and exact gradients: the quadratic term of every step
    // meets its bound with equality.
    RunConfig c = QuadraticRun({{4, 3}}, {NormKind::Frobenius()}, 1, 1.0, seed);
    c.objective.heterogeneity = 0.0;
    c.hp.schedule = ScheduleType::kRadius;
    c.hp.rate = {0.1};
    c.rounds = 200;
    runs.push_back({c, "tight"});
  }
  for (MonitorRun& m : runs) {
    RunSetup s = Prepare(m.config);
    const auto* q = dynamic_cast<const QuadraticEnsemble*>(s.objective.get());
    SmoothnessProfile profile = QuadraticProfile(*q);
    if (fault) profile = Halved(profile);
    DescentMonitor monitor(profile, m.config.hp.schedule);
    Run(m.config, [&](const RoundEvent& e) { monitor.Observe(e); });
    CheckReport r = monitor.Report();
    r.name += ":" + m.label;
    out.push_back(r);
  }

  RunConfig c = QuadraticRun({{4, 3}, {3, 2}},
                             {NormKind::Frobenius(), NormKind::Frobenius()}, 2,
                             5.0, seed);
  c.theorem = Theorem::kT1;
  c.hp.worker_compressor = CompressorKind::TopK(0.25);
  c.hp.server_compressor = CompressorKind::Damping(0.5);
  c.rounds = 500;
  const RunResult res = Run(c);
  std::vector<double> psi;
  for (const RoundRecord& rec : res.records) psi.push_back(*rec.lyapunov);
  out.push_back(MonotoneCheck("lyapunov_t1", psi, 1e-12));
  const std::vector<double>& rate = res.theory->rate;
  out.push_back(
      TelescopedBoundCheck(res, *std::min_element(rate.begin(), rate.end())));
}

}  // namespace

std::vector<CheckReport> RunVerifySuite(VerifySuite suite, std::uint64_t seed,
                                        bool inject_fault) {
  std::vector<CheckReport> out;
  const bool all = suite == VerifySuite::kAll;
  if (all || suite == VerifySuite::kIdentities) {
    Identities(seed, inject_fault, out);
  }
  if (all || suite == VerifySuite::kCompressors) {
    Compressors(seed, inject_fault, out);
  }
  if (all || suite == VerifySuite::kConvergence) {
    Convergence(seed, inject_fault, out);
  }
  return out;
}

}  // namespace ef21
