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

#include "ef21muon/problems.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ef21muon/error.h"
#include "ef21muon/sampling.h"
#include "ef21muon/svd.h"

namespace ef21 {
namespace {

std::vector<double> NormalizeSigma(std::vector<double> sigma,
                                   std::size_t layers) {
  if (sigma.empty()) return std::vector<double>(layers, 0.0);
  if (sigma.size() == 1) sigma.assign(layers, sigma[0]);
  if (sigma.size() != layers) {
    throw ConfigError("noise sigma: expected 1 or " + std::to_string(layers) +
                      " values, got " + std::to_string(sigma.size()));
  }
  for (double s : sigma) {
    if (!(s >= 0.0) || !std::isfinite(s)) {
      throw ConfigError("noise sigma must be finite and >= 0");
    }
  }
  return sigma;
}

// y = A vec(x) reshaped like x.
Matrix ApplyVec(const Matrix& a, const Matrix& x) {
  const std::size_t d = x.size();
  Matrix y(x.shape());
  for (std::size_t k = 0; k < d; ++k) {
    const double* row = a.data() + k * d;
    double s = 0.0;
    for (std::size_t l = 0; l < d; ++l) s += row[l] * x[l];
    y[k] = s;
  }
  return y;
}

double LargestEigenvalue(const Matrix& psd) {
  return SingularValues(psd).front();
}

}  // namespace

void ModelSpec::Validate() const {
  if (shapes.empty()) throw ConfigError("model: at least one layer required");
  if (norms.size() != shapes.size()) {
    throw ConfigError("model: " + std::to_string(shapes.size()) +
                      " shapes but " + std::to_string(norms.size()) +
                      " norms");
  }
  for (const Shape& s : shapes) {
    if (s.rows == 0 || s.cols == 0) {
      throw ConfigError("model: layer dimensions must be positive");
    }
  }
}

Objective::Objective(ModelSpec spec, std::size_t num_workers,
                     std::vector<double> noise_sigma)
    : spec_(std::move(spec)), num_workers_(num_workers) {
  spec_.Validate();
  if (num_workers_ == 0) throw ConfigError("objective: n must be >= 1");
  noise_sigma_ = NormalizeSigma(std::move(noise_sigma), spec_.num_layers());
}

void Objective::CheckWorker(std::size_t j) const {
  if (j >= num_workers_) {
    throw ShapeError("worker index " + std::to_string(j) + " out of range");
  }
}

void Objective::CheckShapes(const LayeredTensor& x) const {
  if (x.size() != spec_.num_layers()) {
    throw ShapeError("objective: wrong number of layers");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].shape() != spec_.shapes[i]) {
      throw ShapeError("objective: layer " + std::to_string(i) +
                       " has the wrong shape");
    }
  }
}

LayeredTensor Objective::WorkerStochasticGradient(std::size_t j,
                                                  const LayeredTensor& x,
                                                  Rng& rng) const {
  LayeredTensor g = WorkerGradient(j, x);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (noise_sigma_[i] == 0.0) continue;
    const double sd = noise_sigma_[i] / std::sqrt(double(g[i].size()));
    for (std::size_t k = 0; k < g[i].size(); ++k) g[i][k] += sd * rng.Normal();
  }
  return g;
}

double Objective::Value(const LayeredTensor& x) const {
  double s = 0.0;
  for (std::size_t j = 0; j < num_workers_; ++j) s += WorkerValue(j, x);
  return s / double(num_workers_);
}

LayeredTensor Objective::Gradient(const LayeredTensor& x) const {
  LayeredTensor g = WorkerGradient(0, x);
  for (std::size_t j = 1; j < num_workers_; ++j) {
    AddInPlace(g, WorkerGradient(j, x));
  }
  for (Matrix& m : g) m *= 1.0 / double(num_workers_);
  return g;
}

LayeredTensor Objective::StochasticGradient(const LayeredTensor& x,
                                            Rng& rng) const {
  LayeredTensor g = WorkerStochasticGradient(0, x, rng);
  for (std::size_t j = 1; j < num_workers_; ++j) {
    AddInPlace(g, WorkerStochasticGradient(j, x, rng));
  }
  for (Matrix& m : g) m *= 1.0 / double(num_workers_);
  return g;
}

std::optional<double> Objective::worker_f_star(std::size_t j) const {
  CheckWorker(j);
  if (worker_f_star_.empty()) return std::nullopt;
  return worker_f_star_[j];
}

// ---------------------------------------------------------------------------

QuadraticEnsemble::QuadraticEnsemble(const ModelSpec& spec,
                                     const QuadraticOptions& options,
                                     Rng& rng)
    : Objective(spec, options.num_workers, options.noise_sigma) {
  if (!(options.heterogeneity >= 0.0) || !std::isfinite(options.heterogeneity))
    throw ConfigError("quadratic: heterogeneity must be >= 0");
  if (!(options.conditioning >= 1.0) || !std::isfinite(options.conditioning))
    throw ConfigError("quadratic: conditioning must be >= 1");
  if (!(options.scale > 0.0) || !std::isfinite(options.scale))
    throw ConfigError("quadratic: scale must be > 0");
  const std::size_t n = num_workers();
  const double log_cond = std::log(options.conditioning);
  a_.resize(spec.num_layers());
  b_.resize(spec.num_layers());
  for (std::size_t i = 0; i < spec.num_layers(); ++i) {
    const Shape shape = spec.shapes[i];
    const std::size_t d = shape.size();
    const Matrix base = rng.NormalMatrix(shape.rows, shape.cols);
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<double> lambda(d);
      if (d == 1) {
        lambda[0] = options.conditioning;
      } else {
        lambda[0] = 1.0;
        lambda[1] = options.conditioning;
        for (std::size_t k = 2; k < d; ++k) {
          lambda[k] = std::exp(log_cond * rng.Uniform());
        }
      }
      const Matrix q = RandomOrthonormal(d, d, rng);
      Matrix a = MatMulT(MatMul(q, Matrix::Diagonal(lambda)), q);
      Matrix sym = a;
      for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
          sym(r, c) = options.scale * 0.5 * (a(r, c) + a(c, r));
        }
      }
      a_[i].push_back(std::move(sym));
      Matrix b = base;
      if (options.heterogeneity > 0.0) {
        b.Axpy(options.heterogeneity,
               rng.NormalMatrix(shape.rows, shape.cols));
      }
      b_[i].push_back(std::move(b));
    }
  }
  Finish();
}

QuadraticEnsemble::QuadraticEnsemble(const ModelSpec& spec,
                                     std::vector<std::vector<Matrix>> a,
                                     std::vector<std::vector<Matrix>> b,
                                     std::vector<double> noise_sigma)
    : Objective(spec, a.empty() ? 0 : a[0].size(), std::move(noise_sigma)),
      a_(std::move(a)),
      b_(std::move(b)) {
  if (a_.size() != spec.num_layers() || b_.size() != spec.num_layers()) {
    throw ShapeError("quadratic: one Hessian/center list per layer required");
  }
  for (std::size_t i = 0; i < a_.size(); ++i) {
    const std::size_t d = spec.shapes[i].size();
    if (a_[i].size() != num_workers() || b_[i].size() != num_workers()) {
      throw ShapeError("quadratic: one Hessian/center per worker required");
    }
    for (std::size_t j = 0; j < num_workers(); ++j) {
      if (a_[i][j].rows() != d || a_[i][j].cols() != d ||
          b_[i][j].shape() != spec.shapes[i]) {
        throw ShapeError("quadratic: data does not match layer " +
                         std::to_string(i));
      }
      RequireFinite(a_[i][j], "quadratic Hessian");
      RequireFinite(b_[i][j], "quadratic center");
    }
  }
  Finish();
}

void QuadraticEnsemble::Finish() {
  const std::size_t n = num_workers();
  const std::size_t p = spec().num_layers();
  lambda_max_.assign(p, std::vector<double>(n, 0.0));
  mean_a_.clear();
  mean_lambda_max_.clear();
  minimizer_.clear();
  bool solvable = true;
  for (std::size_t i = 0; i < p; ++i) {
    const std::size_t d = spec().shapes[i].size();
    Matrix sum_a(d, d);
    Matrix sum_ab(d, 1);
    for (std::size_t j = 0; j < n; ++j) {
      lambda_max_[i][j] = LargestEigenvalue(a_[i][j]);
      sum_a += a_[i][j];
      const Matrix ab = ApplyVec(a_[i][j], b_[i][j]);
      for (std::size_t k = 0; k < d; ++k) sum_ab[k] += ab[k];
    }
    Matrix mean = sum_a * (1.0 / double(n));
    mean_lambda_max_.push_back(LargestEigenvalue(mean));
    mean_a_.push_back(std::move(mean));
    Matrix xs(spec().shapes[i]);
    try {
      const Matrix sol = CholeskySolve(sum_a, sum_ab);
      for (std::size_t k = 0; k < d; ++k) xs[k] = sol[k];
    } catch (const ConvergenceError&) {
      solvable = false;
    }
    minimizer_.push_back(std::move(xs));
  }
  // Each f_j attains 0 at its own centers.
  worker_f_star_.assign(n, 0.0);
  if (solvable) {
    f_star_ = Value(minimizer_);
  } else {
    f_star_ = 0.0;
  }
}

double QuadraticEnsemble::WorkerValue(std::size_t j,
                                      const LayeredTensor& x) const {
  CheckWorker(j);
  CheckShapes(x);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Matrix r = x[i] - b_[i][j];
    s += 0.5 * Dot(r, ApplyVec(a_[i][j], r));
  }
  return s;
}

LayeredTensor QuadraticEnsemble::WorkerGradient(std::size_t j,
                                                const LayeredTensor& x) const {
  CheckWorker(j);
  CheckShapes(x);
  LayeredTensor g;
  g.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    g.push_back(ApplyVec(a_[i][j], x[i] - b_[i][j]));
  }
  return g;
}

double QuadraticEnsemble::EuclideanSmoothness(std::size_t layer,
                                              std::size_t worker) const {
  return lambda_max_.at(layer).at(worker);
}

double QuadraticEnsemble::EuclideanSmoothness(std::size_t layer) const {
  return mean_lambda_max_.at(layer);
}

double QuadraticEnsemble::DualBound(const Matrix& a, double lambda_max,
                                    std::size_t layer) const {
  const NormKind& kind = spec().norms[layer];
  const Shape shape = spec().shapes[layer];
  const NormEquivalence primal = NormEquivalenceOf(kind, shape);
  const NormEquivalence dual = NormEquivalenceOf(DualOf(kind), shape);
  // ||A v||_* <= ||A v||_F / rho_lower(dual) <= lambda ||v||_F / rho_lower
  //           <= lambda rho_upper / rho_lower(dual) ||v||.
  double bound = lambda_max * primal.rho_upper / dual.rho_lower;
  if (kind.type == NormType::kFrobenius) return lambda_max;
  if (kind.type == NormType::kEntrywiseL1) {
    double m = 0.0;
    for (double v : a.values()) m = std::max(m, std::abs(v));
    bound = std::min(bound, m);
  } else if (kind.type == NormType::kEntrywiseLinf) {
    double s = 0.0;
    for (double v : a.values()) s += std::abs(v);
    bound = std::min(bound, s);
  }
  return bound;
}

double QuadraticEnsemble::DualSmoothness(std::size_t layer,
                                         std::size_t worker) const {
  return DualBound(a_.at(layer).at(worker), EuclideanSmoothness(layer, worker),
                   layer);
}

double QuadraticEnsemble::DualSmoothness(std::size_t layer) const {
  return DualBound(mean_a_.at(layer), EuclideanSmoothness(layer), layer);
}

std::shared_ptr<const QuadraticEnsemble> MakeQuadraticEnsemble(
    const ModelSpec& spec, const QuadraticOptions& options, Rng& rng) {
  return std::make_shared<const QuadraticEnsemble>(spec, options, rng);
}

std::shared_ptr<const QuadraticEnsemble> MakeDivergenceInstance() {
  ModelSpec spec{{Shape{3, 1}}, {NormKind::Frobenius()}};
  const double dirs[3][3] = {{-3, 2, 2}, {2, -3, 2}, {2, 2, -3}};
  std::vector<std::vector<Matrix>> a(1), b(1);
  for (const auto& dir : dirs) {
    Matrix h(3, 3);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) h(r, c) = 2.0 * dir[r] * dir[c];
      h(r, r) += 0.5;
    }
    a[0].push_back(std::move(h));
    b[0].push_back(Matrix(3, 1));
  }
  return std::make_shared<const QuadraticEnsemble>(spec, std::move(a),
                                                   std::move(b));
}

LayeredTensor DivergenceStart() { return {Matrix(3, 1, 1.0)}; }

// ---------------------------------------------------------------------------

void WriteDatasetCsv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write dataset: " + path);
  const std::size_t dx = data.inputs.cols();
  const std::size_t dy = data.targets.cols();
  for (std::size_t k = 0; k < dx; ++k) out << (k ? "," : "") << "x" << k;
  for (std::size_t k = 0; k < dy; ++k) out << ",y" << k;
  out << "\n";
  char buf[32];
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t k = 0; k < dx + dy; ++k) {
      const double v = k < dx ? data.inputs(r, k) : data.targets(r, k - dx);
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << (k ? "," : "") << buf;
    }
    out << "\n";
  }
  if (!out) throw ConfigError("failed writing dataset: " + path);
}

Dataset ReadDatasetCsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read dataset: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty dataset: " + path);
  std::size_t dx = 0, dy = 0;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (!cell.empty() && cell[0] == 'x' && dy == 0) {
        ++dx;
      } else if (!cell.empty() && cell[0] == 'y') {
        ++dy;
      } else {
        throw ConfigError("dataset header: unexpected column '" + cell + "'");
      }
    }
  }
  if (dx == 0 || dy == 0) throw ConfigError("dataset header: need x and y");
  std::vector<double> xs, ys;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t k = 0;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0') {
        throw ConfigError("dataset row " + std::to_string(rows + 1) +
                          ": bad number '" + cell + "'");
      }
      (k < dx ? xs : ys).push_back(v);
      ++k;
    }
    if (k != dx + dy) {
      throw ConfigError("dataset row " + std::to_string(rows + 1) +
                        ": expected " + std::to_string(dx + dy) + " columns");
    }
    ++rows;
  }
  if (rows == 0) throw ConfigError("dataset has no rows: " + path);
  return {Matrix(rows, dx, std::move(xs)), Matrix(rows, dy, std::move(ys))};
}

TinyMlp::TinyMlp(const ModelSpec& spec, Dataset data,
                 const MlpOptions& options)
    : Objective(spec, options.num_workers, options.noise_sigma),
      data_(std::move(data)),
      batch_size_(options.batch_size) {
  if (spec.num_layers() < 2) throw ConfigError("mlp: need at least 2 layers");
  for (std::size_t l = 1; l < spec.num_layers(); ++l) {
    if (spec.shapes[l].cols != spec.shapes[l - 1].rows) {
      throw ConfigError("mlp: layer " + std::to_string(l) +
                        " does not chain with the previous layer");
    }
  }
  if (data_.inputs.cols() != spec.shapes.front().cols ||
      data_.targets.cols() != spec.shapes.back().rows ||
      data_.targets.rows() != data_.inputs.rows()) {
    throw ConfigError("mlp: dataset does not match the layer shapes");
  }
  const std::size_t n = num_workers();
  if (data_.size() < n) {
    throw ConfigError("mlp: dataset smaller than the number of workers");
  }
  shard_.resize(n + 1);
  for (std::size_t j = 0; j <= n; ++j) shard_[j] = j * data_.size() / n;
  worker_f_star_.assign(n, 0.0);
  f_star_ = 0.0;
}

double TinyMlp::Loss(const std::vector<std::size_t>& rows,
                     const LayeredTensor& x, LayeredTensor* grad) const {
  const std::size_t depth = x.size();
  if (grad) *grad = ZerosLike(x);
  std::vector<std::vector<double>> act(depth);  // inputs to each layer
  std::vector<double> out, delta, next;
  double loss = 0.0;
  for (std::size_t r : rows) {
    act[0].assign(data_.inputs.data() + r * data_.inputs.cols(),
                  data_.inputs.data() + (r + 1) * data_.inputs.cols());
    for (std::size_t l = 0; l < depth; ++l) {
      const Matrix& w = x[l];
      out.assign(w.rows(), 0.0);
      for (std::size_t a = 0; a < w.rows(); ++a) {
        double s = 0.0;
        for (std::size_t b = 0; b < w.cols(); ++b) s += w(a, b) * act[l][b];
        out[a] = s;
      }
      if (l + 1 < depth) {
        for (double& v : out) v = std::tanh(v);
        act[l + 1] = out;
      }
    }
    delta.resize(out.size());
    for (std::size_t a = 0; a < out.size(); ++a) {
      delta[a] = out[a] - data_.targets(r, a);
      loss += 0.5 * delta[a] * delta[a];
    }
    if (!grad) continue;
    for (std::size_t l = depth; l-- > 0;) {
      const Matrix& w = x[l];
      Matrix& gw = (*grad)[l];
      for (std::size_t a = 0; a < w.rows(); ++a) {
        for (std::size_t b = 0; b < w.cols(); ++b) {
          gw(a, b) += delta[a] * act[l][b];
        }
      }
      if (l == 0) break;
      next.assign(w.cols(), 0.0);
      for (std::size_t a = 0; a < w.rows(); ++a) {
        for (std::size_t b = 0; b < w.cols(); ++b) {
          next[b] += w(a, b) * delta[a];
        }
      }
      for (std::size_t b = 0; b < next.size(); ++b) {
        next[b] *= 1.0 - act[l][b] * act[l][b];
      }
      delta.swap(next);
    }
  }
  const double inv = 1.0 / double(rows.size());
  if (grad) {
    for (Matrix& m : *grad) m *= inv;
  }
  return loss * inv;
}

double TinyMlp::WorkerValue(std::size_t j, const LayeredTensor& x) const {
  CheckWorker(j);
  CheckShapes(x);
  std::vector<std::size_t> rows;
  for (std::size_t r = shard_[j]; r < shard_[j + 1]; ++r) rows.push_back(r);
  return Loss(rows, x, nullptr);
}

LayeredTensor TinyMlp::WorkerGradient(std::size_t j,
                                      const LayeredTensor& x) const {
  CheckWorker(j);
  CheckShapes(x);
  std::vector<std::size_t> rows;
  for (std::size_t r = shard_[j]; r < shard_[j + 1]; ++r) rows.push_back(r);
  LayeredTensor g;
  Loss(rows, x, &g);
  return g;
}

LayeredTensor TinyMlp::WorkerStochasticGradient(std::size_t j,
                                                const LayeredTensor& x,
                                                Rng& rng) const {
  CheckWorker(j);
  CheckShapes(x);
  std::vector<std::size_t> rows;
  for (std::size_t r = shard_[j]; r < shard_[j + 1]; ++r) rows.push_back(r);
  if (batch_size_ > 0 && batch_size_ < rows.size()) {
    // Partial Fisher-Yates: a uniform subset without replacement.
    for (std::size_t k = 0; k < batch_size_; ++k) {
      const std::size_t pick = k + rng.Below(rows.size() - k);
      std::swap(rows[k], rows[pick]);
    }
    rows.resize(batch_size_);
    std::sort(rows.begin(), rows.end());
  }
  LayeredTensor g;
  Loss(rows, x, &g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double sigma = noise_sigma()[i];
    if (sigma == 0.0) continue;
    const double sd = sigma / std::sqrt(double(g[i].size()));
    for (std::size_t k = 0; k < g[i].size(); ++k) g[i][k] += sd * rng.Normal();
  }
  return g;
}

std::shared_ptr<const TinyMlp> MakeTinyMlp(const ModelSpec& spec,
                                           const MlpOptions& options,
                                           Rng& rng) {
  spec.Validate();
  if (spec.num_layers() < 2) throw ConfigError("mlp: need at least 2 layers");
  if (!(options.label_noise >= 0.0)) {
    throw ConfigError("mlp: label noise must be >= 0");
  }
  LayeredTensor teacher;
  for (const Shape& s : spec.shapes) {
    teacher.push_back(rng.NormalMatrix(s.rows, s.cols,
                                       1.0 / std::sqrt(double(s.cols))));
  }
  const std::size_t n = options.dataset_size;
  const std::size_t dx = spec.shapes.front().cols;
  const std::size_t dy = spec.shapes.back().rows;
  Dataset data{rng.NormalMatrix(n, dx), Matrix(n, dy)};
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<double> h(data.inputs.data() + r * dx,
                          data.inputs.data() + (r + 1) * dx);
    for (std::size_t l = 0; l < teacher.size(); ++l) {
      const Matrix& w = teacher[l];
      std::vector<double> o(w.rows(), 0.0);
      for (std::size_t a = 0; a < w.rows(); ++a) {
        for (std::size_t b = 0; b < w.cols(); ++b) o[a] += w(a, b) * h[b];
        if (l + 1 < teacher.size()) o[a] = std::tanh(o[a]);
      }
      h.swap(o);
    }
    for (std::size_t a = 0; a < dy; ++a) {
      data.targets(r, a) = h[a] + options.label_noise * rng.Normal();
    }
  }
  return std::make_shared<const TinyMlp>(spec, std::move(data), options);
}

// ---------------------------------------------------------------------------

namespace {

double SqrtMeanSquare(const std::vector<std::vector<double>>& t,
                      std::size_t layer) {
  double s = 0.0;
  for (const auto& row : t) s += row.at(layer) * row.at(layer);
  return std::sqrt(s / double(t.size()));
}

struct Sample {
  double r;  // ||grad difference||_*
  double g;  // ||grad at X||_*
  double d;  // ||X - Y||
};

struct Fit {
  double l0 = 0.0;
  double l1 = 0.0;
};

Fit ConservativeFit(const std::vector<Sample>& s) {
  Fit f;
  for (const Sample& x : s) f.l0 = std::max(f.l0, x.r / x.d);
  return f;
}

double Sse(const std::vector<Sample>& s, Fit f) {
  double e = 0.0;
  for (const Sample& x : s) {
    const double res = x.r - (f.l0 + f.l1 * x.g) * x.d;
    e += res * res;
  }
  return e;
}

// Two-variable nonnegative least squares on features u = d, w = g d,
// followed by the smallest upward scaling that makes every pair feasible.
Fit LeastSquaresFit(const std::vector<Sample>& s) {
  double uu = 0, uw = 0, ww = 0, ru = 0, rw = 0;
  for (const Sample& x : s) {
    const double u = x.d, w = x.g * x.d;
    uu += u * u;
    uw += u * w;
    ww += w * w;
    ru += x.r * u;
    rw += x.r * w;
  }
  std::vector<Fit> candidates;
  candidates.push_back({ru / uu, 0.0});
  if (ww > 0.0) candidates.push_back({0.0, rw / ww});
  const double det = uu * ww - uw * uw;
  if (det > 1e-12 * uu * ww) {
    const Fit full{(ru * ww - rw * uw) / det, (rw * uu - ru * uw) / det};
    if (full.l0 >= 0.0 && full.l1 >= 0.0) candidates.push_back(full);
  }
  Fit best = candidates[0];
  double best_err = Sse(s, best);
  for (const Fit& c : candidates) {
    const Fit clipped{std::max(c.l0, 0.0), std::max(c.l1, 0.0)};
    const double e = Sse(s, clipped);
    if (e < best_err) {
      best_err = e;
      best = clipped;
    }
  }
  double scale = 1.0;
  double floor_l0 = 0.0;
  for (const Sample& x : s) {
    const double bound = (best.l0 + best.l1 * x.g) * x.d;
    if (bound > 0.0) {
      scale = std::max(scale, x.r / bound);
    } else if (x.r > 0.0) {
      floor_l0 = std::max(floor_l0, x.r / x.d);
    }
  }
  best.l0 *= scale;
  best.l1 *= scale;
  best.l0 = std::max(best.l0, floor_l0);
  return best;
}

}  // namespace

double SmoothnessProfile::LTilde(std::size_t layer) const {
  return SqrtMeanSquare(worker_l0, layer);
}

double SmoothnessProfile::L0Bar(std::size_t layer) const {
  double s = 0.0;
  for (const auto& row : worker_l0) s += row.at(layer);
  return s / double(worker_l0.size());
}

double SmoothnessProfile::L1Max(std::size_t layer) const {
  double m = 0.0;
  for (const auto& row : worker_l1) m = std::max(m, row.at(layer));
  return m;
}

double SmoothnessProfile::L0Max(std::size_t layer) const {
  double m = 0.0;
  for (const auto& row : worker_l0) m = std::max(m, row.at(layer));
  return m;
}

void SmoothnessProfile::Validate() const {
  const std::size_t p = l0.size();
  if (p == 0 || l1.size() != p) {
    throw ConfigError("smoothness profile: per-layer tables are ragged");
  }
  if (worker_l0.empty() || worker_l1.size() != worker_l0.size()) {
    throw ConfigError("smoothness profile: per-worker tables are ragged");
  }
  auto check = [](double v) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError("smoothness constants must be finite and >= 0");
    }
  };
  for (std::size_t i = 0; i < p; ++i) {
    check(l0[i]);
    check(l1[i]);
  }
  for (std::size_t j = 0; j < worker_l0.size(); ++j) {
    if (worker_l0[j].size() != p || worker_l1[j].size() != p) {
      throw ConfigError("smoothness profile: per-worker tables are ragged");
    }
    for (std::size_t i = 0; i < p; ++i) {
      check(worker_l0[j][i]);
      check(worker_l1[j][i]);
    }
  }
}

SmoothnessProfile QuadraticProfile(const QuadraticEnsemble& q) {
  const std::size_t p = q.spec().num_layers();
  const std::size_t n = q.num_workers();
  SmoothnessProfile prof;
  prof.l0.resize(p);
  prof.l1.assign(p, 0.0);
  prof.worker_l0.assign(n, std::vector<double>(p));
  prof.worker_l1.assign(n, std::vector<double>(p, 0.0));
  for (std::size_t i = 0; i < p; ++i) {
    prof.l0[i] = q.DualSmoothness(i);
    for (std::size_t j = 0; j < n; ++j) {
      prof.worker_l0[j][i] = q.DualSmoothness(i, j);
    }
  }
  return prof;
}

SmoothnessFit EstimateSmoothness(const Objective& obj,
                                 const std::vector<LayeredTensor>& trajectory,
                                 std::size_t pairs, Rng& rng) {
  const std::size_t t = trajectory.size();
  if (t < 2) {
    throw DegenerateTrajectoryError("smoothness: need at least two points");
  }
  const std::size_t p = obj.spec().num_layers();
  const std::size_t n = obj.num_workers();

  // grads[h][k]: h = 0 is f, h = j + 1 is f_j.
  std::vector<std::vector<LayeredTensor>> grads(n + 1);
  for (std::size_t k = 0; k < t; ++k) {
    LayeredTensor mean;
    for (std::size_t j = 0; j < n; ++j) {
      grads[j + 1].push_back(obj.WorkerGradient(j, trajectory[k]));
      if (j == 0) {
        mean = grads[1].back();
      } else {
        AddInPlace(mean, grads[j + 1].back());
      }
    }
    for (Matrix& m : mean) m *= 1.0 / double(n);
    grads[0].push_back(std::move(mean));
  }

  std::vector<std::pair<std::size_t, std::size_t>> chosen;
  if (pairs >= t * (t - 1)) {
    for (std::size_t a = 0; a < t; ++a) {
      for (std::size_t b = 0; b < t; ++b) {
        if (a != b) chosen.emplace_back(a, b);
      }
    }
  } else {
    for (std::size_t k = 0; k < pairs; ++k) {
      const std::size_t a = rng.Below(t);
      std::size_t b = rng.Below(t - 1);
      if (b >= a) ++b;
      chosen.emplace_back(a, b);
    }
  }

  SmoothnessFit fit;
  fit.pairs_used = chosen.size();
  for (SmoothnessProfile* prof : {&fit.conservative, &fit.least_squares}) {
    prof->l0.assign(p, 0.0);
    prof->l1.assign(p, 0.0);
    prof->worker_l0.assign(n, std::vector<double>(p, 0.0));
    prof->worker_l1.assign(n, std::vector<double>(p, 0.0));
  }
  for (std::size_t i = 0; i < p; ++i) {
    const NormKind& kind = obj.spec().norms[i];
    const NormKind dual = DualOf(kind);
    std::vector<std::vector<Sample>> samples(n + 1);
    for (const auto& [a, b] : chosen) {
      const double d = Norm(trajectory[a][i] - trajectory[b][i], kind);
      if (d == 0.0) continue;
      for (std::size_t h = 0; h <= n; ++h) {
        const Matrix& ga = grads[h][a][i];
        samples[h].push_back({Norm(ga - grads[h][b][i], dual),
                              Norm(ga, dual), d});
      }
    }
    if (samples[0].empty()) {
      throw DegenerateTrajectoryError(
          "smoothness: layer " + std::to_string(i) +
          " is identical at every sampled pair");
    }
    for (std::size_t h = 0; h <= n; ++h) {
      const Fit c = ConservativeFit(samples[h]);
      const Fit ls = LeastSquaresFit(samples[h]);
      if (h == 0) {
        fit.conservative.l0[i] = c.l0;
        fit.least_squares.l0[i] = ls.l0;
        fit.least_squares.l1[i] = ls.l1;
      } else {
        fit.conservative.worker_l0[h - 1][i] = c.l0;
        fit.least_squares.worker_l0[h - 1][i] = ls.l0;
        fit.least_squares.worker_l1[h - 1][i] = ls.l1;
      }
    }
  }
  return fit;
}

}  // namespace ef21
