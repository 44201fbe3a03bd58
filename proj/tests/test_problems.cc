#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "doctest.h"
#include "ef21muon/compressors.h"
#include "ef21muon/error.h"
#include "ef21muon/problems.h"

using namespace ef21;

namespace {

ModelSpec TwoLayerSpec() {
  return {{Shape{2, 2}, Shape{3, 1}},
          {NormKind::Frobenius(), NormKind::Spectral()}};
}

Eigen::VectorXd Vec(const Matrix& m) {
  Eigen::VectorXd v(m.size());
  for (std::size_t k = 0; k < m.size(); ++k) v[k] = m[k];
  return v;
}

Eigen::MatrixXd ToEigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

// f(X) evaluated from the stored Hessians and centers with Eigen.
double ReferenceValue(const QuadraticEnsemble& q, const LayeredTensor& x) {
  double total = 0.0;
  for (std::size_t j = 0; j < q.num_workers(); ++j) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const Eigen::VectorXd r = Vec(x[i]) - Vec(q.center(i, j));
      total += 0.5 * r.dot(ToEigen(q.hessian(i, j)) * r);
    }
  }
  return total / double(q.num_workers());
}

LayeredTensor RandomPoint(const ModelSpec& spec, Rng& rng, double scale = 1) {
  LayeredTensor x;
  for (const Shape& s : spec.shapes) {
    x.push_back(rng.NormalMatrix(s.rows, s.cols, scale));
  }
  return x;
}

double CentralDifference(const Objective& obj, const LayeredTensor& x,
                         const LayeredTensor& dir, double eps) {
  LayeredTensor plus = x, minus = x;
  AddInPlace(plus, dir, eps);
  AddInPlace(minus, dir, -eps);
  return (obj.Value(plus) - obj.Value(minus)) / (2.0 * eps);
}

double Inner(const LayeredTensor& a, const LayeredTensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += Dot(a[i], b[i]);
  return s;
}

}  // namespace

TEST_SUITE("problems") {

TEST_CASE("model spec validation") {
  CHECK_NOTHROW(TwoLayerSpec().Validate());
  CHECK_THROWS_AS(ModelSpec{}.Validate(), ConfigError);
  CHECK_THROWS_AS((ModelSpec{{Shape{2, 2}}, {}}).Validate(), ConfigError);
  CHECK_THROWS_AS((ModelSpec{{Shape{0, 2}}, {NormKind::Frobenius()}}).Validate(),
                  ConfigError);
}

TEST_CASE("quadratic: single worker without heterogeneity") {
  Rng rng(3);
  QuadraticOptions opt;
  opt.conditioning = 10.0;
  const auto q = MakeQuadraticEnsemble(TwoLayerSpec(), opt, rng);
  REQUIRE(q->f_star().has_value());
  CHECK(std::abs(*q->f_star() - *q->worker_f_star(0)) < 1e-12);
  const LayeredTensor g = q->Gradient(q->minimizer());
  for (const Matrix& m : g) CHECK(FrobeniusNorm(m) < 1e-10);
  CHECK(MaxAbsDiff(q->minimizer(), LayeredTensor{q->center(0, 0),
                                                 q->center(1, 0)}) < 1e-10);
}

TEST_CASE("quadratic: three workers without heterogeneity share a minimizer") {
  Rng rng(4);
  QuadraticOptions opt;
  opt.num_workers = 3;
  opt.conditioning = 5.0;
  const auto q = MakeQuadraticEnsemble(TwoLayerSpec(), opt, rng);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(q->center(i, 0) == q->center(i, 1));
    CHECK(q->center(i, 0) == q->center(i, 2));
  }
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(std::abs(*q->f_star() - *q->worker_f_star(j)) < 1e-12);
  }
}

TEST_CASE("quadratic: heterogeneity against closed-form algebra") {
  Rng rng(5);
  QuadraticOptions opt;
  opt.num_workers = 3;
  opt.heterogeneity = 0.7;
  opt.conditioning = 8.0;
  const ModelSpec spec = TwoLayerSpec();
  const auto q = MakeQuadraticEnsemble(spec, opt, rng);
  double gap = 0.0;
  for (std::size_t j = 0; j < 3; ++j) gap += *q->f_star() - *q->worker_f_star(j);
  CHECK(gap / 3.0 > 0.0);

  // f* from the normal equations (sum_j A_j) x = sum_j A_j b_j.
  double f_star = 0.0;
  LayeredTensor xs;
  for (std::size_t i = 0; i < spec.num_layers(); ++i) {
    const std::size_t d = spec.shapes[i].size();
    Eigen::MatrixXd sa = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd sb = Eigen::VectorXd::Zero(d);
    for (std::size_t j = 0; j < 3; ++j) {
      sa += ToEigen(q->hessian(i, j));
      sb += ToEigen(q->hessian(i, j)) * Vec(q->center(i, j));
    }
    const Eigen::VectorXd sol = sa.ldlt().solve(sb);
    Matrix m(spec.shapes[i]);
    for (std::size_t k = 0; k < d; ++k) m[k] = sol[k];
    xs.push_back(m);
  }
  f_star = ReferenceValue(*q, xs);
  CHECK(*q->f_star() == doctest::Approx(f_star).epsilon(1e-10));
  for (int t = 0; t < 20; ++t) {
    const LayeredTensor x = RandomPoint(spec, rng);
    CHECK(q->Value(x) == doctest::Approx(ReferenceValue(*q, x)).epsilon(1e-12));
    CHECK(q->Value(x) >= *q->f_star() - 1e-12);
  }
}

TEST_CASE("quadratic: Hessians are symmetric with the requested spectrum") {
  Rng rng(6);
  QuadraticOptions opt;
  opt.num_workers = 2;
  opt.conditioning = 30.0;
  const ModelSpec spec{{Shape{3, 2}}, {NormKind::Frobenius()}};
  const auto q = MakeQuadraticEnsemble(spec, opt, rng);
  for (std::size_t j = 0; j < 2; ++j) {
    const Eigen::MatrixXd a = ToEigen(q->hessian(0, j));
    CHECK((a - a.transpose()).norm() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    CHECK(es.eigenvalues().minCoeff() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(es.eigenvalues().maxCoeff() == doctest::Approx(30.0).epsilon(1e-9));
    CHECK(q->EuclideanSmoothness(0, j) ==
          doctest::Approx(es.eigenvalues().maxCoeff()).epsilon(1e-9));
  }
  Eigen::MatrixXd mean =
      0.5 * (ToEigen(q->hessian(0, 0)) + ToEigen(q->hessian(0, 1)));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mean);
  CHECK(q->EuclideanSmoothness(0) ==
        doctest::Approx(es.eigenvalues().maxCoeff()).epsilon(1e-9));
}

TEST_CASE("quadratic: dual-norm smoothness bounds hold on random directions") {
  const std::vector<NormKind> kinds = {
      NormKind::Frobenius(), NormKind::Spectral(), NormKind::Nuclear(),
      NormKind::L1(),        NormKind::Linf(),     NormKind::MaxRowSum(),
      NormKind::RowMaxSum(), NormKind::SchattenP(3.0),
      NormKind::ColumnLpq(2.0, 1.0)};
  for (const NormKind& kind : kinds) {
    CAPTURE(ToString(kind));
    Rng rng(7);
    QuadraticOptions opt;
    opt.num_workers = 2;
    opt.conditioning = 12.0;
    const ModelSpec spec{{Shape{3, 2}}, {kind}};
    const auto q = MakeQuadraticEnsemble(spec, opt, rng);
    const NormKind dual = DualOf(kind);
    for (std::size_t j = 0; j < 2; ++j) {
      const double l = q->DualSmoothness(0, j);
      for (int t = 0; t < 500; ++t) {
        LayeredTensor x = RandomPoint(spec, rng);
        LayeredTensor y = RandomPoint(spec, rng);
        const Matrix dg = q->WorkerGradient(j, x)[0] - q->WorkerGradient(j, y)[0];
        CHECK(Norm(dg, dual) <= l * Norm(x[0] - y[0], kind) * (1 + 1e-12));
      }
    }
  }
}

TEST_CASE("quadratic: gradient matches central differences") {
  Rng rng(8);
  QuadraticOptions opt;
  opt.num_workers = 2;
  opt.heterogeneity = 1.0;
  opt.conditioning = 4.0;
  const ModelSpec spec = TwoLayerSpec();
  const auto q = MakeQuadraticEnsemble(spec, opt, rng);
  for (int t = 0; t < 10; ++t) {
    const LayeredTensor x = RandomPoint(spec, rng);
    const LayeredTensor dir = RandomPoint(spec, rng);
    const double fd = CentralDifference(*q, x, dir, 1e-4);
    const double an = Inner(q->Gradient(x), dir);
    CHECK(std::abs(fd - an) <= 1e-7 * (1.0 + std::abs(an)));
  }
}

TEST_CASE("stochastic oracle: unbiased with the configured variance") {
  Rng rng(9);
  QuadraticOptions opt;
  opt.num_workers = 2;
  opt.heterogeneity = 0.5;
  opt.noise_sigma = {0.3, 2.0};
  const ModelSpec spec = TwoLayerSpec();
  const auto q = MakeQuadraticEnsemble(spec, opt, rng);
  const LayeredTensor x = RandomPoint(spec, rng);
  const LayeredTensor exact = q->WorkerGradient(1, x);
  const int draws = 10000;
  LayeredTensor sum = ZerosLike(x), sum_sq = ZerosLike(x);
  std::vector<double> sq_norm(2, 0.0), sq_norm2(2, 0.0);
  for (int s = 0; s < draws; ++s) {
    const LayeredTensor g = q->WorkerStochasticGradient(1, x, rng);
    for (std::size_t i = 0; i < 2; ++i) {
      const Matrix e = g[i] - exact[i];
      for (std::size_t k = 0; k < e.size(); ++k) {
        sum[i][k] += e[k];
        sum_sq[i][k] += e[k] * e[k];
      }
      const double n2 = Dot(e, e);
      sq_norm[i] += n2;
      sq_norm2[i] += n2 * n2;
    }
  }
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < x[i].size(); ++k) {
      const double mean = sum[i][k] / draws;
      const double var = sum_sq[i][k] / draws - mean * mean;
      CHECK(std::abs(mean) <= 4.0 * std::sqrt(var / draws));
    }
    const double sigma2 = opt.noise_sigma[i] * opt.noise_sigma[i];
    const double m = sq_norm[i] / draws;
    const double se = std::sqrt((sq_norm2[i] / draws - m * m) / draws);
    CHECK(m <= sigma2 + 4.0 * se);
    CHECK(std::abs(m - sigma2) <= 4.0 * se);
  }
}

TEST_CASE("stochastic oracle: zero noise returns the exact gradient") {
  Rng rng(10);
  QuadraticOptions opt;
  opt.num_workers = 2;
  const ModelSpec spec = TwoLayerSpec();
  const auto q = MakeQuadraticEnsemble(spec, opt, rng);
  const LayeredTensor x = RandomPoint(spec, rng);
  CHECK(BitEqual(q->StochasticGradient(x, rng), q->Gradient(x)));
}

TEST_CASE("noise configuration errors") {
  Rng rng(11);
  QuadraticOptions opt;
  opt.noise_sigma = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(MakeQuadraticEnsemble(TwoLayerSpec(), opt, rng), ConfigError);
  opt.noise_sigma = {-1.0};
  CHECK_THROWS_AS(MakeQuadraticEnsemble(TwoLayerSpec(), opt, rng), ConfigError);
  opt.noise_sigma = {};
  opt.conditioning = 0.5;
  CHECK_THROWS_AS(MakeQuadraticEnsemble(TwoLayerSpec(), opt, rng), ConfigError);
  opt.conditioning = 1.0;
  opt.num_workers = 0;
  CHECK_THROWS_AS(MakeQuadraticEnsemble(TwoLayerSpec(), opt, rng), ConfigError);
}

TEST_CASE("divergence instance: structure") {
  const auto q = MakeDivergenceInstance();
  CHECK(q->num_workers() == 3);
  const LayeredTensor x = DivergenceStart();
  const LayeredTensor g = q->WorkerGradient(0, x);
  CHECK(g[0] == Matrix::FromRows({{-5.5}, {4.5}, {4.5}}));
  CHECK(q->WorkerValue(0, x) == doctest::Approx(1.0 + 0.75));
  CHECK(*q->f_star() == doctest::Approx(0.0).scale(1e-12));
}

TEST_CASE("divergence instance: Top1 without error feedback blows up") {
  const auto q = MakeDivergenceInstance();
  LayeredTensor x = DivergenceStart();
  Rng rng(0);
  const double g0 = FrobeniusNorm(q->Gradient(x)[0]);
  const CompressorKind top1 = CompressorKind::TopK(1.0 / 3.0);
  for (int k = 0; k < 200; ++k) {
    Matrix step(3, 1);
    for (std::size_t j = 0; j < 3; ++j) {
      step += Decompress(Compress(top1, q->WorkerGradient(j, x)[0], rng));
    }
    x[0].Axpy(-kDivergenceStepsize / 3.0, step);
  }
  CHECK(FrobeniusNorm(q->Gradient(x)[0]) >= 1e3 * g0);
}

TEST_CASE("divergence instance: exact gradient descent converges linearly") {
  const auto q = MakeDivergenceInstance();
  LayeredTensor x = DivergenceStart();
  double prev = FrobeniusNorm(q->Gradient(x)[0]);
  for (int k = 0; k < 500; ++k) {
    x[0].Axpy(-kDivergenceStepsize, q->Gradient(x)[0]);
    const double cur = FrobeniusNorm(q->Gradient(x)[0]);
    CHECK(cur < prev);
    prev = cur;
  }
  CHECK(prev < 1e-6);
}

TEST_CASE("tiny mlp: zero weights, targets and inputs") {
  const ModelSpec spec{{Shape{4, 3}, Shape{2, 4}},
                       {NormKind::Spectral(), NormKind::Spectral()}};
  Dataset data{Matrix(6, 3), Matrix(6, 2)};
  TinyMlp mlp(spec, data, MlpOptions{});
  const LayeredTensor x = ZerosOf(spec.shapes);
  CHECK(mlp.Value(x) == 0.0);
  for (const Matrix& g : mlp.Gradient(x)) CHECK(g.IsZero());
}

TEST_CASE("tiny mlp: analytic gradient matches central differences") {
  Rng rng(12);
  const ModelSpec spec{{Shape{5, 3}, Shape{4, 5}, Shape{2, 4}},
                       {NormKind::Spectral(), NormKind::Spectral(),
                        NormKind::Frobenius()}};
  MlpOptions opt;
  opt.num_workers = 3;
  opt.dataset_size = 30;
  const auto mlp = MakeTinyMlp(spec, opt, rng);
  for (int t = 0; t < 10; ++t) {
    const LayeredTensor x = RandomPoint(spec, rng, 0.7);
    const LayeredTensor g = mlp->Gradient(x);
    for (std::size_t i = 0; i < spec.num_layers(); ++i) {
      for (std::size_t k = 0; k < x[i].size(); ++k) {
        LayeredTensor dir = ZerosOf(spec.shapes);
        dir[i][k] = 1.0;
        const double fd = CentralDifference(*mlp, x, dir, 1e-5);
        CHECK(std::abs(fd - g[i][k]) <= 1e-5 * std::max(1.0, std::abs(g[i][k])));
      }
    }
  }
}

TEST_CASE("tiny mlp: full batch equals the exact gradient") {
  Rng rng(13);
  const ModelSpec spec{{Shape{4, 2}, Shape{1, 4}},
                       {NormKind::Spectral(), NormKind::Frobenius()}};
  MlpOptions opt;
  opt.num_workers = 2;
  opt.dataset_size = 20;
  opt.batch_size = 10;
  const auto mlp = MakeTinyMlp(spec, opt, rng);
  const LayeredTensor x = RandomPoint(spec, rng);
  CHECK(BitEqual(mlp->WorkerStochasticGradient(0, x, rng),
                 mlp->WorkerGradient(0, x)));
  opt.batch_size = 0;
  TinyMlp full(spec, mlp->data(), opt);
  CHECK(BitEqual(full.WorkerStochasticGradient(1, x, rng),
                 full.WorkerGradient(1, x)));
}

TEST_CASE("tiny mlp: minibatch gradient is unbiased") {
  Rng rng(14);
  const ModelSpec spec{{Shape{3, 2}, Shape{1, 3}},
                       {NormKind::Spectral(), NormKind::Frobenius()}};
  MlpOptions opt;
  opt.dataset_size = 16;
  opt.batch_size = 3;
  const auto mlp = MakeTinyMlp(spec, opt, rng);
  const LayeredTensor x = RandomPoint(spec, rng);
  const LayeredTensor exact = mlp->WorkerGradient(0, x);
  const int draws = 10000;
  LayeredTensor sum = ZerosLike(x), sum_sq = ZerosLike(x);
  for (int s = 0; s < draws; ++s) {
    const LayeredTensor g = mlp->WorkerStochasticGradient(0, x, rng);
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (std::size_t k = 0; k < g[i].size(); ++k) {
        const double e = g[i][k] - exact[i][k];
        sum[i][k] += e;
        sum_sq[i][k] += e * e;
      }
    }
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t k = 0; k < x[i].size(); ++k) {
      const double mean = sum[i][k] / draws;
      const double var = sum_sq[i][k] / draws - mean * mean;
      CHECK(std::abs(mean) <= 4.0 * std::sqrt(var / draws) + 1e-15);
    }
  }
}

TEST_CASE("tiny mlp: values never fall below the lower bounds") {
  Rng rng(15);
  const ModelSpec spec{{Shape{3, 2}, Shape{2, 3}},
                       {NormKind::Spectral(), NormKind::Spectral()}};
  MlpOptions opt;
  opt.num_workers = 4;
  opt.dataset_size = 12;
  const auto mlp = MakeTinyMlp(spec, opt, rng);
  for (int t = 0; t < 50; ++t) {
    const LayeredTensor x = RandomPoint(spec, rng, 2.0);
    CHECK(mlp->Value(x) >= *mlp->f_star());
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(mlp->WorkerValue(j, x) >= *mlp->worker_f_star(j));
    }
  }
}

TEST_CASE("tiny mlp: configuration errors") {
  Rng rng(16);
  MlpOptions opt;
  CHECK_THROWS_AS(MakeTinyMlp(ModelSpec{{Shape{2, 2}}, {NormKind::Spectral()}},
                              opt, rng),
                  ConfigError);
  CHECK_THROWS_AS(
      MakeTinyMlp(ModelSpec{{Shape{3, 2}, Shape{1, 4}},
                            {NormKind::Spectral(), NormKind::Spectral()}},
                  opt, rng),
      ConfigError);
  opt.num_workers = 100;
  opt.dataset_size = 10;
  CHECK_THROWS_AS(
      MakeTinyMlp(ModelSpec{{Shape{3, 2}, Shape{1, 3}},
                            {NormKind::Spectral(), NormKind::Spectral()}},
                  opt, rng),
      ConfigError);
}

TEST_CASE("dataset csv round trip is exact") {
  Rng rng(17);
  Dataset data{rng.NormalMatrix(7, 3), rng.NormalMatrix(7, 2)};
  data.inputs(0, 0) = 1e-300;
  data.targets(6, 1) = -0.1;
  const std::string path = "problems_dataset_roundtrip.csv";
  WriteDatasetCsv(data, path);
  const Dataset back = ReadDatasetCsv(path);
  CHECK(back.inputs == data.inputs);
  CHECK(back.targets == data.targets);
  std::remove(path.c_str());
  CHECK_THROWS_AS(ReadDatasetCsv("does/not/exist.csv"), ConfigError);
}

TEST_CASE("smoothness profile: aggregates follow the defining formulas") {
  SmoothnessProfile p;
  p.l0 = {1.0, 2.0};
  p.l1 = {0.0, 0.5};
  p.worker_l0 = {{1.0, 4.0}, {3.0, 0.0}};
  p.worker_l1 = {{0.2, 0.0}, {0.1, 0.7}};
  CHECK(p.LTilde(0) == doctest::Approx(std::sqrt(5.0)));
  CHECK(p.LTilde(1) == doctest::Approx(std::sqrt(8.0)));
  CHECK(p.L0Bar(0) == 2.0);
  CHECK(p.L0Bar(1) == 2.0);
  CHECK(p.L1Max(0) == 0.2);
  CHECK(p.L1Max(1) == 0.7);
  CHECK(p.L0Max(1) == 4.0);
  CHECK_NOTHROW(p.Validate());
  p.worker_l1[0][0] = -1.0;
  CHECK_THROWS_AS(p.Validate(), ConfigError);
}

TEST_CASE("smoothness: quadratic fit recovers the analytic constant") {
  Rng rng(18);
  QuadraticOptions opt;
  opt.num_workers = 2;
  opt.conditioning = 6.0;
  opt.heterogeneity = 0.5;
  const ModelSpec spec{{Shape{2, 2}}, {NormKind::Frobenius()}};
  const auto q = MakeQuadraticEnsemble(spec, opt, rng);
  std::vector<LayeredTensor> traj;
  for (int t = 0; t < 64; ++t) traj.push_back(RandomPoint(spec, rng));
  const SmoothnessFit fit = EstimateSmoothness(*q, traj, 4000, rng);
  CHECK(fit.conservative.l1[0] == 0.0);
  CHECK(fit.conservative.l0[0] <= q->DualSmoothness(0) * (1 + 1e-12));
  CHECK(fit.conservative.l0[0] >= 0.9 * q->DualSmoothness(0));
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(fit.conservative.worker_l0[j][0] >= 0.9 * q->DualSmoothness(0, j));
    CHECK(fit.conservative.worker_l0[j][0] <=
          q->DualSmoothness(0, j) * (1 + 1e-12));
  }
  CHECK(fit.least_squares.l1[0] <= 0.1 * fit.least_squares.l0[0] + 1e-12);
}

TEST_CASE("smoothness: both fits satisfy the inequality on every pair") {
  Rng rng(19);
  const ModelSpec spec{{Shape{3, 2}, Shape{1, 3}},
                       {NormKind::Spectral(), NormKind::Frobenius()}};
  MlpOptions opt;
  opt.num_workers = 2;
  opt.dataset_size = 10;
  const auto mlp = MakeTinyMlp(spec, opt, rng);
  std::vector<LayeredTensor> traj;
  for (int t = 0; t < 12; ++t) traj.push_back(RandomPoint(spec, rng));
  const SmoothnessFit fit = EstimateSmoothness(*mlp, traj, 1000, rng);
  CHECK(fit.pairs_used == 12 * 11);
  for (const SmoothnessProfile* p : {&fit.conservative, &fit.least_squares}) {
    CHECK_NOTHROW(p->Validate());
    for (std::size_t a = 0; a < traj.size(); ++a) {
      for (std::size_t b = 0; b < traj.size(); ++b) {
        if (a == b) continue;
        const LayeredTensor ga = mlp->Gradient(traj[a]);
        const LayeredTensor gb = mlp->Gradient(traj[b]);
        for (std::size_t i = 0; i < 2; ++i) {
          const NormKind dual = DualOf(spec.norms[i]);
          const double lhs = Norm(ga[i] - gb[i], dual);
          const double rhs = (p->l0[i] + p->l1[i] * Norm(ga[i], dual)) *
                             Norm(traj[a][i] - traj[b][i], spec.norms[i]);
          CHECK(lhs <= rhs * (1 + 1e-12));
        }
      }
    }
  }
}

TEST_CASE("smoothness: scaling the objective doubles L0") {
  const ModelSpec spec{{Shape{2, 2}}, {NormKind::Spectral()}};
  QuadraticOptions opt;
  opt.num_workers = 2;
  opt.conditioning = 3.0;
  Rng r1(20), r2(20);
  const auto q1 = MakeQuadraticEnsemble(spec, opt, r1);
  opt.scale = 2.0;
  const auto q2 = MakeQuadraticEnsemble(spec, opt, r2);
  Rng rng(21);
  std::vector<LayeredTensor> traj;
  for (int t = 0; t < 10; ++t) traj.push_back(RandomPoint(spec, rng));
  Rng s1(22), s2(22);
  const SmoothnessFit f1 = EstimateSmoothness(*q1, traj, 50, s1);
  const SmoothnessFit f2 = EstimateSmoothness(*q2, traj, 50, s2);
  CHECK(f2.conservative.l0[0] == 2.0 * f1.conservative.l0[0]);
  CHECK(f2.conservative.worker_l0[1][0] == 2.0 * f1.conservative.worker_l0[1][0]);
}

TEST_CASE("smoothness: a single pair reproduces the observed ratio") {
  Rng rng(23);
  const ModelSpec spec{{Shape{2, 3}}, {NormKind::Nuclear()}};
  QuadraticOptions opt;
  opt.conditioning = 9.0;
  const auto q = MakeQuadraticEnsemble(spec, opt, rng);
  const LayeredTensor x = RandomPoint(spec, rng);
  LayeredTensor y = x;
  y[0].Axpy(1e-3, rng.NormalMatrix(2, 3));
  const double ratio =
      Norm(q->Gradient(x)[0] - q->Gradient(y)[0], NormKind::Spectral()) /
      Norm(x[0] - y[0], NormKind::Nuclear());
  // With two points both orders are sampled; the ratio is symmetric.
  const SmoothnessFit fit = EstimateSmoothness(*q, {x, y}, 2, rng);
  CHECK(fit.conservative.l0[0] == doctest::Approx(ratio).epsilon(1e-14));
}

TEST_CASE("smoothness: degenerate trajectories are rejected") {
  Rng rng(24);
  const ModelSpec spec = TwoLayerSpec();
  const auto q = MakeQuadraticEnsemble(spec, QuadraticOptions{}, rng);
  const LayeredTensor x = RandomPoint(spec, rng);
  CHECK_THROWS_AS(EstimateSmoothness(*q, {x}, 10, rng),
                  DegenerateTrajectoryError);
  CHECK_THROWS_AS(EstimateSmoothness(*q, {x, x, x}, 10, rng),
                  DegenerateTrajectoryError);
  const SmoothnessProfile exact = QuadraticProfile(*q);
  CHECK(exact.l0[0] == q->DualSmoothness(0));
  CHECK(exact.l1[1] == 0.0);
}

}  // TEST_SUITE
