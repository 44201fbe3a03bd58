// Tests for the matrix type, norm catalog, SVD and norm equivalence.

#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "ef21muon/error.h"
#include "ef21muon/matrix.h"
#include "ef21muon/norms.h"
#include "ef21muon/rng.h"
#include "ef21muon/sampling.h"
#include "ef21muon/svd.h"

using namespace ef21;

namespace {

std::vector<NormKind> AllKinds() {
  return {NormKind::Spectral(),         NormKind::Nuclear(),
          NormKind::Frobenius(),        NormKind::L1(),
          NormKind::Linf(),             NormKind::SchattenP(3.0),
          NormKind::SchattenP(1.5),     NormKind::ColumnLpq(2.0, 1.0),
          NormKind::ColumnLpq(1.0, std::numeric_limits<double>::infinity()),
          NormKind::ColumnLpq(3.0, 1.5), NormKind::MaxRowSum(),
          NormKind::RowMaxSum()};
}

}  // namespace

TEST_SUITE("tensor-core") {

TEST_CASE("matrix construction rejects empty shapes") {
  CHECK_THROWS_AS(Matrix(0, 3), ShapeError);
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  Matrix m = Matrix::FromRows({{1, 2, 3}, {4, 5, 6}});
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m(1, 2) == 6.0);
  CHECK(m.Transpose()(2, 1) == 6.0);
}

TEST_CASE("matmul variants agree") {
  Rng rng(3);
  Matrix a = rng.NormalMatrix(4, 3);
  Matrix b = rng.NormalMatrix(3, 5);
  Matrix c = MatMul(a, b);
  CHECK(MaxAbsDiff(MatTMul(a.Transpose(), b), c) < 1e-14);
  CHECK(MaxAbsDiff(MatMulT(a, b.Transpose()), c) < 1e-14);
}

TEST_CASE("cholesky solve") {
  Matrix a = Matrix::FromRows({{4, 1}, {1, 3}});
  Matrix b = Matrix::FromRows({{1}, {2}});
  Matrix x = CholeskySolve(a, b);
  // Frozen by hand: [4 1; 1 3]^-1 [1; 2] = [1/11; 7/11].
  CHECK(x(0, 0) == doctest::Approx(1.0 / 11.0).epsilon(1e-14));
  CHECK(x(1, 0) == doctest::Approx(7.0 / 11.0).epsilon(1e-14));
}

TEST_CASE("norm examples") {
  const Matrix d = Matrix::Diagonal({3, 1});
  CHECK(Norm(d, NormKind::Spectral()) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(Norm(d, NormKind::Nuclear()) == doctest::Approx(4.0).epsilon(1e-14));
  const Matrix g = Matrix::FromRows({{1, -2}, {0, 2}});
  CHECK(Norm(g, NormKind::L1()) == 5.0);
  CHECK(Norm(g, NormKind::Linf()) == 2.0);
  CHECK(Norm(g, NormKind::MaxRowSum()) == 3.0);
  CHECK(Norm(g, NormKind::RowMaxSum()) == 4.0);
  CHECK(Norm(g, NormKind::Frobenius()) == doctest::Approx(3.0));
  // l_{2,1}: column norms 1 and sqrt(8).
  CHECK(Norm(g, NormKind::ColumnLpq(2, 1)) ==
        doctest::Approx(1.0 + std::sqrt(8.0)).epsilon(1e-14));
}

TEST_CASE("norm is zero only at zero and rejects non-finite input") {
  for (const auto& k : AllKinds()) {
    CHECK(Norm(Matrix(3, 2), k) == 0.0);
    Matrix e(3, 2);
    e(2, 1) = 1e-300;
    CHECK(Norm(e, k) > 0.0);
    Matrix bad(2, 2);
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(Norm(bad, k), NonFiniteError);
    bad(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(Norm(bad, k), NonFiniteError);
  }
}

TEST_CASE("dual_of examples and involution") {
  CHECK(DualOf(NormKind::Spectral()) == NormKind::Nuclear());
  CHECK(DualOf(NormKind::Frobenius()) == NormKind::Frobenius());
  const NormKind d3 = DualOf(NormKind::SchattenP(3.0));
  CHECK(d3.type == NormType::kSchattenP);
  CHECK(d3.p == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(DualOf(NormKind::L1()) == NormKind::Linf());
  CHECK(DualOf(NormKind::MaxRowSum()) == NormKind::RowMaxSum());
  for (const auto& k : AllKinds()) {
    const NormKind back = DualOf(DualOf(k));
    CHECK(back.type == k.type);
    CHECK(back.p == doctest::Approx(k.p).epsilon(1e-12));
    if (std::isinf(k.q)) {
      CHECK(std::isinf(back.q));
    } else {
      CHECK(back.q == doctest::Approx(k.q).epsilon(1e-12));
    }
  }
}

TEST_CASE("schatten and column limits are requested explicitly") {
  CHECK_THROWS_AS(NormKind::SchattenP(1.0), ConfigError);
  CHECK_THROWS_AS(
      NormKind::SchattenP(std::numeric_limits<double>::infinity()),
      ConfigError);
  CHECK_THROWS_AS(NormKind::ColumnLpq(0.5, 2.0), ConfigError);
}

TEST_CASE("norm names round trip") {
  for (const auto& k : AllKinds()) {
    CHECK(ParseNormKind(ToString(k)) == k);
  }
  CHECK_THROWS_AS(ParseNormKind("spectrall"), ConfigError);
  CHECK_THROWS_AS(ParseNormKind("schatten"), ConfigError);
}

TEST_CASE("svd examples") {
  Svd s = ComputeSvd(Matrix::Diagonal({2, 1}));
  CHECK(s.sigma[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(s.sigma[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(MaxAbsDiff(s.u, Matrix::Identity(2)) < 1e-15);
  CHECK(MaxAbsDiff(s.v, Matrix::Identity(2)) < 1e-15);

  Svd z = ComputeSvd(Matrix(3, 2));
  REQUIRE(z.sigma.size() == 2);
  CHECK(z.sigma[0] == 0.0);
  CHECK(z.sigma[1] == 0.0);
  CHECK(MaxAbsDiff(MatTMul(z.u, z.u), Matrix::Identity(2)) < 1e-14);
}

TEST_CASE("svd reconstruction, orthonormality and ordering on random inputs") {
  Rng rng(11);
  const Shape shapes[] = {{5, 3}, {3, 5}, {1, 4}, {4, 1}, {6, 6}, {16, 9}};
  for (const Shape& sh : shapes) {
    for (int t = 0; t < 40; ++t) {
      Matrix m = SampleMixed(sh, rng);
      if (t % 5 == 0) m *= 1e6;
      const Svd s = ComputeSvd(m);
      const double tol = 1e-10 * std::max(1.0, FrobeniusNorm(m));
      CHECK(FrobeniusNorm(s.Reconstruct() - m) <= tol);
      const std::size_t r = std::min(sh.rows, sh.cols);
      CHECK(MaxAbsDiff(MatTMul(s.u, s.u), Matrix::Identity(r)) < 1e-12);
      CHECK(MaxAbsDiff(MatTMul(s.v, s.v), Matrix::Identity(r)) < 1e-12);
      for (std::size_t k = 0; k + 1 < r; ++k) CHECK(s.sigma[k] >= s.sigma[k + 1]);
      for (std::size_t k = 0; k < r; ++k) {
        double best = -1, val = 0;
        for (std::size_t i = 0; i < sh.rows; ++i) {
          if (std::abs(s.u(i, k)) > best) {
            best = std::abs(s.u(i, k));
            val = s.u(i, k);
          }
        }
        CHECK(val >= 0.0);
      }
    }
  }
}

TEST_CASE("svd handles rank deficiency") {
  Rng rng(5);
  Matrix m = MatMulT(rng.NormalMatrix(6, 2), rng.NormalMatrix(4, 2));
  const Svd s = ComputeSvd(m);
  CHECK(s.sigma[2] < 1e-12 * s.sigma[0]);
  CHECK(FrobeniusNorm(s.Reconstruct() - m) <= 1e-10 * FrobeniusNorm(m));
  CHECK(MaxAbsDiff(MatTMul(s.u, s.u), Matrix::Identity(4)) < 1e-12);
}

TEST_CASE("norm equivalence examples") {
  NormEquivalence e = NormEquivalenceOf(NormKind::Spectral(), {4, 6});
  CHECK(e.rho_lower == 1.0);
  CHECK(e.rho_upper == doctest::Approx(2.0).epsilon(1e-15));
  e = NormEquivalenceOf(NormKind::Frobenius(), {7, 2});
  CHECK(e.rho_lower == 1.0);
  CHECK(e.rho_upper == 1.0);
  e = NormEquivalenceOf(NormKind::Linf(), {3, 5});
  CHECK(e.rho_lower == 1.0);
  CHECK(e.rho_upper == doctest::Approx(std::sqrt(15.0)).epsilon(1e-15));
}

TEST_CASE("linf equivalence constants are attained on 2x2 sign patterns") {
  // Exhaustive over {-1, 0, 1}^4: ||X||_F / ||X||_inf ranges over [1, 2].
  double lo = 1e9, hi = 0.0;
  for (int code = 1; code < 81; ++code) {
    Matrix x(2, 2);
    int c = code;
    for (int k = 0; k < 4; ++k) {
      x[k] = static_cast<double>(c % 3) - 1.0;
      c /= 3;
    }
    if (x.IsZero()) continue;
    const double ratio = FrobeniusNorm(x) / Norm(x, NormKind::Linf());
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  const NormEquivalence e = NormEquivalenceOf(NormKind::Linf(), {2, 2});
  CHECK(lo == doctest::Approx(e.rho_lower).epsilon(1e-15));
  CHECK(hi == doctest::Approx(e.rho_upper).epsilon(1e-15));
}

TEST_CASE("property: norm equivalence sandwich on 1e4 matrices per kind") {
  Rng rng(17);
  const Shape shapes[] = {{2, 2}, {3, 5}, {6, 2}};
  for (const auto& k : AllKinds()) {
    for (const Shape& sh : shapes) {
      const NormEquivalence e = NormEquivalenceOf(k, sh);
      REQUIRE(e.rho_lower <= e.rho_upper);
      int violations = 0;
      for (int t = 0; t < 10000; ++t) {
        const Matrix x = SampleMixed(sh, rng);
        const double nx = Norm(x, k);
        const double f = FrobeniusNorm(x);
        if (e.rho_lower * nx > f * (1 + 1e-12) ||
            f > e.rho_upper * nx * (1 + 1e-12)) {
          ++violations;
        }
      }
      INFO("kind " << ToString(k) << " shape " << sh.rows << "x" << sh.cols);
      CHECK(violations == 0);
    }
  }
}

TEST_CASE("property: Holder inequality on 1e4 pairs per kind") {
  Rng rng(23);
  for (const auto& k : AllKinds()) {
    const NormKind d = DualOf(k);
    double worst = 0.0;
    for (int t = 0; t < 10000; ++t) {
      const Shape sh{1 + rng.Below(4), 1 + rng.Below(4)};
      const Matrix x = SampleMixed(sh, rng);
      const Matrix y = SampleMixed(sh, rng);
      const double bound = Norm(x, k) * Norm(y, d);
      worst = std::max(worst, (std::abs(Dot(x, y)) - bound) / bound);
    }
    INFO("kind " << ToString(k));
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("property: dual norm equals the sampled supremum over the unit ball") {
  Rng rng(29);
  // A thousand draws cover a smooth sphere to within 5% only in a few
  // dimensions, so the lower bound is checked on shapes with at most four
  // entries. The upper bound holds everywhere.
  struct Case {
    Shape shape;
    bool lower;
  };
  const Case cases[] = {{{2, 2}, true}, {{1, 3}, true}, {{3, 1}, true},
                        {{3, 2}, false}, {{2, 4}, false}};
  for (const auto& k : AllKinds()) {
    const NormKind d = DualOf(k);
    for (const Case& c : cases) {
      for (int trial = 0; trial < 20; ++trial) {
        const Matrix x = SampleMixed(c.shape, rng);
        const double exact = Norm(x, d);
        double sup = -1e300;
        for (int s = 0; s < 1000; ++s) {
          sup = std::max(sup, Dot(x, SampleUnitBall(k, c.shape, rng)));
        }
        INFO("kind " << ToString(k) << " x=" << ToString(x));
        CHECK(sup <= exact + 1e-10 * std::max(1.0, exact));
        if (c.lower) CHECK(sup >= 0.95 * exact);
      }
    }
  }
}

TEST_CASE("property: schatten-2 and column (2,2) equal frobenius") {
  Rng rng(31);
  for (int t = 0; t < 2000; ++t) {
    const Shape sh{1 + rng.Below(6), 1 + rng.Below(6)};
    const Matrix x = SampleMixed(sh, rng);
    const double f = FrobeniusNorm(x);
    CHECK(std::abs(Norm(x, NormKind::SchattenP(2.0)) - f) <= 1e-12 * std::max(1.0, f));
    CHECK(std::abs(Norm(x, NormKind::ColumnLpq(2.0, 2.0)) - f) <=
          1e-12 * std::max(1.0, f));
  }
}

TEST_CASE("rng streams are deterministic and distinct") {
  Rng a(DeriveSeed(1, 2, 3)), b(DeriveSeed(1, 2, 3)), c(DeriveSeed(1, 3, 2));
  const auto x = a.NextU64();
  CHECK(x == b.NextU64());
  CHECK(x != c.NextU64());
  Rng u(9);
  double mean = 0;
  for (int i = 0; i < 100000; ++i) mean += u.Normal();
  CHECK(std::abs(mean / 100000) < 0.02);
}

}  // TEST_SUITE
