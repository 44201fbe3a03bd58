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

#include "ef21muon/norms.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ef21muon/error.h"
#include "ef21muon/svd.h"

namespace ef21 {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double Conjugate(double p) {
  if (p == 1.0) return kInf;
  if (std::isinf(p)) return 1.0;
  return p / (p - 1.0);
}

// Factors (lo, hi) with lo ||x||_p <= ||x||_2 <= hi ||x||_p on R^dim.
std::pair<double, double> VectorEquivalence(double p, std::size_t dim) {
  const double d = static_cast<double>(dim);
  const double e = std::isinf(p) ? 0.5 : 0.5 - 1.0 / p;
  const double f = std::pow(d, e);
  if (p >= 2.0) return {1.0, f};
  return {f, 1.0};
}

std::string FormatExponent(double p) {
  if (std::isinf(p)) return "inf";
  std::ostringstream os;
  os.precision(17);
  os << p;
  return os.str();
}

double ParseExponent(const std::string& s) {
  if (s == "inf") return kInf;
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("bad norm exponent '" + s + "'");
  }
  if (pos != s.size()) throw ConfigError("bad norm exponent '" + s + "'");
  return v;
}

}  // namespace

NormKind NormKind::SchattenP(double p) {
  if (!(p > 1.0) || std::isinf(p)) {
    throw ConfigError("schatten exponent must lie in (1, inf); use spectral "
                      "for the p = inf limit");
  }
  return {NormType::kSchattenP, p, 2.0};
}

NormKind NormKind::ColumnLpq(double p, double q) {
  if (!(p >= 1.0) || !(q >= 1.0)) {
    throw ConfigError("column norm exponents must be >= 1");
  }
  return {NormType::kColumnLpq, p, q};
}

bool NormKind::operator==(const NormKind& o) const {
  if (type != o.type) return false;
  if (type == NormType::kSchattenP) return p == o.p;
  if (type == NormType::kColumnLpq) return p == o.p && q == o.q;
  return true;
}

std::string ToString(const NormKind& k) {
  switch (k.type) {
    case NormType::kSpectral: return "spectral";
    case NormType::kNuclear: return "nuclear";
    case NormType::kFrobenius: return "frobenius";
    case NormType::kEntrywiseL1: return "l1";
    case NormType::kEntrywiseLinf: return "linf";
    case NormType::kSchattenP: return "schatten:" + FormatExponent(k.p);
    case NormType::kColumnLpq:
      return "column:" + FormatExponent(k.p) + ":" + FormatExponent(k.q);
    case NormType::kMaxRowSum: return "maxrowsum";
    case NormType::kRowMaxSum: return "rowmaxsum";
  }
  return "?";
}

NormKind ParseNormKind(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.empty()) throw ConfigError("empty norm name");
  const std::string& head = parts[0];
  auto arity = [&](std::size_t n) {
    if (parts.size() != n) throw ConfigError("bad norm spec '" + text + "'");
  };
  if (head == "spectral") { arity(1); return NormKind::Spectral(); }
  if (head == "nuclear") { arity(1); return NormKind::Nuclear(); }
  if (head == "frobenius") { arity(1); return NormKind::Frobenius(); }
  if (head == "l1") { arity(1); return NormKind::L1(); }
  if (head == "linf") { arity(1); return NormKind::Linf(); }
  if (head == "maxrowsum") { arity(1); return NormKind::MaxRowSum(); }
  if (head == "rowmaxsum") { arity(1); return NormKind::RowMaxSum(); }
  if (head == "schatten") {
    arity(2);
    return NormKind::SchattenP(ParseExponent(parts[1]));
  }
  if (head == "column") {
    arity(3);
    return NormKind::ColumnLpq(ParseExponent(parts[1]),
                               ParseExponent(parts[2]));
  }
  throw ConfigError("unknown norm '" + text + "'");
}

double VectorPNorm(const std::vector<double>& v, double p) {
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  if (scale == 0.0 || std::isinf(p)) return scale;
  double s = 0.0;
  if (p == 1.0) {
    for (double x : v) s += std::abs(x);
    return s;
  }
  for (double x : v) s += std::pow(std::abs(x) / scale, p);
  return scale * std::pow(s, 1.0 / p);
}

double Norm(const Matrix& m, const NormKind& kind) {
  RequireFinite(m, "norm");
  switch (kind.type) {
    case NormType::kSpectral: {
      if (m.IsZero()) return 0.0;
      return SingularValues(m).front();
    }
    case NormType::kNuclear: {
      if (m.IsZero()) return 0.0;
      double s = 0.0;
      for (double x : SingularValues(m)) s += x;
      return s;
    }
    case NormType::kSchattenP: {
      if (m.IsZero()) return 0.0;
      return VectorPNorm(SingularValues(m), kind.p);
    }
    case NormType::kFrobenius:
      return FrobeniusNorm(m);
    case NormType::kEntrywiseL1: {
      double s = 0.0;
      for (double x : m.values()) s += std::abs(x);
      return s;
    }
    case NormType::kEntrywiseLinf: {
      double s = 0.0;
      for (double x : m.values()) s = std::max(s, std::abs(x));
      return s;
    }
    case NormType::kColumnLpq: {
      std::vector<double> col(m.rows());
      std::vector<double> outer(m.cols());
      for (std::size_t j = 0; j < m.cols(); ++j) {
        for (std::size_t i = 0; i < m.rows(); ++i) col[i] = m(i, j);
        outer[j] = VectorPNorm(col, kind.p);
      }
      return VectorPNorm(outer, kind.q);
    }
    case NormType::kMaxRowSum: {
      double best = 0.0;
      for (std::size_t i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) s += std::abs(m(i, j));
        best = std::max(best, s);
      }
      return best;
    }
    case NormType::kRowMaxSum: {
      double total = 0.0;
      for (std::size_t i = 0; i < m.rows(); ++i) {
        double mx = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j)
          mx = std::max(mx, std::abs(m(i, j)));
        total += mx;
      }
      return total;
    }
  }
  throw UnsupportedNormError("unknown norm kind");
}

NormKind DualOf(const NormKind& kind) {
  switch (kind.type) {
    case NormType::kSpectral: return NormKind::Nuclear();
    case NormType::kNuclear: return NormKind::Spectral();
    case NormType::kFrobenius: return NormKind::Frobenius();
    case NormType::kEntrywiseL1: return NormKind::Linf();
    case NormType::kEntrywiseLinf: return NormKind::L1();
    case NormType::kSchattenP: return NormKind::SchattenP(Conjugate(kind.p));
    case NormType::kColumnLpq:
      return NormKind::ColumnLpq(Conjugate(kind.p), Conjugate(kind.q));
    case NormType::kMaxRowSum: return NormKind::RowMaxSum();
    case NormType::kRowMaxSum: return NormKind::MaxRowSum();
  }
  return kind;
}

NormEquivalence NormEquivalenceOf(const NormKind& kind, Shape shape) {
  const double m = static_cast<double>(shape.rows);
  const double n = static_cast<double>(shape.cols);
  const double r = static_cast<double>(std::min(shape.rows, shape.cols));
  switch (kind.type) {
    case NormType::kSpectral: return {1.0, std::sqrt(r)};
    case NormType::kNuclear: return {1.0 / std::sqrt(r), 1.0};
    case NormType::kFrobenius: return {1.0, 1.0};
    case NormType::kEntrywiseL1: return {1.0 / std::sqrt(m * n), 1.0};
    case NormType::kEntrywiseLinf: return {1.0, std::sqrt(m * n)};
    case NormType::kSchattenP: {
      auto [lo, hi] = VectorEquivalence(kind.p, std::min(shape.rows, shape.cols));
      return {lo, hi};
    }
    case NormType::kColumnLpq: {
      auto [lo_in, hi_in] = VectorEquivalence(kind.p, shape.rows);
      auto [lo_out, hi_out] = VectorEquivalence(kind.q, shape.cols);
      return {lo_in * lo_out, hi_in * hi_out};
    }
    case NormType::kMaxRowSum: return {1.0 / std::sqrt(n), std::sqrt(m)};
    case NormType::kRowMaxSum: return {1.0 / std::sqrt(m), std::sqrt(n)};
  }
  return {1.0, 1.0};
}

}  // namespace ef21
