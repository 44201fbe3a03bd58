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

#include "ef21muon/compressors.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "ef21muon/error.h"
#include "ef21muon/svd.h"

namespace ef21 {
namespace {

// Shortest text that parses back to the same double.
std::string FormatNumber(double x) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

double ParseNumber(const std::string& s, const std::string& context) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad number '" + s + "' in compressor '" + context + "'");
  }
}

std::size_t ParseCount(const std::string& s, const std::string& context) {
  const double v = ParseNumber(s, context);
  if (v < 0 || v != std::floor(v)) {
    throw ConfigError("bad count '" + s + "' in compressor '" + context + "'");
  }
  return static_cast<std::size_t>(v);
}

std::vector<std::string> Split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// Row-major indices of the `count` largest magnitudes, ties to the lowest
// index, returned in ascending order.
std::vector<std::uint64_t> TopIndices(const std::vector<double>& mags,
                                      std::size_t count) {
  std::vector<std::uint64_t> idx(mags.size());
  std::iota(idx.begin(), idx.end(), 0);
  count = std::min(count, idx.size());
  auto before = [&](std::uint64_t a, std::uint64_t b) {
    if (mags[a] != mags[b]) return mags[a] > mags[b];
    return a < b;
  };
  std::nth_element(idx.begin(), idx.begin() + static_cast<long>(count),
                   idx.end(), before);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<double> ColumnNorms(const Matrix& m, double p) {
  std::vector<double> out(m.cols());
  std::vector<double> col(m.rows());
  for (std::size_t j = 0; j < m.cols(); ++j) {
    for (std::size_t i = 0; i < m.rows(); ++i) col[i] = m(i, j);
    out[j] = VectorPNorm(col, p);
  }
  return out;
}

std::size_t TruncationRank(const CompressorKind& kind, Shape shape) {
  const std::size_t r = std::min(shape.rows, shape.cols);
  if (kind.type == CompressorType::kRankK) return RankKCount(kind.fraction, shape);
  return std::min(kind.k, r);
}

CompressedMessage DenseMessage(const Matrix& m) {
  CompressedMessage msg;
  msg.type = PayloadType::kDense;
  msg.shape = m.shape();
  msg.values = m.values();
  return msg;
}

CompressedMessage LowRankMessage(const Matrix& m, std::size_t rank) {
  const Svd s = ComputeSvd(m);
  CompressedMessage msg;
  msg.type = PayloadType::kLowRank;
  msg.shape = m.shape();
  msg.u = Matrix(m.rows(), rank);
  msg.v = Matrix(m.cols(), rank);
  msg.sigma.assign(s.sigma.begin(), s.sigma.begin() + static_cast<long>(rank));
  for (std::size_t k = 0; k < rank; ++k) {
    for (std::size_t i = 0; i < m.rows(); ++i) msg.u(i, k) = s.u(i, k);
    for (std::size_t j = 0; j < m.cols(); ++j) msg.v(j, k) = s.v(j, k);
  }
  return msg;
}

void NaturalEncode(double x, Rng& rng, std::int8_t& sign, std::int16_t& exp) {
  if (x == 0.0) {
    sign = 0;
    exp = 0;
    return;
  }
  int e = 0;
  const double mant = std::frexp(std::abs(x), &e);  // |x| = mant * 2^e
  // |x| = 2^(e-1) * (1 + f) with f in [0, 1); round up with probability f.
  const double f = 2.0 * mant - 1.0;
  int out = e - 1;
  if (rng.Uniform() < f && e <= 1023) out = e;
  sign = x > 0.0 ? 1 : -1;
  exp = static_cast<std::int16_t>(out);
}

double NaturalDecode(std::int8_t sign, std::int16_t exp) {
  return sign == 0 ? 0.0 : std::ldexp(static_cast<double>(sign), exp);
}

CompressedMessage NaturalPack(const std::vector<double>& values,
                              std::vector<std::uint64_t> indices, Shape shape,
                              Rng& rng) {
  CompressedMessage msg;
  msg.type = PayloadType::kNaturalPacked;
  msg.shape = shape;
  msg.has_indices = !indices.empty() || values.size() != shape.size();
  msg.indices = std::move(indices);
  msg.signs.resize(values.size());
  msg.exponents.resize(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) {
    NaturalEncode(values[k], rng, msg.signs[k], msg.exponents[k]);
  }
  return msg;
}

// Natural rounding of an existing payload, as in "TopK + Natural" and
// "RankK + Natural".
CompressedMessage NaturalOver(CompressedMessage msg, Rng& rng) {
  switch (msg.type) {
    case PayloadType::kZero:
    case PayloadType::kNaturalPacked:
      return msg;
    case PayloadType::kDense:
      return NaturalPack(msg.values, {}, msg.shape, rng);
    case PayloadType::kSparse: {
      CompressedMessage out =
          NaturalPack(msg.values, std::move(msg.indices), msg.shape, rng);
      out.has_indices = true;
      return out;
    }
    case PayloadType::kLowRank: {
      for (std::size_t k = 0; k < msg.u.size(); ++k)
        msg.u[k] = NaturalRound(msg.u[k], rng);
      for (double& s : msg.sigma) s = NaturalRound(s, rng);
      for (std::size_t k = 0; k < msg.v.size(); ++k)
        msg.v[k] = NaturalRound(msg.v[k], rng);
      msg.natural_factors = true;
      return msg;
    }
  }
  throw MalformedPayloadError("unknown payload type");
}

CompressedMessage CompressImpl(const CompressorKind& kind, const Matrix& m,
                               Rng& rng) {
  const Shape shape = m.shape();
  switch (kind.type) {
    case CompressorType::kIdentity:
      return DenseMessage(m);
    case CompressorType::kDamping: {
      CompressedMessage msg = DenseMessage(m);
      for (double& x : msg.values) x *= kind.gamma;
      return msg;
    }
    case CompressorType::kTopK: {
      std::vector<double> mags(m.size());
      for (std::size_t k = 0; k < m.size(); ++k) mags[k] = std::abs(m[k]);
      CompressedMessage msg;
      msg.type = PayloadType::kSparse;
      msg.shape = shape;
      msg.indices = TopIndices(mags, TopKCount(kind.fraction, shape));
      for (std::uint64_t i : msg.indices) msg.values.push_back(m[i]);
      return msg;
    }
    case CompressorType::kColumnTopK: {
      const std::vector<double> norms = ColumnNorms(m, kind.p);
      std::vector<std::uint64_t> cols = TopIndices(norms, kind.k);
      CompressedMessage msg;
      msg.type = PayloadType::kSparse;
      msg.shape = shape;
      for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::uint64_t j : cols) {
          msg.indices.push_back(i * m.cols() + j);
          msg.values.push_back(m(i, j));
        }
      }
      return msg;
    }
    case CompressorType::kRankK:
    case CompressorType::kTopKSvd:
      return LowRankMessage(m, TruncationRank(kind, shape));
    case CompressorType::kNatural:
      return NaturalPack(m.values(), {}, shape, rng);
    case CompressorType::kRandomDropout: {
      if (rng.Uniform() < kind.prob) return DenseMessage(m);
      CompressedMessage msg;
      msg.shape = shape;
      return msg;
    }
    case CompressorType::kComposed: {
      CompressedMessage inner = CompressImpl(*kind.inner, m, rng);
      if (kind.outer->type == CompressorType::kNatural) {
        return NaturalOver(std::move(inner), rng);
      }
      return CompressImpl(*kind.outer, Decompress(inner), rng);
    }
  }
  throw ConfigError("unknown compressor type");
}

// What a compressor sends on a given shape, without looking at values.
struct PayloadForecast {
  PayloadType type = PayloadType::kZero;
  double send_probability = 1.0;
  std::size_t count = 0;  // entries (dense, sparse, packed) or rank
  bool indexed = false;
  bool natural = false;
};

PayloadForecast Forecast(const CompressorKind& kind, Shape shape) {
  PayloadForecast f;
  switch (kind.type) {
    case CompressorType::kIdentity:
    case CompressorType::kDamping:
      f.type = PayloadType::kDense;
      f.count = shape.size();
      return f;
    case CompressorType::kTopK:
      f.type = PayloadType::kSparse;
      f.count = TopKCount(kind.fraction, shape);
      f.indexed = true;
      return f;
    case CompressorType::kColumnTopK:
      f.type = PayloadType::kSparse;
      f.count = std::min(kind.k, shape.cols) * shape.rows;
      f.indexed = true;
      return f;
    case CompressorType::kRankK:
    case CompressorType::kTopKSvd:
      f.type = PayloadType::kLowRank;
      f.count = TruncationRank(kind, shape);
      return f;
    case CompressorType::kNatural:
      f.type = PayloadType::kNaturalPacked;
      f.count = shape.size();
      f.natural = true;
      return f;
    case CompressorType::kRandomDropout:
      f.type = PayloadType::kDense;
      f.count = shape.size();
      f.send_probability = kind.prob;
      return f;
    case CompressorType::kComposed: {
      if (kind.outer->type != CompressorType::kNatural) {
        return Forecast(*kind.outer, shape);
      }
      f = Forecast(*kind.inner, shape);
      if (f.type == PayloadType::kDense || f.type == PayloadType::kSparse) {
        f.type = PayloadType::kNaturalPacked;
      }
      f.natural = true;
      return f;
    }
  }
  throw ConfigError("unknown compressor type");
}

double ForecastBits(const PayloadForecast& f, Shape shape,
                    const BitConfig& bits) {
  const double ib = bits.index_bits >= 0 ? bits.index_bits
                                         : DefaultIndexBits(shape);
  const double vb = f.natural ? 16.0 : bits.value_bits;
  const double count = static_cast<double>(f.count);
  double total = 0.0;
  switch (f.type) {
    case PayloadType::kZero:
      total = 0.0;
      break;
    case PayloadType::kDense:
      total = count * vb;
      break;
    case PayloadType::kSparse:
      total = count * (vb + ib);
      break;
    case PayloadType::kLowRank:
      total = count * static_cast<double>(shape.rows + shape.cols + 1) * vb;
      break;
    case PayloadType::kNaturalPacked:
      total = count * 16.0 + (f.indexed ? count * ib : 0.0);
      break;
  }
  return f.send_probability * total;
}

void CheckBits(const BitConfig& bits) {
  if (bits.value_bits != 16 && bits.value_bits != 32) {
    throw ConfigError("value_bits must be 16 or 32");
  }
  if (bits.index_bits < -1) throw ConfigError("index_bits must be >= 0");
}

// Residual-to-total ratio of a truncated spectrum in the given norm,
// squared; alpha = 1 - ratio.
double TruncatedSpectrumRatio(const std::vector<double>& sigma, std::size_t keep,
                              const NormKind& norm) {
  if (sigma.empty() || sigma.front() == 0.0 || keep >= sigma.size()) return 0.0;
  switch (norm.type) {
    case NormType::kSpectral: {
      const double r = sigma[keep] / sigma.front();
      return r * r;
    }
    case NormType::kNuclear: {
      double tail = 0.0;
      double total = 0.0;
      for (std::size_t i = 0; i < sigma.size(); ++i) {
        total += sigma[i];
        if (i >= keep) tail += sigma[i];
      }
      return (tail / total) * (tail / total);
    }
    case NormType::kFrobenius: {
      double tail = 0.0;
      double total = 0.0;
      for (std::size_t i = 0; i < sigma.size(); ++i) {
        const double s2 = (sigma[i] / sigma.front()) * (sigma[i] / sigma.front());
        total += s2;
        if (i >= keep) tail += s2;
      }
      return tail / total;
    }
    case NormType::kSchattenP: {
      double tail = 0.0;
      double total = 0.0;
      for (std::size_t i = 0; i < sigma.size(); ++i) {
        const double sp = std::pow(sigma[i] / sigma.front(), norm.p);
        total += sp;
        if (i >= keep) tail += sp;
      }
      return std::pow(tail / total, 2.0 / norm.p);
    }
    default:
      break;
  }
  throw NoFormulaError("no truncated-svd alpha for norm " + ToString(norm));
}

bool SvdNorm(const NormKind& norm) {
  return norm.type == NormType::kSpectral || norm.type == NormType::kNuclear ||
         norm.type == NormType::kFrobenius || norm.type == NormType::kSchattenP;
}

// Shape-independent formulas; nullopt-like flag when none applies.
bool UniformAlpha(const CompressorKind& kind, Shape shape,
                  const NormKind& norm, double& alpha) {
  switch (kind.type) {
    case CompressorType::kIdentity:
      alpha = 1.0;
      return true;
    case CompressorType::kDamping:
      alpha = 1.0 - (1.0 - kind.gamma) * (1.0 - kind.gamma);
      return true;
    case CompressorType::kRandomDropout:
      alpha = kind.prob;
      return true;
    case CompressorType::kTopK:
      if (norm.type != NormType::kFrobenius) return false;
      alpha = static_cast<double>(TopKCount(kind.fraction, shape)) /
              static_cast<double>(shape.size());
      return true;
    default:
      return false;
  }
}

std::string NoFormulaMessage(const CompressorKind& kind, const NormKind& norm) {
  return "no analytic alpha for " + ToString(kind) + " under " + ToString(norm) +
         "; use estimate_alpha";
}

void PutBytes(std::vector<std::uint8_t>& out, const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  // Little-endian hosts only; the layout is little-endian by definition.
  out.insert(out.end(), b, b + n);
}

template <typename T>
void Put(std::vector<std::uint8_t>& out, T v) {
  PutBytes(out, &v, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}
  template <typename T>
  T Get() {
    if (pos_ + sizeof(T) > bytes_.size()) {
      throw MalformedPayloadError("serialized message is truncated");
    }
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::size_t Remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

void CheckIndices(const std::vector<std::uint64_t>& idx, std::size_t size) {
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= size) throw MalformedPayloadError("index out of range");
    if (k > 0 && idx[k] <= idx[k - 1]) {
      throw MalformedPayloadError("indices must be strictly increasing");
    }
  }
}

void CheckValues(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) throw MalformedPayloadError("non-finite payload value");
  }
}

}  // namespace

CompressorKind CompressorKind::TopK(double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("topk fraction must be in (0, 1]");
  }
  CompressorKind k;
  k.type = CompressorType::kTopK;
  k.fraction = fraction;
  return k;
}

CompressorKind CompressorKind::RankK(double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("rankk fraction must be in (0, 1]");
  }
  CompressorKind k;
  k.type = CompressorType::kRankK;
  k.fraction = fraction;
  return k;
}

CompressorKind CompressorKind::Natural() {
  CompressorKind k;
  k.type = CompressorType::kNatural;
  return k;
}

CompressorKind CompressorKind::TopKSvd(std::size_t count) {
  if (count == 0) throw ConfigError("topksvd count must be >= 1");
  CompressorKind k;
  k.type = CompressorType::kTopKSvd;
  k.k = count;
  return k;
}

CompressorKind CompressorKind::ColumnTopK(double p, std::size_t count) {
  if (!(p >= 1.0)) throw ConfigError("columntopk p must be >= 1");
  if (count == 0) throw ConfigError("columntopk count must be >= 1");
  CompressorKind k;
  k.type = CompressorType::kColumnTopK;
  k.p = p;
  k.k = count;
  return k;
}

CompressorKind CompressorKind::RandomDropout(double prob) {
  if (!(prob > 0.0 && prob <= 1.0)) {
    throw ConfigError("dropout probability must be in (0, 1]");
  }
  CompressorKind k;
  k.type = CompressorType::kRandomDropout;
  k.prob = prob;
  return k;
}

CompressorKind CompressorKind::Damping(double gamma) {
  if (!(gamma > 0.0 && gamma < 2.0)) {
    throw ConfigError("damping gamma must be in (0, 2)");
  }
  CompressorKind k;
  k.type = CompressorType::kDamping;
  k.gamma = gamma;
  return k;
}

CompressorKind CompressorKind::Composed(const CompressorKind& inner,
                                        const CompressorKind& outer) {
  CompressorKind k;
  k.type = CompressorType::kComposed;
  k.inner = std::make_shared<const CompressorKind>(inner);
  k.outer = std::make_shared<const CompressorKind>(outer);
  if (CompositionDepth(k) > 2) {
    throw ConfigError("compressor compositions nest at most 2 deep");
  }
  return k;
}

bool CompressorKind::operator==(const CompressorKind& o) const {
  if (type != o.type) return false;
  switch (type) {
    case CompressorType::kIdentity:
    case CompressorType::kNatural:
      return true;
    case CompressorType::kTopK:
    case CompressorType::kRankK:
      return fraction == o.fraction;
    case CompressorType::kTopKSvd:
      return k == o.k;
    case CompressorType::kColumnTopK:
      return k == o.k && p == o.p;
    case CompressorType::kRandomDropout:
      return prob == o.prob;
    case CompressorType::kDamping:
      return gamma == o.gamma;
    case CompressorType::kComposed:
      return *inner == *o.inner && *outer == *o.outer;
  }
  return false;
}

int CompositionDepth(const CompressorKind& kind) {
  if (kind.type != CompressorType::kComposed) return 0;
  return 1 + std::max(CompositionDepth(*kind.inner),
                      CompositionDepth(*kind.outer));
}

bool IsRandomized(const CompressorKind& kind) {
  switch (kind.type) {
    case CompressorType::kNatural:
    case CompressorType::kRandomDropout:
      return true;
    case CompressorType::kComposed:
      return IsRandomized(*kind.inner) || IsRandomized(*kind.outer);
    default:
      return false;
  }
}

std::string ToString(const CompressorKind& kind) {
  switch (kind.type) {
    case CompressorType::kIdentity: return "identity";
    case CompressorType::kTopK: return "topk:" + FormatNumber(kind.fraction);
    case CompressorType::kRankK: return "rankk:" + FormatNumber(kind.fraction);
    case CompressorType::kNatural: return "natural";
    case CompressorType::kTopKSvd: return "topksvd:" + std::to_string(kind.k);
    case CompressorType::kColumnTopK:
      return "columntopk:" + FormatNumber(kind.p) + ":" + std::to_string(kind.k);
    case CompressorType::kRandomDropout:
      return "dropout:" + FormatNumber(kind.prob);
    case CompressorType::kDamping: return "damping:" + FormatNumber(kind.gamma);
    case CompressorType::kComposed: {
      const std::string outer = ToString(*kind.outer);
      // Right operands that are compositions need grouping.
      const bool group = kind.outer->type == CompressorType::kComposed;
      return ToString(*kind.inner) + "+" + (group ? "(" + outer + ")" : outer);
    }
  }
  return "?";
}

namespace {

CompressorKind ParsePrimitive(const std::string& text) {
  const std::vector<std::string> parts = Split(text, ':');
  const std::string& name = parts[0];
  auto need = [&](std::size_t n) {
    if (parts.size() != n + 1) {
      throw ConfigError("compressor '" + text + "' expects " +
                        std::to_string(n) + " parameter(s)");
    }
  };
  if (name == "identity") {
    need(0);
    return CompressorKind::Identity();
  }
  if (name == "natural") {
    need(0);
    return CompressorKind::Natural();
  }
  if (name == "topk") {
    need(1);
    return CompressorKind::TopK(ParseNumber(parts[1], text));
  }
  if (name == "rankk") {
    need(1);
    return CompressorKind::RankK(ParseNumber(parts[1], text));
  }
  if (name == "topksvd") {
    need(1);
    return CompressorKind::TopKSvd(ParseCount(parts[1], text));
  }
  if (name == "columntopk") {
    need(2);
    return CompressorKind::ColumnTopK(ParseNumber(parts[1], text),
                                      ParseCount(parts[2], text));
  }
  if (name == "dropout") {
    need(1);
    return CompressorKind::RandomDropout(ParseNumber(parts[1], text));
  }
  if (name == "damping") {
    need(1);
    return CompressorKind::Damping(ParseNumber(parts[1], text));
  }
  throw ConfigError("unknown compressor '" + text + "'");
}

// Left-associative '+' chain with optional parentheses.
CompressorKind ParseChain(const std::string& text, std::size_t& pos);

CompressorKind ParseOperand(const std::string& text, std::size_t& pos) {
  if (pos < text.size() && text[pos] == '(') {
    ++pos;
    CompressorKind k = ParseChain(text, pos);
    if (pos >= text.size() || text[pos] != ')') {
      throw ConfigError("unbalanced parentheses in compressor '" + text + "'");
    }
    ++pos;
    return k;
  }
  const std::size_t start = pos;
  while (pos < text.size() && text[pos] != '+' && text[pos] != ')') ++pos;
  return ParsePrimitive(text.substr(start, pos - start));
}

CompressorKind ParseChain(const std::string& text, std::size_t& pos) {
  CompressorKind k = ParseOperand(text, pos);
  while (pos < text.size() && text[pos] == '+') {
    ++pos;
    k = CompressorKind::Composed(k, ParseOperand(text, pos));
  }
  return k;
}

}  // namespace

CompressorKind ParseCompressorKind(const std::string& raw) {
  std::string text;
  for (char c : raw) {
    if (!std::isspace(static_cast<unsigned char>(c))) {
      text += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (text.empty()) throw ConfigError("empty compressor specification");
  std::size_t pos = 0;
  CompressorKind k = ParseChain(text, pos);
  if (pos != text.size()) {
    throw ConfigError("trailing input in compressor '" + raw + "'");
  }
  return k;
}

std::size_t TopKCount(double fraction, Shape shape) {
  const double k = std::round(fraction * static_cast<double>(shape.size()));
  return std::max<std::size_t>(1, std::min(shape.size(), static_cast<std::size_t>(k)));
}

std::size_t RankKCount(double fraction, Shape shape) {
  const std::size_t r = std::min(shape.rows, shape.cols);
  const double k = std::round(fraction * static_cast<double>(r));
  return std::max<std::size_t>(1, std::min(r, static_cast<std::size_t>(k)));
}

bool CompressedMessage::operator==(const CompressedMessage& o) const {
  return Serialize(*this) == Serialize(o) && bit_cost == o.bit_cost;
}

int DefaultIndexBits(Shape shape) {
  int bits = 0;
  while ((std::uint64_t{1} << bits) < shape.size()) ++bits;
  return bits;
}

std::uint64_t BitCost(const CompressedMessage& msg, const BitConfig& bits) {
  CheckBits(bits);
  const std::uint64_t ib = bits.index_bits >= 0
                               ? static_cast<std::uint64_t>(bits.index_bits)
                               : static_cast<std::uint64_t>(DefaultIndexBits(msg.shape));
  const std::uint64_t vb = static_cast<std::uint64_t>(bits.value_bits);
  switch (msg.type) {
    case PayloadType::kZero:
      return 0;
    case PayloadType::kDense:
      return msg.shape.size() * vb;
    case PayloadType::kSparse:
      return msg.values.size() * (vb + ib);
    case PayloadType::kLowRank:
      return msg.sigma.size() * (msg.shape.rows + msg.shape.cols + 1) *
             (msg.natural_factors ? 16 : vb);
    case PayloadType::kNaturalPacked:
      return msg.signs.size() * 16 + (msg.has_indices ? msg.signs.size() * ib : 0);
  }
  throw MalformedPayloadError("unknown payload type");
}

CompressedMessage Compress(const CompressorKind& kind, const Matrix& m, Rng& rng,
                           const BitConfig& bits) {
  CheckBits(bits);
  RequireFinite(m, "compress");
  CompressedMessage msg = CompressImpl(kind, m, rng);
  msg.bit_cost = BitCost(msg, bits);
  return msg;
}

Matrix Decompress(const CompressedMessage& msg) {
  const Shape sh = msg.shape;
  Matrix out(sh.rows, sh.cols);
  switch (msg.type) {
    case PayloadType::kZero:
      return out;
    case PayloadType::kDense:
      if (msg.values.size() != sh.size()) {
        throw MalformedPayloadError("dense payload has the wrong length");
      }
      CheckValues(msg.values);
      for (std::size_t k = 0; k < sh.size(); ++k) out[k] = msg.values[k];
      return out;
    case PayloadType::kSparse:
      if (msg.values.size() != msg.indices.size()) {
        throw MalformedPayloadError("sparse payload index/value mismatch");
      }
      CheckIndices(msg.indices, sh.size());
      CheckValues(msg.values);
      for (std::size_t k = 0; k < msg.values.size(); ++k)
        out[msg.indices[k]] = msg.values[k];
      return out;
    case PayloadType::kLowRank: {
      const std::size_t r = msg.sigma.size();
      if (msg.u.rows() != sh.rows || msg.v.rows() != sh.cols ||
          msg.u.cols() != r || msg.v.cols() != r) {
        throw MalformedPayloadError("low-rank factors do not match the shape");
      }
      CheckValues(msg.sigma);
      CheckValues(msg.u.values());
      CheckValues(msg.v.values());
      for (std::size_t k = 0; k < r; ++k)
        for (std::size_t i = 0; i < sh.rows; ++i) {
          const double us = msg.u(i, k) * msg.sigma[k];
          for (std::size_t j = 0; j < sh.cols; ++j) out(i, j) += us * msg.v(j, k);
        }
      return out;
    }
    case PayloadType::kNaturalPacked: {
      const std::size_t n = msg.signs.size();
      if (msg.exponents.size() != n) {
        throw MalformedPayloadError("natural payload sign/exponent mismatch");
      }
      if (msg.has_indices) {
        if (msg.indices.size() != n) {
          throw MalformedPayloadError("natural payload index count mismatch");
        }
        CheckIndices(msg.indices, sh.size());
      } else if (n != sh.size() || !msg.indices.empty()) {
        throw MalformedPayloadError("dense natural payload has the wrong length");
      }
      for (std::size_t k = 0; k < n; ++k) {
        const std::int8_t s = msg.signs[k];
        if (s < -1 || s > 1) throw MalformedPayloadError("natural sign out of range");
        if (msg.exponents[k] < -1074 || msg.exponents[k] > 1023) {
          throw MalformedPayloadError("natural exponent out of range");
        }
        out[msg.has_indices ? msg.indices[k] : k] =
            NaturalDecode(s, msg.exponents[k]);
      }
      return out;
    }
  }
  throw MalformedPayloadError("unknown payload type");
}

double NaturalRound(double x, Rng& rng) {
  std::int8_t s = 0;
  std::int16_t e = 0;
  NaturalEncode(x, rng, s, e);
  return NaturalDecode(s, e);
}

std::vector<std::uint8_t> Serialize(const CompressedMessage& msg) {
  std::vector<std::uint8_t> out;
  Put<std::uint8_t>(out, static_cast<std::uint8_t>(msg.type));
  Put<std::uint64_t>(out, msg.shape.rows);
  Put<std::uint64_t>(out, msg.shape.cols);
  switch (msg.type) {
    case PayloadType::kZero:
      break;
    case PayloadType::kDense:
      for (double x : msg.values) Put<double>(out, x);
      break;
    case PayloadType::kSparse:
      Put<std::uint64_t>(out, msg.values.size());
      for (std::size_t k = 0; k < msg.values.size(); ++k) {
        Put<std::uint64_t>(out, msg.indices[k]);
        Put<double>(out, msg.values[k]);
      }
      break;
    case PayloadType::kLowRank:
      Put<std::uint64_t>(out, msg.sigma.size());
      Put<std::uint8_t>(out, msg.natural_factors ? 1 : 0);
      for (double x : msg.u.values()) Put<double>(out, x);
      for (double x : msg.sigma) Put<double>(out, x);
      for (double x : msg.v.values()) Put<double>(out, x);
      break;
    case PayloadType::kNaturalPacked:
      Put<std::uint64_t>(out, msg.signs.size());
      Put<std::uint8_t>(out, msg.has_indices ? 1 : 0);
      if (msg.has_indices)
        for (std::uint64_t i : msg.indices) Put<std::uint64_t>(out, i);
      for (std::int8_t s : msg.signs) Put<std::int8_t>(out, s);
      for (std::int16_t e : msg.exponents) Put<std::int16_t>(out, e);
      break;
  }
  return out;
}

CompressedMessage Deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  CompressedMessage msg;
  const std::uint8_t tag = in.Get<std::uint8_t>();
  if (tag > static_cast<std::uint8_t>(PayloadType::kNaturalPacked)) {
    throw MalformedPayloadError("unknown payload tag " + std::to_string(tag));
  }
  msg.type = static_cast<PayloadType>(tag);
  msg.shape.rows = in.Get<std::uint64_t>();
  msg.shape.cols = in.Get<std::uint64_t>();
  // Guard allocations against absurd headers before reading counts.
  auto bounded = [&](std::uint64_t count, std::size_t unit) {
    if (unit != 0 && count > in.Remaining() / unit) {
      throw MalformedPayloadError("serialized message is truncated");
    }
    return static_cast<std::size_t>(count);
  };
  switch (msg.type) {
    case PayloadType::kZero:
      break;
    case PayloadType::kDense: {
      const std::size_t n = bounded(msg.shape.rows * msg.shape.cols, 8);
      msg.values.resize(n);
      for (double& x : msg.values) x = in.Get<double>();
      break;
    }
    case PayloadType::kSparse: {
      const std::size_t n = bounded(in.Get<std::uint64_t>(), 16);
      msg.indices.resize(n);
      msg.values.resize(n);
      for (std::size_t k = 0; k < n; ++k) {
        msg.indices[k] = in.Get<std::uint64_t>();
        msg.values[k] = in.Get<double>();
      }
      break;
    }
    case PayloadType::kLowRank: {
      const std::uint64_t r = in.Get<std::uint64_t>();
      const std::uint8_t flag = in.Get<std::uint8_t>();
      if (flag > 1) throw MalformedPayloadError("bad low-rank flag");
      msg.natural_factors = flag == 1;
      bounded(r * (msg.shape.rows + msg.shape.cols + 1), 8);
      msg.u = Matrix(msg.shape.rows, r);
      msg.sigma.resize(r);
      msg.v = Matrix(msg.shape.cols, r);
      for (std::size_t k = 0; k < msg.u.size(); ++k) msg.u[k] = in.Get<double>();
      for (double& s : msg.sigma) s = in.Get<double>();
      for (std::size_t k = 0; k < msg.v.size(); ++k) msg.v[k] = in.Get<double>();
      break;
    }
    case PayloadType::kNaturalPacked: {
      const std::uint64_t n64 = in.Get<std::uint64_t>();
      const std::uint8_t flag = in.Get<std::uint8_t>();
      if (flag > 1) throw MalformedPayloadError("bad natural index flag");
      msg.has_indices = flag == 1;
      const std::size_t n = bounded(n64, msg.has_indices ? 11 : 3);
      if (msg.has_indices) {
        msg.indices.resize(n);
        for (std::uint64_t& i : msg.indices) i = in.Get<std::uint64_t>();
      }
      msg.signs.resize(n);
      msg.exponents.resize(n);
      for (std::int8_t& s : msg.signs) s = in.Get<std::int8_t>();
      for (std::int16_t& e : msg.exponents) e = in.Get<std::int16_t>();
      break;
    }
  }
  if (in.Remaining() != 0) {
    throw MalformedPayloadError("trailing bytes after serialized message");
  }
  // Structural validation shares the decompression checks.
  Decompress(msg);
  return msg;
}

double PredictBitCost(const CompressorKind& kind, Shape shape,
                      const BitConfig& bits) {
  CheckBits(bits);
  return ForecastBits(Forecast(kind, shape), shape, bits);
}

ContractionReport AnalyticAlpha(const CompressorKind& kind, const Matrix& m,
                                const NormKind& norm) {
  RequireFinite(m, "analytic_alpha");
  ContractionReport rep;
  rep.norm_kind = norm;
  if (UniformAlpha(kind, m.shape(), norm, rep.alpha)) return rep;
  switch (kind.type) {
    case CompressorType::kRankK:
    case CompressorType::kTopKSvd: {
      if (!SvdNorm(norm)) throw NoFormulaError(NoFormulaMessage(kind, norm));
      rep.matrix_dependent = true;
      const std::vector<double> sigma = SingularValues(m);
      rep.alpha = 1.0 - TruncatedSpectrumRatio(
                            sigma, TruncationRank(kind, m.shape()), norm);
      return rep;
    }
    case CompressorType::kColumnTopK: {
      if (norm.type != NormType::kColumnLpq || norm.p != kind.p) {
        throw NoFormulaError(NoFormulaMessage(kind, norm));
      }
      rep.matrix_dependent = true;
      const std::vector<double> c = ColumnNorms(m, kind.p);
      const std::vector<std::uint64_t> kept = TopIndices(c, kind.k);
      std::vector<bool> is_kept(c.size(), false);
      for (std::uint64_t j : kept) is_kept[j] = true;
      const double cmax = c.empty() ? 0.0 : *std::max_element(c.begin(), c.end());
      if (cmax == 0.0) {
        rep.alpha = 1.0;
        return rep;
      }
      if (std::isinf(norm.q)) {
        double tail = 0.0;
        for (std::size_t j = 0; j < c.size(); ++j)
          if (!is_kept[j]) tail = std::max(tail, c[j]);
        rep.alpha = 1.0 - (tail / cmax) * (tail / cmax);
        return rep;
      }
      double tail = 0.0;
      double total = 0.0;
      for (std::size_t j = 0; j < c.size(); ++j) {
        const double cq = std::pow(c[j] / cmax, norm.q);
        total += cq;
        if (!is_kept[j]) tail += cq;
      }
      rep.alpha = 1.0 - std::pow(tail / total, 2.0 / norm.q);
      return rep;
    }
    default:
      break;
  }
  throw NoFormulaError(NoFormulaMessage(kind, norm));
}

ContractionReport AnalyticAlpha(const CompressorKind& kind, Shape shape,
                                const NormKind& norm) {
  ContractionReport rep;
  rep.norm_kind = norm;
  if (UniformAlpha(kind, shape, norm, rep.alpha)) return rep;
  if (kind.type == CompressorType::kRankK || kind.type == CompressorType::kTopKSvd ||
      kind.type == CompressorType::kColumnTopK) {
    throw NoFormulaError("alpha of " + ToString(kind) +
                         " depends on the matrix, not only its shape");
  }
  throw NoFormulaError(NoFormulaMessage(kind, norm));
}

ContractionReport EstimateAlpha(const CompressorKind& kind, const NormKind& norm,
                                const MatrixSampler& sampler,
                                std::size_t samples, std::size_t trials,
                                Rng& rng) {
  if (trials < 100) throw ConfigError("estimate_alpha needs trials >= 100");
  if (samples == 0) throw ConfigError("estimate_alpha needs samples >= 1");
  const bool randomized = IsRandomized(kind);
  ContractionReport rep;
  rep.norm_kind = norm;
  double worst = -1.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const Matrix x = sampler(rng);
    const double nx = Norm(x, norm);
    if (nx == 0.0) continue;
    const std::size_t draws = randomized ? trials : 1;
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t t = 0; t < draws; ++t) {
      const double e = Norm(Decompress(Compress(kind, x, rng)) - x, norm) / nx;
      sum += e * e;
      sum_sq += e * e * e * e;
    }
    const double mean = sum / static_cast<double>(draws);
    if (mean > worst) {
      worst = mean;
      double se = 0.0;
      if (draws > 1) {
        const double var =
            std::max(0.0, (sum_sq - draws * mean * mean) / (draws - 1.0));
        se = std::sqrt(var / static_cast<double>(draws));
      }
      rep.standard_error = se;
    }
  }
  if (worst < 0.0) throw ConfigError("estimate_alpha: every sample was zero");
  rep.alpha = 1.0 - worst;
  return rep;
}

}  // namespace ef21
