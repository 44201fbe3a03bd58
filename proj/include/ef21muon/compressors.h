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

#ifndef EF21MUON_COMPRESSORS_H_
#define EF21MUON_COMPRESSORS_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ef21muon/matrix.h"
#include "ef21muon/norms.h"
#include "ef21muon/rng.h"

namespace ef21 {

enum class CompressorType {
  kIdentity,
  kTopK,           // fraction of entries by magnitude
  kRankK,          // fraction of min(rows, cols) singular triplets
  kNatural,        // unbiased power-of-two rounding
  kTopKSvd,        // fixed count of singular triplets
  kColumnTopK,     // k columns with the largest l_p norm
  kRandomDropout,  // the whole matrix with probability `prob`, else zero
  kDamping,        // gamma * X
  kComposed,       // outer applied after inner
};

struct CompressorKind {
  CompressorType type = CompressorType::kIdentity;
  double fraction = 1.0;
  std::size_t k = 1;
  double p = 2.0;
  double prob = 1.0;
  double gamma = 1.0;
  std::shared_ptr<const CompressorKind> inner;
  std::shared_ptr<const CompressorKind> outer;

  static CompressorKind Identity() { return {}; }
  // Factories validate their parameters and throw ConfigError.
  static CompressorKind TopK(double fraction);
  static CompressorKind RankK(double fraction);
  static CompressorKind Natural();
  static CompressorKind TopKSvd(std::size_t k);
  static CompressorKind ColumnTopK(double p, std::size_t k);
  static CompressorKind RandomDropout(double prob);
  static CompressorKind Damping(double gamma);
  // Nesting depth (number of stacked compositions) is at most 2.
  static CompressorKind Composed(const CompressorKind& inner,
                                 const CompressorKind& outer);

  bool operator==(const CompressorKind& o) const;
  bool operator!=(const CompressorKind& o) const { return !(*this == o); }
};

// Number of stacked compositions; 0 for primitive kinds.
int CompositionDepth(const CompressorKind& kind);
// True when compress() consumes the random stream.
bool IsRandomized(const CompressorKind& kind);

// Text forms: identity, topk:0.25, rankk:0.1, natural, topksvd:2,
// columntopk:2:3, dropout:0.3, damping:0.5, and inner+outer for
// compositions (left-associative, e.g. "topk:0.2+natural").
std::string ToString(const CompressorKind& kind);
CompressorKind ParseCompressorKind(const std::string& text);

// Entries kept by TopK on `shape`: round(fraction * size), at least 1.
std::size_t TopKCount(double fraction, Shape shape);
// Triplets kept by RankK: round(fraction * min(rows, cols)), at least 1.
std::size_t RankKCount(double fraction, Shape shape);

enum class PayloadType : std::uint8_t {
  kZero = 0,
  kDense = 1,
  kSparse = 2,
  kLowRank = 3,
  kNaturalPacked = 4,
};

// A compressed matrix. Only the fields of the active payload are used:
//   kDense          values (row-major, rows * cols)
//   kSparse         indices (ascending row-major), values
//   kLowRank        u (rows x r), sigma (r), v (cols x r); natural_factors
//                   marks factors already rounded to powers of two
//   kNaturalPacked  signs, exponents (value = sign * 2^exponent) and, when
//                   has_indices, the row-major indices they belong to
struct CompressedMessage {
  PayloadType type = PayloadType::kZero;
  Shape shape;
  std::vector<double> values;
  std::vector<std::uint64_t> indices;
  Matrix u;
  std::vector<double> sigma;
  Matrix v;
  bool natural_factors = false;
  std::vector<std::int8_t> signs;
  std::vector<std::int16_t> exponents;
  bool has_indices = false;
  std::uint64_t bit_cost = 0;

  bool operator==(const CompressedMessage& o) const;
};

struct BitConfig {
  int value_bits = 32;   // 16 or 32
  int index_bits = -1;   // -1: ceil(log2(rows * cols))
};

// ceil(log2(n)) for n >= 1.
int DefaultIndexBits(Shape shape);

// Bits on the wire for `msg`:
//   Dense          rows * cols * value_bits
//   Sparse         nnz * (value_bits + index_bits)
//   LowRank        r * (rows + cols + 1) * value_bits (16 when natural)
//   NaturalPacked  count * 16, plus count * index_bits when indexed
//   Zero           0
std::uint64_t BitCost(const CompressedMessage& msg, const BitConfig& bits = {});

// Applies `kind` to m. Randomized kinds draw from rng; the output is a
// deterministic function of (kind, m, rng state). msg.bit_cost is filled
// using `bits`.
CompressedMessage Compress(const CompressorKind& kind, const Matrix& m,
                           Rng& rng, const BitConfig& bits = {});

// Dense reconstruction. Throws MalformedPayloadError on inconsistent
// payloads.
Matrix Decompress(const CompressedMessage& msg);

// Unbiased randomized rounding of x to a signed power of two.
double NaturalRound(double x, Rng& rng);

// Canonical little-endian byte form: tag byte, rows and cols as u64, then
// the payload (see README). Deserialize throws MalformedPayloadError.
std::vector<std::uint8_t> Serialize(const CompressedMessage& msg);
CompressedMessage Deserialize(const std::vector<std::uint8_t>& bytes);

// Bit cost predicted from the shape alone. Exact for deterministic kinds;
// for dropout it is the expectation over the coin.
double PredictBitCost(const CompressorKind& kind, Shape shape,
                      const BitConfig& bits = {});

struct ContractionReport {
  double alpha = 1.0;
  bool matrix_dependent = false;
  NormKind norm_kind;
  // Standard error of 1 - alpha for estimates; 0 for analytic values.
  double standard_error = 0.0;
};

// Closed-form contraction parameter. Throws NoFormulaError when the pair
// has no known formula (Natural, compositions, TopK outside Frobenius,
// ColumnTopK outside column norms with the same p, ...).
ContractionReport AnalyticAlpha(const CompressorKind& kind, const Matrix& m,
                                const NormKind& norm);
// Shape-only variant; matrix-dependent kinds throw NoFormulaError.
ContractionReport AnalyticAlpha(const CompressorKind& kind, Shape shape,
                                const NormKind& norm);

using MatrixSampler = std::function<Matrix(Rng&)>;

// 1 - max over `samples` matrices of the mean of ||C(X) - X||^2 / ||X||^2
// over `trials` compressor draws. Throws ConfigError when trials < 100.
ContractionReport EstimateAlpha(const CompressorKind& kind,
                                const NormKind& norm,
                                const MatrixSampler& sampler,
                                std::size_t samples, std::size_t trials,
                                Rng& rng);

}  // namespace ef21

#endif  // EF21MUON_COMPRESSORS_H_
