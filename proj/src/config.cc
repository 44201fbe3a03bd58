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

#include "ef21muon/config.h"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "CLI11.hpp"
#include "ef21muon/error.h"

namespace ef21 {
namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> SplitList(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

double ToDouble(const std::string& text) {
  const std::string t = Trim(text);
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw ConfigError("'" + text + "' is not a number");
  }
  return v;
}

std::uint64_t ToU64(const std::string& text) {
  const std::string t = Trim(text);
  std::uint64_t v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw ConfigError("'" + text + "' is not a nonnegative integer");
  }
  return v;
}

bool ToBool(const std::string& text) {
  const std::string t = Trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError("'" + text + "' is not a boolean");
}

std::vector<double> ToDoubles(const std::string& text) {
  std::vector<double> out;
  for (const std::string& s : SplitList(text)) out.push_back(ToDouble(s));
  return out;
}

// Shortest text that parses back to the same double.
std::string Num(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string Nums(const std::vector<double>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? "," : "") + Num(v[k]);
  return out;
}

template <typename T, typename F>
std::string Join(const std::vector<T>& v, F fn) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? "," : "") + fn(v[k]);
  return out;
}

std::string Optional(const std::optional<double>& v) {
  return v ? Num(*v) : "auto";
}

std::optional<double> ToOptional(const std::string& text) {
  if (Trim(text) == "auto") return std::nullopt;
  return ToDouble(text);
}

template <typename E>
struct EnumText {
  E value;
  const char* text;
};

template <typename E, std::size_t N>
E ParseEnum(const EnumText<E> (&table)[N], const std::string& text) {
  for (const auto& e : table) {
    if (Trim(text) == e.text) return e.value;
  }
  std::string allowed;
  for (const auto& e : table) allowed += std::string(allowed.empty() ? "" : "|") + e.text;
  throw ConfigError("'" + text + "' is not one of " + allowed);
}

template <typename E, std::size_t N>
std::string EnumString(const EnumText<E> (&table)[N], E v) {
  for (const auto& e : table) {
    if (e.value == v) return e.text;
  }
  return "?";
}

const EnumText<ObjectiveType> kObjectiveTypes[] = {
    {ObjectiveType::kQuadratic, "quadratic"},
    {ObjectiveType::kMlp, "mlp"},
    {ObjectiveType::kDivergence, "divergence"}};
const EnumText<StartPolicy> kStarts[] = {{StartPolicy::kDefault, "default"},
                                         {StartPolicy::kRandom, "random"},
                                         {StartPolicy::kZeros, "zeros"}};
const EnumText<SeedPolicy> kSeedPolicies[] = {{SeedPolicy::kShared, "shared"},
                                              {SeedPolicy::kDerived, "derived"}};
const EnumText<LyapunovMode> kLyapunovModes[] = {
    {LyapunovMode::kAuto, "auto"},
    {LyapunovMode::kNone, "none"},
    {LyapunovMode::kT1, "t1"},
    {LyapunovMode::kT2, "t2"}};
const EnumText<SmoothnessSource> kSmoothness[] = {
    {SmoothnessSource::kExact, "exact"},
    {SmoothnessSource::kEstimate, "estimate"}};
const EnumText<SpectralBackend> kBackends[] = {
    {SpectralBackend::kExactSvd, "svd"},
    {SpectralBackend::kNewtonSchulz, "newton_schulz"}};

struct KeyHandler {
  ConfigKey doc;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string ShapeText(const Shape& s) {
  return std::to_string(s.rows) + "x" + std::to_string(s.cols);
}

const std::vector<KeyHandler>& Handlers() {
  static const std::vector<KeyHandler> handlers = {
      {{"model.shapes", "layer shapes, e.g. 4x3,3x3 or 768x768*4"},
       [](RunConfig& c, const std::string& v) { c.model.shapes = ParseShapes(v); },
       [](const RunConfig& c) { return Join(c.model.shapes, ShapeText); }},
      {{"model.norms", "layer norms; one value applies to every layer"},
       [](RunConfig& c, const std::string& v) {
         c.model.norms.clear();
         for (const std::string& s : SplitList(v)) {
           c.model.norms.push_back(ParseNormKind(s));
         }
       },
       [](const RunConfig& c) {
         return Join(c.model.norms,
                     [](const NormKind& k) { return ToString(k); });
       }},

      {{"objective.type", "quadratic | mlp | divergence (default quadratic)"},
       [](RunConfig& c, const std::string& v) {
         c.objective.type = ParseEnum(kObjectiveTypes, v);
       },
       [](const RunConfig& c) {
         return EnumString(kObjectiveTypes, c.objective.type);
       }},
      {{"objective.workers", "number of workers n (default 1)"},
       [](RunConfig& c, const std::string& v) {
         c.objective.num_workers = ToU64(v);
       },
       [](const RunConfig& c) { return std::to_string(c.objective.num_workers); }},
      {{"objective.seed", "seed of the instance data and X0 (default 1)"},
       [](RunConfig& c, const std::string& v) { c.objective.seed = ToU64(v); },
       [](const RunConfig& c) { return std::to_string(c.objective.seed); }},
      {{"objective.heterogeneity", "quadratic center spread across workers (default 0)"},
       [](RunConfig& c, const std::string& v) {
         c.objective.heterogeneity = ToDouble(v);
       },
       [](const RunConfig& c) { return Num(c.objective.heterogeneity); }},
      {{"objective.conditioning", "quadratic Hessian condition number (default 1)"},
       [](RunConfig& c, const std::string& v) {
         c.objective.conditioning = ToDouble(v);
       },
       [](const RunConfig& c) { return Num(c.objective.conditioning); }},
      {{"objective.scale", "quadratic Hessian scale (default 1)"},
       [](RunConfig& c, const std::string& v) { c.objective.scale = ToDouble(v); },
       [](const RunConfig& c) { return Num(c.objective.scale); }},
      {{"objective.noise_sigma", "per-layer gradient noise; empty for none"},
       [](RunConfig& c, const std::string& v) {
         c.objective.noise_sigma = ToDoubles(v);
       },
       [](const RunConfig& c) { return Nums(c.objective.noise_sigma); }},
      {{"objective.dataset_size", "MLP samples (default 64)"},
       [](RunConfig& c, const std::string& v) {
         c.objective.dataset_size = ToU64(v);
       },
       [](const RunConfig& c) { return std::to_string(c.objective.dataset_size); }},
      {{"objective.label_noise", "MLP teacher label noise (default 0.1)"},
       [](RunConfig& c, const std::string& v) {
         c.objective.label_noise = ToDouble(v);
       },
       [](const RunConfig& c) { return Num(c.objective.label_noise); }},
      {{"objective.batch_size", "MLP minibatch; 0 for the full shard"},
       [](RunConfig& c, const std::string& v) {
         c.objective.batch_size = ToU64(v);
       },
       [](const RunConfig& c) { return std::to_string(c.objective.batch_size); }},
      {{"objective.dataset", "MLP dataset CSV; empty for a synthetic teacher"},
       [](RunConfig& c, const std::string& v) {
         c.objective.dataset_path = Trim(v);
       },
       [](const RunConfig& c) { return c.objective.dataset_path; }},
      {{"objective.start", "default | random | zeros"},
       [](RunConfig& c, const std::string& v) {
         c.objective.start = ParseEnum(kStarts, v);
       },
       [](const RunConfig& c) { return EnumString(kStarts, c.objective.start); }},
      {{"objective.start_scale", "scale of a random X0 (default 1)"},
       [](RunConfig& c, const std::string& v) {
         c.objective.start_scale = ToDouble(v);
       },
       [](const RunConfig& c) { return Num(c.objective.start_scale); }},

      {{"optimizer.hyper", "manual | t1 | t2 | t3 | t4 (default manual)"},
       [](RunConfig& c, const std::string& v) {
         if (Trim(v) == "manual") {
           c.theorem.reset();
         } else {
           c.theorem = ParseTheorem(Trim(v));
         }
       },
       [](const RunConfig& c) {
         return c.theorem ? ToString(*c.theorem) : std::string("manual");
       }},
      {{"optimizer.schedule", "radius | stepsize (default radius)"},
       [](RunConfig& c, const std::string& v) {
         c.hp.schedule = ParseScheduleType(Trim(v));
       },
       [](const RunConfig& c) { return ToString(c.hp.schedule); }},
      {{"optimizer.rate", "radius or stepsize per layer (default 0.1)"},
       [](RunConfig& c, const std::string& v) { c.hp.rate = ToDoubles(v); },
       [](const RunConfig& c) { return Nums(c.hp.rate); }},
      {{"optimizer.beta", "momentum per layer in (0, 1] (default 1)"},
       [](RunConfig& c, const std::string& v) { c.hp.beta = ToDoubles(v); },
       [](const RunConfig& c) { return Nums(c.hp.beta); }},
      {{"optimizer.variant", "deterministic | stochastic | no_error_feedback"},
       [](RunConfig& c, const std::string& v) {
         c.hp.variant = ParseVariant(Trim(v));
       },
       [](const RunConfig& c) { return ToString(c.hp.variant); }},
      {{"optimizer.init", "default | exact | stochastic | compressed_stochastic"},
       [](RunConfig& c, const std::string& v) { c.init = ParseInitPolicy(Trim(v)); },
       [](const RunConfig& c) { return ToString(c.init); }},
      {{"optimizer.eta", "theory radius scale per layer; empty for the default"},
       [](RunConfig& c, const std::string& v) { c.eta = ToDoubles(v); },
       [](const RunConfig& c) { return Nums(c.eta); }},
      {{"optimizer.alpha_p", "server contraction override or auto"},
       [](RunConfig& c, const std::string& v) { c.alpha_p = ToOptional(v); },
       [](const RunConfig& c) { return Optional(c.alpha_p); }},
      {{"optimizer.alpha_d", "worker contraction override or auto"},
       [](RunConfig& c, const std::string& v) { c.alpha_d = ToOptional(v); },
       [](const RunConfig& c) { return Optional(c.alpha_d); }},
      {{"optimizer.smoothness", "exact | estimate (default exact)"},
       [](RunConfig& c, const std::string& v) {
         c.smoothness = ParseEnum(kSmoothness, v);
       },
       [](const RunConfig& c) { return EnumString(kSmoothness, c.smoothness); }},
      {{"optimizer.lyapunov", "auto | none | t1 | t2 (default auto)"},
       [](RunConfig& c, const std::string& v) {
         c.lyapunov = ParseEnum(kLyapunovModes, v);
       },
       [](const RunConfig& c) { return EnumString(kLyapunovModes, c.lyapunov); }},
      {{"optimizer.backend", "svd | newton_schulz (default svd)"},
       [](RunConfig& c, const std::string& v) {
         c.hp.lmo.backend = ParseEnum(kBackends, v);
       },
       [](const RunConfig& c) { return EnumString(kBackends, c.hp.lmo.backend); }},
      {{"optimizer.ns_iterations", "Newton-Schulz steps (default 5)"},
       [](RunConfig& c, const std::string& v) {
         c.hp.lmo.newton_schulz.iterations = static_cast<int>(ToU64(v));
       },
       [](const RunConfig& c) {
         return std::to_string(c.hp.lmo.newton_schulz.iterations);
       }},

      {{"compressors.server", "server (downlink) compressor (default identity)"},
       [](RunConfig& c, const std::string& v) {
         c.hp.server_compressor = ParseCompressorKind(Trim(v));
       },
       [](const RunConfig& c) { return ToString(c.hp.server_compressor); }},
      {{"compressors.worker", "worker (uplink) compressor (default identity)"},
       [](RunConfig& c, const std::string& v) {
         c.hp.worker_compressor = ParseCompressorKind(Trim(v));
       },
       [](const RunConfig& c) { return ToString(c.hp.worker_compressor); }},
      {{"compressors.value_bits", "16 or 32 (default 32)"},
       [](RunConfig& c, const std::string& v) {
         const std::uint64_t b = ToU64(v);
         if (b != 16 && b != 32) throw ConfigError("value bits must be 16 or 32");
         c.hp.bits.value_bits = static_cast<int>(b);
       },
       [](const RunConfig& c) { return std::to_string(c.hp.bits.value_bits); }},
      {{"compressors.index_bits", "bits per sparse index or auto"},
       [](RunConfig& c, const std::string& v) {
         c.hp.bits.index_bits =
             Trim(v) == "auto" ? -1 : static_cast<int>(ToU64(v));
       },
       [](const RunConfig& c) {
         return c.hp.bits.index_bits < 0 ? std::string("auto")
                                         : std::to_string(c.hp.bits.index_bits);
       }},
      {{"compressors.account", "compressors priced by account; empty for the table"},
       [](RunConfig& c, const std::string& v) {
         c.account.clear();
         for (const std::string& s : SplitList(v)) {
           c.account.push_back(ParseCompressorKind(s));
         }
       },
       [](const RunConfig& c) {
         return Join(c.account,
                     [](const CompressorKind& k) { return ToString(k); });
       }},

      {{"harness.rounds", "number of rounds K (default 100)"},
       [](RunConfig& c, const std::string& v) { c.rounds = ToU64(v); },
       [](const RunConfig& c) { return std::to_string(c.rounds); }},
      {{"harness.seed", "master seed of the algorithm streams (default 0)"},
       [](RunConfig& c, const std::string& v) { c.seed = ToU64(v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {{"harness.record_every", "metric cadence in rounds (default 1)"},
       [](RunConfig& c, const std::string& v) {
         c.record_every = ToU64(v);
         if (c.record_every == 0) throw ConfigError("record_every must be >= 1");
       },
       [](const RunConfig& c) { return std::to_string(c.record_every); }},
      {{"harness.threads", "worker threads; 0 reads MUON_EF_THREADS"},
       [](RunConfig& c, const std::string& v) { c.threads = ToU64(v); },
       [](const RunConfig& c) { return std::to_string(c.threads); }},
      {{"harness.thresholds", "gradient-norm thresholds for crossing rounds"},
       [](RunConfig& c, const std::string& v) { c.thresholds = ToDoubles(v); },
       [](const RunConfig& c) { return Nums(c.thresholds); }},
      {{"harness.seed_policy", "shared | derived seeds across sweep values"},
       [](RunConfig& c, const std::string& v) {
         c.seed_policy = ParseEnum(kSeedPolicies, v);
       },
       [](const RunConfig& c) { return EnumString(kSeedPolicies, c.seed_policy); }},
      {{"harness.log_messages", "keep the canonical message log (default false)"},
       [](RunConfig& c, const std::string& v) { c.log_messages = ToBool(v); },
       [](const RunConfig& c) {
         return std::string(c.log_messages ? "true" : "false");
       }},
      {{"harness.track_alpha", "record the smallest analytic contraction seen"},
       [](RunConfig& c, const std::string& v) { c.track_alpha = ToBool(v); },
       [](const RunConfig& c) {
         return std::string(c.track_alpha ? "true" : "false");
       }},

      {{"output.dir", "directory for metrics.csv and summary.json"},
       [](RunConfig& c, const std::string& v) { c.output_dir = Trim(v); },
       [](const RunConfig& c) { return c.output_dir; }},
  };
  return handlers;
}

const KeyHandler* Find(const std::string& key) {
  for (const KeyHandler& h : Handlers()) {
    if (h.doc.key == key) return &h;
  }
  return nullptr;
}

}  // namespace

const std::vector<ConfigKey>& ConfigKeys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const KeyHandler& h : Handlers()) out.push_back(h.doc);
    return out;
  }();
  return keys;
}

bool IsConfigKey(const std::string& key) { return Find(key) != nullptr; }

void ApplySetting(RunConfig& config, const std::string& key,
                  const std::string& value) {
  const KeyHandler* h = Find(key);
  if (!h) throw ConfigError("unknown config key '" + key + "'");
  // The canonical echo writes empty values as "".
  const bool quoted =
      value.size() >= 2 && value.front() == '"' && value.back() == '"';
  try {
    h->set(config, quoted ? value.substr(1, value.size() - 2) : value);
  } catch (const Error& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

std::string GetSetting(const RunConfig& config, const std::string& key) {
  const KeyHandler* h = Find(key);
  if (!h) throw ConfigError("unknown config key '" + key + "'");
  return h->get(config);
}

std::vector<Shape> ParseShapes(const std::string& text) {
  std::vector<Shape> out;
  for (const std::string& item : SplitList(text)) {
    std::string body = item;
    std::uint64_t repeat = 1;
    if (const auto star = item.find('*'); star != std::string::npos) {
      body = item.substr(0, star);
      repeat = ToU64(item.substr(star + 1));
    }
    const auto x = body.find('x');
    if (x == std::string::npos) {
      throw ConfigError("shape '" + item + "' is not of the form RxC");
    }
    const Shape s{ToU64(body.substr(0, x)), ToU64(body.substr(x + 1))};
    if (s.rows == 0 || s.cols == 0 || repeat == 0) {
      throw ConfigError("shape '" + item + "' has a zero dimension");
    }
    for (std::uint64_t r = 0; r < repeat; ++r) out.push_back(s);
  }
  return out;
}

RunConfig ParseConfig(const std::string& text) {
  std::istringstream in(text);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  RunConfig config;
  for (const CLI::ConfigItem& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    std::string key;
    for (const std::string& p : item.parents) key += p + ".";
    key += item.name;
    if (item.parents.size() != 1) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    std::string value;
    for (std::size_t k = 0; k < item.inputs.size(); ++k) {
      value += (k ? "," : "") + item.inputs[k];
    }
    ApplySetting(config, key, value);
  }
  return config;
}

RunConfig LoadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseConfig(ss.str());
}

std::string CanonicalConfig(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const KeyHandler& h : Handlers()) {
    const auto dot = h.doc.key.find('.');
    const std::string sec = h.doc.key.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + sec + "]\n";
      section = sec;
    }
    const std::string value = h.get(config);
    out += h.doc.key.substr(dot + 1) + " = " +
           (value.empty() ? std::string("\"\"") : value) + "\n";
  }
  return out;
}

}  // namespace ef21
