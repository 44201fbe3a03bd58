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

// Command line front end: run, sweep, verify and account.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime error, 4 failed
// verification check.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ef21muon/config.h"
#include "ef21muon/error.h"
#include "ef21muon/harness.h"
#include "ef21muon/verify.h"

namespace {

namespace fs = std::filesystem;
using namespace ef21;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitCheckFailed = 4;

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

void AddCommon(CLI::App* cmd, CommonFlags& flags, bool config_required) {
  auto* c = cmd->add_option("--config", flags.config_path, "INI config file");
  if (config_required) c->required();
  cmd->add_option("--set", flags.overrides,
                  "KEY=VALUE override, e.g. harness.rounds=10 (repeatable)");
  cmd->add_option("--out", flags.out_dir, "output directory (output.dir)");
  cmd->add_option("--seed", flags.seed, "master seed (harness.seed)");
}

RunConfig BuildConfig(const CommonFlags& flags) {
  RunConfig config;
  if (!flags.config_path.empty()) config = LoadConfig(flags.config_path);
  for (const std::string& kv : flags.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + kv + "' is not KEY=VALUE");
    }
    ApplySetting(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!flags.out_dir.empty()) config.output_dir = flags.out_dir;
  if (flags.seed) config.seed = *flags.seed;
  return config;
}

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write '" + path.string() + "'");
}

void WriteRun(const RunResult& result, const fs::path& dir) {
  fs::create_directories(dir);
  WriteFile(dir / "metrics.csv", MetricsCsv(result));
  WriteFile(dir / "summary.json", SummaryJson(result));
  if (!result.message_log.empty()) {
    WriteFile(dir / "messages.bin",
              std::string(result.message_log.begin(), result.message_log.end()));
  }
}

int CmdRun(const CommonFlags& flags, bool print_config) {
  const RunConfig config = BuildConfig(flags);
  if (print_config) {
    std::cout << CanonicalConfig(config);
    return kExitOk;
  }
  const RunResult result = Run(config);
  WriteRun(result, config.output_dir);
  for (const std::string& w : result.warnings) {
    std::cerr << "warning: " << w << "\n";
  }
  std::printf("rounds %zu  f %.10g  grad %.6g  min_grad %.6g  seed %llu\n",
              config.rounds, result.summary.final_f, result.summary.final_grad,
              result.summary.min_grad,
              static_cast<unsigned long long>(result.seed));
  std::printf("wrote %s\n", config.output_dir.c_str());
  return kExitOk;
}

std::vector<std::string> SplitValues(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto semi = text.find(';', start);
    out.push_back(text.substr(start, semi - start));
    if (semi == std::string::npos) break;
    start = semi + 1;
  }
  return out;
}

int CmdSweep(const CommonFlags& flags, const std::string& axis,
             const std::string& values_text) {
  const RunConfig base = BuildConfig(flags);
  const std::vector<std::string> values = SplitValues(values_text);
  const std::vector<RunResult> results = Sweep(base, axis, values);
  const fs::path dir = base.output_dir;
  fs::create_directories(dir);
  std::string index =
      "index,value,seed,final_f,final_grad,min_grad,uplink_bits,downlink_bits\n";
  char buf[256];
  for (std::size_t i = 0; i < results.size(); ++i) {
    const RunResult& r = results[i];
    WriteRun(r, dir / ("run_" + std::to_string(i)));
    std::snprintf(buf, sizeof(buf), ",%llu,%.17g,%.17g,%.17g,%llu,%llu\n",
                  static_cast<unsigned long long>(r.seed), r.summary.final_f,
                  r.summary.final_grad, r.summary.min_grad,
                  static_cast<unsigned long long>(r.ledger.uplink_total()),
                  static_cast<unsigned long long>(r.ledger.downlink_total()));
    index += std::to_string(i) + ",\"" + values[i] + "\"" + buf;
  }
  WriteFile(dir / "sweep.csv", index);
  std::cout << index;
  return kExitOk;
}

int CmdVerify(const CommonFlags& flags, const std::string& suite,
              bool inject_fault) {
  const VerifySuite s = ParseVerifySuite(suite);
  const std::uint64_t seed = flags.seed.value_or(1);
  const std::vector<CheckReport> reports = RunVerifySuite(s, seed, inject_fault);
  const std::string json = ToJson(reports);
  std::cout << json << "\n";
  if (!flags.out_dir.empty()) {
    fs::create_directories(flags.out_dir);
    WriteFile(fs::path(flags.out_dir) / "verify.json", json + "\n");
  }
  bool ok = true;
  for (const CheckReport& r : reports) {
    std::cerr << (r.passed ? "PASS " : "FAIL ") << r.name << "  residual "
              << r.worst_residual << " (tol " << r.tolerance << ")\n";
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitCheckFailed;
}

int CmdAccount(const CommonFlags& flags) {
  const RunConfig config = BuildConfig(flags);
  std::cout << AccountTable(Account(config));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EF21-Muon simulator: distributed LMO optimization with "
               "bidirectional compression and error feedback"};
  app.require_subcommand(1);

  CommonFlags run_flags, sweep_flags, verify_flags, account_flags;
  bool print_config = false;
  std::string axis, values, suite = "all";
  bool inject_fault = false;

  CLI::App* run = app.add_subcommand("run", "run one configuration");
  AddCommon(run, run_flags, true);
  run->add_flag("--print-config", print_config,
                "print the canonical config and exit");

  CLI::App* sweep = app.add_subcommand("sweep", "one run per axis value");
  AddCommon(sweep, sweep_flags, true);
  sweep->add_option("--axis", axis, "config key to vary")->required();
  sweep->add_option("--values", values, "';'-separated values")->required();

  CLI::App* verify = app.add_subcommand("verify", "run verification suites");
  AddCommon(verify, verify_flags, false);
  verify->add_option("--suite", suite,
                     "identities, compressors, convergence or all");
  verify->add_flag("--inject-fault", inject_fault,
                   "plant known faults; the suite must then fail");

  CLI::App* account =
      app.add_subcommand("account", "relative per-round communication cost");
  AddCommon(account, account_flags, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) return CmdRun(run_flags, print_config);
    if (sweep->parsed()) return CmdSweep(sweep_flags, axis, values);
    if (verify->parsed()) return CmdVerify(verify_flags, suite, inject_fault);
    if (account->parsed()) return CmdAccount(account_flags);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UnknownAxisError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const MissingConstantError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UnknownFStarError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}
