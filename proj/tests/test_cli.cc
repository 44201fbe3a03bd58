#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "ef21muon/config.h"
#include "ef21muon/harness.h"

using namespace ef21;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void Spit(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

class Sandbox {
 public:
  Sandbox() {
    static int counter = 0;
    dir_ = fs::temp_directory_path() /
           ("muon_ef_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~Sandbox() { fs::remove_all(dir_); }
  const fs::path& dir() const { return dir_; }
  fs::path operator/(const std::string& name) const { return dir_ / name; }

  Result Cli(const std::string& args) const {
    const fs::path out = dir_ / "stdout.txt";
    const fs::path err = dir_ / "stderr.txt";
    const std::string cmd = std::string("\"") + MUON_EF_BINARY + "\" " + args +
                            " >\"" + out.string() + "\" 2>\"" + err.string() +
                            "\"";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = Slurp(out);
    r.err = Slurp(err);
    return r;
  }

 private:
  fs::path dir_;
};

const char kMinimal[] =
    "[model]\n"
    "shapes = 4x3,3x3\n"
    "norms = spectral\n"
    "\n"
    "[objective]\n"
    "workers = 2\n"
    "heterogeneity = 0.5\n"
    "\n"
    "[harness]\n"
    "rounds = 100\n";

std::map<std::string, double> ParseAccount(const std::string& text) {
  std::map<std::string, double> out;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto a = line.find(',');
    const auto b = line.rfind(',');
    out[line.substr(0, a)] = std::stod(line.substr(b + 1));
  }
  return out;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("minimal config runs and writes two files") {
  Sandbox s;
  Spit(s / "min.ini", kMinimal);
  const Result r =
      s.Cli("run --config " + (s / "min.ini").string() + " --out " +
            (s / "out").string());
  CHECK(r.code == 0);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(s / "out")) {
    files.push_back(e.path().filename().string());
  }
  std::sort(files.begin(), files.end());
  CHECK(files == std::vector<std::string>{"metrics.csv", "summary.json"});
  const auto j = nlohmann::json::parse(Slurp(s / "out" / "summary.json"));
  CHECK(j.contains("seed"));
  CHECK(j["config"].get<std::string>().find("rounds = 100") !=
        std::string::npos);
}

TEST_CASE("unknown key exits 2 naming the key") {
  Sandbox s;
  Spit(s / "bad.ini", std::string(kMinimal) + "\n[optimiser]\nbeta = 0.5\n");
  Result r = s.Cli("run --config " + (s / "bad.ini").string());
  CHECK(r.code == 2);
  CHECK(r.err.find("optimiser.beta") != std::string::npos);

  Spit(s / "min.ini", kMinimal);
  r = s.Cli("run --config " + (s / "min.ini").string() +
            " --set optimiser.beta=0.5");
  CHECK(r.code == 2);
  CHECK(r.err.find("optimiser.beta") != std::string::npos);

  r = s.Cli("run --config " + (s / "min.ini").string() +
            " --set harness.rounds=many");
  CHECK(r.code == 2);
  CHECK(r.err.find("harness.rounds") != std::string::npos);

  r = s.Cli("run --config " + (s / "missing.ini").string());
  CHECK(r.code == 2);
  r = s.Cli("run");
  CHECK(r.code == 2);
  r = s.Cli("frobnicate");
  CHECK(r.code == 2);
}

TEST_CASE("override wins over the file") {
  Sandbox s;
  Spit(s / "min.ini", kMinimal);
  const Result r = s.Cli("run --config " + (s / "min.ini").string() +
                         " --set harness.rounds=10 --seed 9 --out " +
                         (s / "out").string());
  REQUIRE(r.code == 0);
  const auto records = ParseMetricsCsv(Slurp(s / "out" / "metrics.csv"));
  REQUIRE(records.size() == 11);
  CHECK(records.back().round == 10);
  const auto j = nlohmann::json::parse(Slurp(s / "out" / "summary.json"));
  CHECK(j["seed"] == 9);
}

TEST_CASE("runtime failures exit 3") {
  Sandbox s;
  Spit(s / "div.ini",
       "[objective]\ntype = divergence\nworkers = 3\n"
       "[optimizer]\nvariant = no_error_feedback\nschedule = stepsize\n"
       "rate = 1000\n[compressors]\nworker = topk:0.3333333333333333\n"
       "[harness]\nrounds = 500\n");
  const Result r = s.Cli("run --config " + (s / "div.ini").string() +
                         " --out " + (s / "out").string());
  CHECK(r.code == 3);
  CHECK(r.err.find("round ") != std::string::npos);
}

TEST_CASE("canonical echo round trips") {
  Sandbox s;
  Spit(s / "min.ini", std::string(kMinimal) +
                          "\n[compressors]\nworker = topk:0.2+natural\n");
  const Result first =
      s.Cli("run --print-config --config " + (s / "min.ini").string() +
            " --set objective.noise_sigma=0.1,0.2");
  REQUIRE(first.code == 0);
  Spit(s / "echo.ini", first.out);
  const Result second =
      s.Cli("run --print-config --config " + (s / "echo.ini").string());
  REQUIRE(second.code == 0);
  CHECK(first.out == second.out);
  CHECK(first.out.find("worker = topk:0.2+natural") != std::string::npos);
  CHECK(CanonicalConfig(ParseConfig(first.out)) == first.out);
}

TEST_CASE("csv output reproduces the in-process run exactly") {
  Sandbox s;
  Spit(s / "min.ini", std::string(kMinimal) +
                          "\n[compressors]\nworker = topk:0.3\n"
                          "server = damping:0.5\n");
  const Result r = s.Cli("run --config " + (s / "min.ini").string() +
                         " --out " + (s / "out").string());
  REQUIRE(r.code == 0);
  const auto parsed = ParseMetricsCsv(Slurp(s / "out" / "metrics.csv"));
  RunConfig c = LoadConfig((s / "min.ini").string());
  const RunResult direct = Run(c);
  REQUIRE(parsed.size() == direct.records.size());
  for (std::size_t k = 0; k < parsed.size(); ++k) {
    CHECK(parsed[k].f == direct.records[k].f);
    CHECK(parsed[k].grad_norm == direct.records[k].grad_norm);
    CHECK(parsed[k].layer_grad == direct.records[k].layer_grad);
    CHECK(parsed[k].uplink_bits == direct.records[k].uplink_bits);
    CHECK(parsed[k].avg_sq_grad == direct.records[k].avg_sq_grad);
  }
}

TEST_CASE("account prices the embedding shape") {
  Sandbox s;
  Spit(s / "emb.ini",
       "[model]\nshapes = 50304x768\n[compressors]\nindex_bits = 26\n");
  const Result r = s.Cli("account --config " + (s / "emb.ini").string());
  REQUIRE(r.code == 0);
  const auto rows = ParseAccount(r.out);
  CHECK(rows.size() == 14);
  CHECK(rows.at("identity") == 1.0);
  CHECK(rows.at("topk:0.2") == 0.3625);
  CHECK(rows.at("natural") == 0.5);
}

TEST_CASE("account on the full model: rank plus natural halves the cost") {
  Sandbox s;
  Spit(s / "gpt.ini",
       "[model]\nshapes = 50304x768,768x768*48,768x3072*12,3072x768*12\n"
       "[compressors]\naccount = identity,rankk:0.1,rankk:0.1+natural\n");
  const Result r = s.Cli("account --config " + (s / "gpt.ini").string());
  REQUIRE(r.code == 0);
  const auto rows = ParseAccount(r.out);
  REQUIRE(rows.size() == 3);
  CHECK(rows.at("identity") == 1.0);
  CHECK(std::abs(rows.at("rankk:0.1") - 0.1335) <= 5e-3);
  CHECK(std::abs(rows.at("rankk:0.1+natural") - 0.5 * rows.at("rankk:0.1")) <=
        1e-4);
  CHECK(s.Cli("account").code == 2);
}

TEST_CASE("sweep writes one run per value") {
  Sandbox s;
  Spit(s / "min.ini", kMinimal);
  const Result r = s.Cli("sweep --config " + (s / "min.ini").string() +
                         " --set harness.rounds=20 --axis compressors.worker"
                         " --values \"identity;topk:0.5;topk:0.2\" --out " +
                         (s / "sw").string());
  REQUIRE(r.code == 0);
  for (int i = 0; i < 3; ++i) {
    CHECK(fs::exists(s / "sw" / ("run_" + std::to_string(i)) / "metrics.csv"));
  }
  const std::string index = Slurp(s / "sw" / "sweep.csv");
  CHECK(std::count(index.begin(), index.end(), '\n') == 4);
  CHECK(index.find("\"topk:0.5\"") != std::string::npos);

  const Result bad = s.Cli("sweep --config " + (s / "min.ini").string() +
                           " --axis optimizer.nope --values 1");
  CHECK(bad.code == 2);
}

TEST_CASE("verify exit codes and report") {
  Sandbox s;
  Result r = s.Cli("verify --suite identities --out " + (s / "v").string());
  CHECK(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["passed"] == true);
  CHECK(fs::exists(s / "v" / "verify.json"));

  r = s.Cli("verify --suite compressors --inject-fault");
  CHECK(r.code == 4);
  CHECK(nlohmann::json::parse(r.out)["passed"] == false);

  r = s.Cli("verify --suite convergence");
  CHECK(r.code == 0);
  bool telescoped = false;
  const auto report = nlohmann::json::parse(r.out);
  for (const auto& c : report["checks"]) {
    telescoped = telescoped || c["name"] == "telescoped_bound";
  }
  CHECK(telescoped);

  CHECK(s.Cli("verify --suite everything").code == 2);
}

}  // TEST_SUITE
