// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "support.hpp"

using namespace halfwalk;
using namespace halfwalk::testing;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "halfwalk");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("no arguments prints usage and exits 2") {
    const Result r = run_cli({});
    CHECK(r.code == cli::kExitUsage);
    CHECK(r.err.find("validate") != std::string::npos);
  }

  TEST_CASE("unknown flags are usage errors") {
    CHECK(run_cli({"validate", data_path("reference"), "--bogus"}).code == cli::kExitUsage);
    CHECK(run_cli({"frobnicate"}).code == cli::kExitUsage);
    CHECK(run_cli({"ahat", data_path("reference"), "--q", "x,y"}).code == cli::kExitUsage);
  }

  TEST_CASE("validate accepts the reference model") {
    const Result r = run_cli({"validate", data_path("reference")});
    CHECK(r.code == cli::kExitOk);
    CHECK(r.out.find("accepted: yes") != std::string::npos);
    CHECK(r.out.find("model_hash=") != std::string::npos);
  }

  TEST_CASE("validate rejects a model with zero boundary drift") {
    const std::string path = "cli_zero_drift.json";
    std::ofstream(path) << R"({"dimension": 2,
      "mu": [{"step": [1, 0], "prob": 0.25}, {"step": [-1, 0], "prob": 0.15},
             {"step": [0, 1], "prob": 0.2}, {"step": [0, -1], "prob": 0.4}],
      "mu0": [{"step": [1, 0], "prob": 0.5}, {"step": [-1, 0], "prob": 0.5}]})";
    CHECK(run_cli({"validate", path}).code == cli::kExitValidation);
    CHECK(run_cli({"ahat", path, "--q", "0,1"}).code == cli::kExitValidation);
    std::remove(path.c_str());
  }

  TEST_CASE("ahat prints the boundary point, I and gamma") {
    const Result r = run_cli({"ahat", data_path("reference"), "--q", "0,1"});
    CHECK(r.code == cli::kExitOk);
    CHECK(r.out.find("a_hat: -0.25541281188") != std::string::npos);
    CHECK(r.out.find("I(0,q): ") != std::string::npos);
    CHECK(r.out.find("gamma_q: 0 0") != std::string::npos);
  }

  TEST_CASE("csv output is byte identical across runs") {
    const std::string a = "cli_run_a.csv", b = "cli_run_b.csv";
    const std::vector<std::string> base{"green", data_path("reference"), "--from", "0,1",
                                        "--to", "1,1", "2,0", "--method", "mc",
                                        "--n-paths", "5000", "--seed", "3"};
    auto with = [&](const std::string& out) {
      auto v = base;
      v.push_back("--out");
      v.push_back(out);
      return v;
    };
    REQUIRE(run_cli(with(a)).code == 0);
    REQUIRE(run_cli(with(b)).code == 0);
    CHECK(slurp(a) == slurp(b));
    CHECK(slurp(a).find("seed=3") != std::string::npos);
    std::remove(a.c_str());
    std::remove(b.c_str());
  }

  TEST_CASE("every subcommand runs on small inputs") {
    const std::string ref = data_path("reference");
    const std::vector<std::vector<std::string>> runs = {
        {"geometry", ref, "--samples", "5"},
        {"gamma", ref, "--q", "1,0.3"},
        {"quasipotential", ref, "--q", "0.5,0.5"},
        {"atlas", ref, "--samples", "19"},
        {"harmonic-check", ref, "--q", "0,1", "--window", "4"},
        {"green", ref, "--from", "0,1", "--to", "3,2", "--method", "series", "--horizon",
         "200"},
        {"renewal", ref, "--q", "0,1", "--r", "10"},
        {"asymptotics", ref, "--q", "0,1", "--radii", "5,10"},
        {"martin", ref, "--q", "0,1", "--z", "1,2", "--radii", "5,10"},
        {"nonradial", ref, "--q1", "1,0.1", "--q2", "1,0.2", "--z", "1,2", "--radii",
         "5,10"},
        {"ratio-limit", ref, "--tilt", "0,0", "--q", "1,0", "--z", "1,1", "--zp", "0,1",
         "--radii", "5,10"},
    };
    for (const auto& args : runs) {
      CAPTURE(args[0]);
      const Result r = run_cli(args);
      CHECK(r.code == cli::kExitOk);
      CHECK(r.err.empty());
      CHECK(r.out.rfind("# model_hash=", 0) == 0);
      const Result c = [&] {
        auto v = args;
        v.push_back("--format");
        v.push_back("csv");
        return run_cli(v);
      }();
      CHECK(c.out.find("\r\n") != std::string::npos);
    }
  }

  TEST_CASE("domain errors map to usage") {
    const Result r = run_cli({"gamma", data_path("reference"), "--q", "1,0"});
    CHECK(r.code == cli::kExitUsage);
    CHECK(r.err.find("positive last coordinate") != std::string::npos);
  }
}
