#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "pdns/cli_harness.hpp"
#include "pdns/io.hpp"

using namespace pdns;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("pdns_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
}

const char* kTinyGaussConfig = R"({
  "seed": 3,
  "out_dir": "OUTDIR",
  "target": {"kind": "gmm", "centers": [[2.0]], "mode_sigma": 0.5, "beta": 1.0},
  "process": {"type": "ou", "steps": 32},
  "net": {"hidden": [16], "time_features": 4},
  "train": {
    "stages": 3,
    "inner_steps": 30,
    "warm_start_steps": 30,
    "batch": 32,
    "buffer": 128,
    "lr": 0.003,
    "ema_decay": 0.9,
    "scheduler": {"mode": "predefined", "lambdas": [0.6, 0.3, 0.0]},
    "final_eval_samples": 256
  },
  "metrics": {"samples": 256}
})";

const char* kTinyIsingConfig = R"({
  "seed": 5,
  "out_dir": "OUTDIR",
  "target": {"kind": "ising", "side": 2, "beta": 0.4},
  "process": {"type": "ctmc", "steps": 12},
  "net": {"hidden": [16]},
  "train": {
    "stages": 2,
    "inner_steps": 40,
    "batch": 32,
    "buffer": 128,
    "lr": 0.005,
    "ema_decay": 0.9,
    "scheduler": {"mode": "predefined", "lambdas": [0.5, 0.0]},
    "final_eval_samples": 512
  },
  "metrics": {"samples": 512}
})";

std::string replace_outdir(std::string text, const std::string& dir) {
  const auto pos = text.find("OUTDIR");
  text.replace(pos, 6, dir);
  return text;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_CASE("train writes report, stage log and checkpoints") {
  TempDir tmp;
  const std::string cfg_path = tmp.file("gauss.json");
  write_file(cfg_path, replace_outdir(kTinyGaussConfig, tmp.file("run")));

  CliOverrides ov;
  CHECK(cmd_train(cfg_path, ov) == kExitOk);
  CHECK(fs::exists(tmp.file("run/report.json")));
  CHECK(fs::exists(tmp.file("run/stages.jsonl")));
  CHECK(fs::exists(tmp.file("run/checkpoint_final.pdns")));

  const Json report = Json::parse(slurp(tmp.file("run/report.json")));
  CHECK(report["stages"].size() == 4);  // warm start + 3 stages
  CHECK(report["target_hash"].is_string());
  CHECK(report["metrics"].contains("terminal_mean"));

  std::size_t stage_lines = 0;
  std::ifstream is(tmp.file("run/stages.jsonl"));
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) ++stage_lines;
  CHECK(stage_lines == 4);

  SUBCASE("rerun with the same seed is byte-identical") {
    const std::string first = slurp(tmp.file("run/report.json"));
    CHECK(cmd_train(cfg_path, ov) == kExitOk);
    CHECK(slurp(tmp.file("run/report.json")) == first);
  }
}

TEST_CASE("invalid configs exit 2 with a field diagnostic") {
  TempDir tmp;
  const std::string cfg_path = tmp.file("bad.json");
  write_file(cfg_path, R"({"target": {"kind": "gmm", "centers": [[0.0]],
    "beta": -1.0}})");
  CliOverrides ov;
  CHECK(cmd_train(cfg_path, ov) == kExitBadInput);

  write_file(cfg_path, "{ not json ");
  CHECK(cmd_train(cfg_path, ov) == kExitBadInput);

  CHECK(cmd_train(tmp.file("missing.json"), ov) == kExitBadInput);
}

TEST_CASE("sample emits a csv that evaluate accepts") {
  TempDir tmp;
  const std::string cfg_path = tmp.file("ising.json");
  write_file(cfg_path, replace_outdir(kTinyIsingConfig, tmp.file("run")));
  CliOverrides ov;
  REQUIRE(cmd_train(cfg_path, ov) == kExitOk);

  const std::string csv = tmp.file("samples.csv");
  CHECK(cmd_sample(cfg_path, tmp.file("run/checkpoint_final.pdns"), 64, csv, ov) ==
        kExitOk);
  const CsvTable table = read_csv(csv);
  CHECK(table.values.rows == 64);
  CHECK(table.header.back() == "log_w");
  for (std::size_t r = 0; r < table.values.rows; ++r)
    CHECK(std::isfinite(table.values.at(r, table.values.cols - 1)));

  SUBCASE("zero samples still write a valid header") {
    const std::string empty_csv = tmp.file("empty.csv");
    CHECK(cmd_sample(cfg_path, tmp.file("run/checkpoint_final.pdns"), 0,
                     empty_csv, ov) == kExitOk);
    const CsvTable t = read_csv(empty_csv);
    CHECK(t.values.rows == 0);
    CHECK(t.header.size() == 5);
  }

  SUBCASE("mismatched checkpoint exits 2") {
    const std::string other_cfg = tmp.file("gauss.json");
    write_file(other_cfg, replace_outdir(kTinyGaussConfig, tmp.file("run2")));
    CHECK(cmd_sample(other_cfg, tmp.file("run/checkpoint_final.pdns"), 8,
                     tmp.file("x.csv"), ov) == kExitBadInput);
  }

  SUBCASE("evaluate against the exact oracle") {
    const std::string target_path = tmp.file("target.json");
    write_file(target_path, R"({"kind": "ising", "side": 2, "beta": 0.4})");
    EvaluateArgs args;
    args.samples_csv = csv;
    args.target_json = target_path;
    args.metrics = {"tv", "magnetization"};
    args.out_json = tmp.file("eval.json");
    CHECK(cmd_evaluate(args) == kExitOk);
    const Json result = Json::parse(slurp(args.out_json));
    CHECK(result.contains("tv"));
    CHECK(result["tv"].get<double>() <= 1.0);
  }

  SUBCASE("unknown metric names exit 2") {
    EvaluateArgs args;
    args.samples_csv = csv;
    args.metrics = {"nope"};
    CHECK(cmd_evaluate(args) == kExitBadInput);
  }

  SUBCASE("hash mismatch is refused unless forced") {
    const std::string other_target = tmp.file("other.json");
    write_file(other_target, R"({"kind": "ising", "side": 2, "beta": 0.9})");
    EvaluateArgs args;
    args.samples_csv = csv;
    args.target_json = other_target;
    args.metrics = {"magnetization"};
    CHECK(cmd_evaluate(args) == kExitBadInput);
    args.force = true;
    CHECK(cmd_evaluate(args) == kExitOk);
  }
}

TEST_CASE("oracle and baseline dumps") {
  TempDir tmp;
  const std::string target_path = tmp.file("target.json");
  write_file(target_path, R"({"kind": "ising", "side": 2, "beta": 0.3})");

  SUBCASE("oracle probabilities sum to one") {
    const std::string out = tmp.file("oracle.csv");
    CHECK(cmd_oracle(target_path, 0.0, out) == kExitOk);
    const CsvTable table = read_csv(out);
    CHECK(table.values.rows == 16);
    double total = 0.0;
    for (std::size_t r = 0; r < table.values.rows; ++r)
      total += table.values.at(r, table.values.cols - 1);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("lambda out of range exits 2") {
    CHECK(cmd_oracle(target_path, 1.5, tmp.file("x.csv")) == kExitBadInput);
  }

  SUBCASE("size guard propagates as exit 2") {
    const std::string big = tmp.file("big.json");
    write_file(big, R"({"kind": "ising", "side": 8, "beta": 0.3})");
    CHECK(cmd_oracle(big, 0.0, tmp.file("x.csv")) == kExitBadInput);
  }

  SUBCASE("baseline dump round-trips through evaluate") {
    BaselineArgs args;
    args.target_json = target_path;
    args.algorithm = "sw";
    args.chain.burn_in = 500;
    args.chain.thinning = 2;
    args.chain.samples = 4000;
    args.out_csv = tmp.file("baseline.csv");
    CHECK(cmd_baseline(args) == kExitOk);

    EvaluateArgs eval;
    eval.samples_csv = args.out_csv;
    eval.target_json = target_path;
    eval.metrics = {"tv"};
    CHECK(cmd_evaluate(eval) == kExitOk);
  }

  SUBCASE("unknown algorithm exits 2") {
    BaselineArgs args;
    args.target_json = target_path;
    args.algorithm = "gibbs";
    args.out_csv = tmp.file("x.csv");
    CHECK(cmd_baseline(args) == kExitBadInput);
  }
}

#ifdef PDNS_BIN
TEST_CASE("binary smoke: oracle subcommand") {
  TempDir tmp;
  const std::string target_path = tmp.file("target.json");
  write_file(target_path, R"({"kind": "ising", "side": 2, "beta": 0.3})");
  const std::string cmd = std::string(PDNS_BIN) + " oracle --target " +
                          target_path + " --lambda 0.5 --out " +
                          tmp.file("oracle.csv") + " > /dev/null 2>&1";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(tmp.file("oracle.csv")));

  const std::string bad = std::string(PDNS_BIN) + " oracle --lambda 0.5 > /dev/null 2>&1";
  CHECK(std::system(bad.c_str()) != 0);
}
#endif
