#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pdns/config.hpp"
#include "pdns/oracles_baselines.hpp"

namespace pdns {

/// Command-line overrides applied on top of the config file.
struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> workers;
  bool deterministic = false;  // forces single-worker rollouts
};

/// Exit codes shared by every subcommand: 0 success, 2 invalid
/// input/config, 3 aborted run (partial report written).
inline constexpr int kExitOk = 0;
inline constexpr int kExitBadInput = 2;
inline constexpr int kExitAborted = 3;

int cmd_train(const std::string& config_path, const CliOverrides& overrides);

int cmd_sample(const std::string& config_path, const std::string& checkpoint,
               std::size_t count, const std::string& out_csv,
               const CliOverrides& overrides);

struct EvaluateArgs {
  std::string samples_csv;
  std::string reference_csv;  // empty when an oracle spec is given
  std::string target_json;    // target spec (oracle reference / energies)
  double lambda = 0.0;        // interpolant exponent for oracle references
  std::vector<std::string> metrics;
  std::string out_json;  // optional
  bool force = false;    // skip the target-hash guard
};

int cmd_evaluate(const EvaluateArgs& args);

int cmd_oracle(const std::string& target_json, double lambda,
               const std::string& out_csv);

struct BaselineArgs {
  std::string target_json;
  std::string algorithm = "sw";  // "mh" or "sw"
  ChainConfig chain;
  std::string out_csv;
};

int cmd_baseline(const BaselineArgs& args);

/// Names accepted by cmd_evaluate.
const std::vector<std::string>& valid_metric_names();

}  // namespace pdns
