#pragma once

#include <optional>
#include <string>
#include <variant>

#include <json.hpp>

#include "pdns/metrics.hpp"
#include "pdns/trainer.hpp"

namespace pdns {

using Json = nlohmann::json;

/// Fully validated run description. Exactly one of the two worlds is set:
/// continuous targets pair with the OU process, discrete ones with the CTMC.
struct RunConfig {
  std::optional<ContinuousWorld> continuous;
  std::optional<DiscreteWorld> discrete;
  TrainConfig train;
  std::vector<std::string> metric_names;
  std::size_t metric_samples = 2000;
  std::uint64_t seed = 0;
  std::string out_dir = "run";
  std::string target_hash;  // canonical hash of the target block
  Json echo;                // the parsed document, for the report

  bool is_discrete() const { return discrete.has_value(); }
};

/// Throws std::invalid_argument with a field-path diagnostic on any error.
RunConfig parse_run_config(const Json& doc);
RunConfig load_run_config(const std::string& path);

/// Canonical hash of a target block (key-sorted compact dump).
std::string hash_target_block(const Json& target);

/// Parses just a target block (used by the oracle/baseline subcommands).
ContinuousTarget parse_continuous_target(const Json& block);
DiscreteTarget parse_discrete_target(const Json& block);
bool target_block_is_discrete(const Json& block);

}  // namespace pdns
