#include <CLI11.hpp>

#include "pdns/cli_harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Proximal diffusion neural sampler laboratory"};
  app.require_subcommand(1);

  pdns::CliOverrides overrides;
  std::string config_path, checkpoint, out_path, target_json, algorithm = "sw";
  std::size_t count = 1000;
  double lambda = 0.0;
  std::uint64_t seed_value = 0;
  int workers_value = 1;
  bool have_seed = false, have_workers = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed_value, "override the config seed")
        ->each([&](const std::string&) { have_seed = true; });
    cmd->add_option("--workers", workers_value, "rollout worker threads")
        ->each([&](const std::string&) { have_workers = true; });
    cmd->add_flag("--deterministic", overrides.deterministic,
                  "force single-worker rollouts");
  };

  CLI::App* train = app.add_subcommand("train", "run the staged training loop");
  train->add_option("--config", config_path, "run config (json)")->required();
  train->add_option("--out", out_path, "output directory override");
  add_common(train);

  CLI::App* sample = app.add_subcommand("sample", "draw terminal samples");
  sample->add_option("--config", config_path, "run config (json)")->required();
  sample->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  sample->add_option("--n", count, "sample count");
  sample->add_option("--out", out_path, "output csv")->required();
  add_common(sample);

  pdns::EvaluateArgs eval_args;
  CLI::App* evaluate = app.add_subcommand("evaluate", "compare sample files");
  evaluate->add_option("--samples", eval_args.samples_csv, "sample csv")->required();
  evaluate->add_option("--ref", eval_args.reference_csv, "reference csv");
  evaluate->add_option("--target", eval_args.target_json,
                       "target spec json (oracle reference / energies)");
  evaluate->add_option("--lambda", eval_args.lambda,
                       "interpolant exponent for tv against the oracle");
  evaluate->add_option("--metrics", eval_args.metrics, "metric names")
      ->required()
      ->delimiter(',');
  evaluate->add_option("--out", eval_args.out_json, "result json path");
  evaluate->add_flag("--force", eval_args.force, "skip the target-hash guard");

  CLI::App* oracle = app.add_subcommand("oracle", "exact interpolant dump");
  oracle->add_option("--target", target_json, "target spec json")->required();
  oracle->add_option("--lambda", lambda, "interpolant exponent");
  oracle->add_option("--out", out_path, "output csv")->required();

  pdns::BaselineArgs baseline_args;
  CLI::App* baseline = app.add_subcommand("baseline", "mcmc baseline sampler");
  baseline->add_option("--target", target_json, "target spec json")->required();
  baseline->add_option("--algo", algorithm, "mh or sw");
  baseline->add_option("--samples", baseline_args.chain.samples, "sample count");
  baseline->add_option("--burn-in", baseline_args.chain.burn_in, "burn-in sweeps");
  baseline->add_option("--thinning", baseline_args.chain.thinning,
                       "sweeps between samples");
  baseline->add_option("--chains", baseline_args.chain.chains, "chain count");
  baseline->add_option("--chain-seed", baseline_args.chain.seed, "chain seed");
  baseline->add_option("--out", out_path, "output csv")->required();

  CLI11_PARSE(app, argc, argv);

  if (have_seed) overrides.seed = seed_value;
  if (have_workers) overrides.workers = workers_value;

  if (train->parsed()) {
    if (!out_path.empty()) overrides.out_dir = out_path;
    return pdns::cmd_train(config_path, overrides);
  }
  if (sample->parsed())
    return pdns::cmd_sample(config_path, checkpoint, count, out_path, overrides);
  if (evaluate->parsed()) return pdns::cmd_evaluate(eval_args);
  if (oracle->parsed()) return pdns::cmd_oracle(target_json, lambda, out_path);
  if (baseline->parsed()) {
    baseline_args.target_json = target_json;
    baseline_args.algorithm = algorithm;
    baseline_args.out_csv = out_path;
    return pdns::cmd_baseline(baseline_args);
  }
  return pdns::kExitBadInput;
}
