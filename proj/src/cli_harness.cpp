#include "pdns/cli_harness.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "pdns/io.hpp"
#include "pdns/metrics.hpp"
#include "pdns/oracles_baselines.hpp"

namespace pdns {
namespace {

namespace fs = std::filesystem;

Json stage_to_json(const StageLog& log) {
  Json j;
  j["k"] = log.k;
  j["lambda"] = log.lambda;
  if (std::isnan(log.eta))
    j["eta_or_inf"] = nullptr;
  else if (std::isinf(log.eta))
    j["eta_or_inf"] = "inf";
  else
    j["eta_or_inf"] = log.eta;
  j["ess_local"] = log.ess_local;
  j["ess_global"] = std::isnan(log.ess_global) ? Json() : Json(log.ess_global);
  j["kl_estimate"] = log.kl;
  j["n_dropped"] = log.dropped;
  j["refreshes"] = log.refreshes;
  if (!std::isnan(log.loss)) j["loss"] = log.loss;
  if (!std::isnan(log.soc_policy_cost)) {
    j["soc_policy_cost"] = log.soc_policy_cost;
    j["soc_policy_se"] = log.soc_policy_se;
  }
  return j;
}

Json report_to_json(const RunReport& report) {
  Json j;
  j["stages"] = Json::array();
  for (const StageLog& log : report.stages) j["stages"].push_back(stage_to_json(log));
  j["aborted"] = report.aborted;
  if (report.aborted) j["abort_reason"] = report.abort_reason;
  if (!std::isnan(report.global_ess)) j["global_ess"] = report.global_ess;
  if (!std::isnan(report.logz)) {
    j["logz"] = report.logz;
    j["logz_se"] = report.logz_se;
  }
  if (!std::isnan(report.final_soc_cost))
    j["final_soc_cost"] = report.final_soc_cost;
  return j;
}

Matrix states_to_matrix(const std::vector<Vec>& states) {
  Matrix m(states.size(), states.empty() ? 0 : states[0].size());
  for (std::size_t i = 0; i < states.size(); ++i)
    std::copy(states[i].begin(), states[i].end(), m.row(i));
  return m;
}

Json continuous_metrics(const RunConfig& cfg, const ContinuousWorld& world,
                        const ParamStore& trained) {
  Json out;
  const std::size_t n = cfg.metric_samples;
  const RolloutResult res = rollout(trained.ema_snapshot(), world.net,
                                    world.sched, n, cfg.seed ^ 0x6d657472ULL,
                                    cfg.train.workers);
  const std::size_t d = world.net.dim;
  Vec mean(d, 0.0), var(d, 0.0);
  for (const auto& rec : res.records)
    for (std::size_t k = 0; k < d; ++k) mean[k] += rec.x_T[k];
  for (double& v : mean) v /= static_cast<double>(res.records.size());
  for (const auto& rec : res.records)
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = rec.x_T[k] - mean[k];
      var[k] += diff * diff;
    }
  for (double& v : var) v /= static_cast<double>(res.records.size() - 1);
  out["terminal_mean"] = mean;
  out["terminal_variance"] = var;

  if (world.target.kind == ContinuousKind::Gmm) {
    Matrix model(res.records.size(), d);
    for (std::size_t i = 0; i < res.records.size(); ++i)
      std::copy(res.records[i].x_T.begin(), res.records[i].x_T.end(),
                model.row(i));
    const double radius = 3.0 * world.target.mode_sigma;
    const ModeHistogram hist = mode_histogram(model, world.target.centers, radius);
    out["mode_histogram"] = {{"frequencies", hist.frequencies},
                             {"unassigned", hist.unassigned},
                             {"radius", radius}};
    const bool want_sinkhorn =
        std::count(cfg.metric_names.begin(), cfg.metric_names.end(), "sinkhorn");
    const bool want_mmd =
        std::count(cfg.metric_names.begin(), cfg.metric_names.end(), "mmd");
    if (want_sinkhorn || want_mmd) {
      Rng rng(derive_seed(cfg.seed, 0x74727574ULL));
      const Matrix truth =
          states_to_matrix(gmm_exact_sample(world.target, n, rng));
      if (want_mmd) out["mmd_vs_truth"] = mmd(model, truth);
      if (want_sinkhorn) {
        const SinkhornResult sk = sinkhorn(model, truth);
        out["sinkhorn_vs_truth"] = {{"cost", sk.cost},
                                    {"converged", sk.converged},
                                    {"marginal_violation", sk.marginal_violation}};
      }
    }
  }
  return out;
}

Json discrete_metrics(const RunConfig& cfg, const DiscreteWorld& world,
                      const ParamStore& trained) {
  Json out;
  const std::size_t n = cfg.metric_samples;
  const DiscreteRolloutResult res =
      rollout_discrete(trained.ema_snapshot(), world.net, world.ctmc_steps, n,
                       cfg.seed ^ 0x6d657472ULL, cfg.train.workers);
  std::vector<std::vector<int>> samples;
  samples.reserve(res.records.size());
  for (const auto& rec : res.records) samples.push_back(rec.x_T);

  if (world.target.kind == DiscreteKind::MaxCut) {
    long best = 0;
    double mean_cut = 0.0;
    for (const auto& s : samples) {
      const long cut = cut_value(world.target, s);
      best = std::max(best, cut);
      mean_cut += static_cast<double>(cut);
    }
    mean_cut /= static_cast<double>(samples.size());
    out["best_cut"] = best;
    out["mean_cut"] = mean_cut;
    if (world.target.dim() <= 20) {
      const MaxCutResult opt = maxcut_brute(world.target);
      out["optimal_cut"] = opt.best_value;
      out["best_over_optimal"] =
          static_cast<double>(best) / std::max(1.0, static_cast<double>(opt.best_value));
    }
    return out;
  }

  const std::size_t alphabet = world.target.alphabet();
  out["magnetization"] = magnetization(samples, alphabet);
  double abs_mag = 0.0;
  if (alphabet == 2) {
    for (const auto& s : samples) abs_mag += std::abs(sample_magnetization(s));
    out["mean_abs_magnetization"] = abs_mag / static_cast<double>(samples.size());
  }
  out["two_point_corr_r1"] =
      two_point_corr(samples, world.target.lattice_side, 1, alphabet);

  const double log_states = static_cast<double>(world.target.dim()) *
                            std::log2(static_cast<double>(alphabet));
  if (log_states <= 20.0) {
    const Enumeration exact = enumerate_exact(world.target);
    out["tv_vs_exact"] = tv_empirical(samples, exact, alphabet);
    out["logz_exact"] = exact.log_z;
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << text;
}

Json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open " + path);
  return Json::parse(is, nullptr, true, /*allow comments*/ true);
}

struct LoadedTarget {
  std::optional<ContinuousTarget> continuous;
  std::optional<DiscreteTarget> discrete;
  std::string hash;
};

LoadedTarget load_target(const std::string& path) {
  Json doc = load_json_file(path);
  const Json block = doc.contains("target") ? doc["target"] : doc;
  LoadedTarget out;
  out.hash = hash_target_block(block);
  if (target_block_is_discrete(block))
    out.discrete = parse_discrete_target(block);
  else
    out.continuous = parse_continuous_target(block);
  return out;
}

std::vector<std::string> csv_state_header(std::size_t d) {
  std::vector<std::string> header;
  for (std::size_t i = 0; i < d; ++i) header.push_back("x_" + std::to_string(i));
  return header;
}

// States plus optional trailing columns from a sample CSV.
std::vector<std::vector<int>> csv_to_states(const CsvTable& table,
                                            std::size_t dim) {
  std::vector<std::vector<int>> states;
  states.reserve(table.values.rows);
  for (std::size_t r = 0; r < table.values.rows; ++r) {
    std::vector<int> s(dim);
    for (std::size_t c = 0; c < dim; ++c)
      s[c] = static_cast<int>(std::lround(table.values.at(r, c)));
    states.push_back(std::move(s));
  }
  return states;
}

std::size_t state_columns(const CsvTable& table) {
  std::size_t d = 0;
  for (const std::string& name : table.header)
    if (name.rfind("x_", 0) == 0) ++d;
  return d;
}

}  // namespace

const std::vector<std::string>& valid_metric_names() {
  static const std::vector<std::string> names = {
      "mmd", "sinkhorn", "w2_energy", "magnetization", "two_point_corr", "tv"};
  return names;
}

int cmd_train(const std::string& config_path, const CliOverrides& overrides) {
  RunConfig cfg;
  try {
    cfg = load_run_config(config_path);
  } catch (const std::exception& err) {
    std::cerr << err.what() << "\n";
    return kExitBadInput;
  }
  if (overrides.seed) {
    cfg.seed = *overrides.seed;
    cfg.train.seed = *overrides.seed;
  }
  if (overrides.out_dir) cfg.out_dir = *overrides.out_dir;
  if (overrides.workers) cfg.train.workers = *overrides.workers;
  if (overrides.deterministic) cfg.train.workers = 1;

  fs::create_directories(cfg.out_dir);
  std::ofstream stage_stream(cfg.out_dir + "/stages.jsonl");
  if (!stage_stream) {
    std::cerr << "cannot open " << cfg.out_dir << "/stages.jsonl\n";
    return kExitBadInput;
  }

  const StageCallback on_stage = [&](const StageLog& log, const ParamStore& ps) {
    stage_stream << stage_to_json(log).dump() << "\n";
    stage_stream.flush();
    save_checkpoint(cfg.out_dir + "/checkpoint_stage_" + std::to_string(log.k) +
                        ".pdns",
                    ps);
  };

  RunReport report;
  ParamStore trained;
  Json metrics;
  try {
    if (cfg.is_discrete()) {
      trained = run_pdns(*cfg.discrete, cfg.train, report, on_stage);
      if (!report.aborted) metrics = discrete_metrics(cfg, *cfg.discrete, trained);
    } else {
      trained = run_pdns(*cfg.continuous, cfg.train, report, on_stage);
      if (!report.aborted)
        metrics = continuous_metrics(cfg, *cfg.continuous, trained);
    }
  } catch (const std::exception& err) {
    report.aborted = true;
    report.abort_reason = err.what();
  }

  Json doc = report_to_json(report);
  doc["config"] = cfg.echo;
  doc["target_hash"] = cfg.target_hash;
  if (!metrics.is_null()) doc["metrics"] = metrics;
  write_text(cfg.out_dir + "/report.json", doc.dump(2) + "\n");
  if (!report.aborted)
    save_checkpoint(cfg.out_dir + "/checkpoint_final.pdns", trained);

  std::cout << doc.dump(2) << "\n";
  return report.aborted ? kExitAborted : kExitOk;
}

int cmd_sample(const std::string& config_path, const std::string& checkpoint,
               std::size_t count, const std::string& out_csv,
               const CliOverrides& overrides) {
  RunConfig cfg;
  ParamStore ps;
  try {
    cfg = load_run_config(config_path);
    ps = load_checkpoint(checkpoint);
  } catch (const std::exception& err) {
    std::cerr << err.what() << "\n";
    return kExitBadInput;
  }
  if (overrides.seed) cfg.seed = *overrides.seed;
  const int workers = overrides.deterministic ? 1 : overrides.workers.value_or(1);

  const std::vector<std::size_t> widths = cfg.is_discrete()
                                              ? cfg.discrete->net.widths()
                                              : cfg.continuous->net.widths();
  if (!checkpoint_matches(ps, widths)) {
    std::cerr << "checkpoint does not match the configured network\n";
    return kExitBadInput;
  }

  try {
    if (cfg.is_discrete()) {
      const DiscreteWorld& world = *cfg.discrete;
      const TerminalReward tr = world.reward();
      const std::size_t d = world.target.dim();
      Matrix rows(0, d + 1);
      if (count > 0) {
        const DiscreteRolloutResult res =
            rollout_discrete(ps.ema_snapshot(), world.net, world.ctmc_steps,
                             count, cfg.seed, workers);
        rows = Matrix(res.records.size(), d + 1);
        for (std::size_t i = 0; i < res.records.size(); ++i) {
          for (std::size_t k = 0; k < d; ++k)
            rows.at(i, k) = res.records[i].x_T[k];
          rows.at(i, d) =
              base_log_weight(res.records[i].log_rn_ref_over_model,
                              tr(std::span<const int>(res.records[i].x_T)));
        }
      }
      auto header = csv_state_header(d);
      header.push_back("log_w");
      write_csv(out_csv, header, rows, cfg.target_hash);
    } else {
      const ContinuousWorld& world = *cfg.continuous;
      const TerminalReward tr = world.reward();
      const std::size_t d = world.net.dim;
      Matrix rows(0, d + 1);
      if (count > 0) {
        const RolloutResult res = rollout(ps.ema_snapshot(), world.net,
                                          world.sched, count, cfg.seed, workers);
        rows = Matrix(res.records.size(), d + 1);
        for (std::size_t i = 0; i < res.records.size(); ++i) {
          for (std::size_t k = 0; k < d; ++k)
            rows.at(i, k) = res.records[i].x_T[k];
          rows.at(i, d) =
              base_log_weight(res.records[i].log_rn_ref_over_model,
                              tr(std::span<const double>(res.records[i].x_T)));
        }
      }
      auto header = csv_state_header(d);
      header.push_back("log_w");
      write_csv(out_csv, header, rows, cfg.target_hash);
    }
  } catch (const std::exception& err) {
    std::cerr << err.what() << "\n";
    return kExitAborted;
  }
  return kExitOk;
}

int cmd_evaluate(const EvaluateArgs& args) {
  for (const std::string& name : args.metrics) {
    if (std::count(valid_metric_names().begin(), valid_metric_names().end(),
                   name) == 0) {
      std::cerr << "unknown metric '" << name << "'; valid names:";
      for (const std::string& v : valid_metric_names()) std::cerr << " " << v;
      std::cerr << "\n";
      return kExitBadInput;
    }
  }
  if (args.metrics.empty()) {
    std::cerr << "no metrics requested\n";
    return kExitBadInput;
  }

  CsvTable samples;
  try {
    samples = read_csv(args.samples_csv);
  } catch (const std::exception& err) {
    std::cerr << err.what() << "\n";
    return kExitBadInput;
  }
  const std::size_t dim = state_columns(samples);
  if (dim == 0) {
    std::cerr << "sample csv has no x_* columns\n";
    return kExitBadInput;
  }

  std::optional<CsvTable> reference;
  LoadedTarget target;
  try {
    if (!args.reference_csv.empty()) reference = read_csv(args.reference_csv);
    if (!args.target_json.empty()) target = load_target(args.target_json);
  } catch (const std::exception& err) {
    std::cerr << err.what() << "\n";
    return kExitBadInput;
  }

  // Hash guard: any pair of known provenance tags must agree.
  if (!args.force) {
    const std::string& sample_hash = samples.target_hash;
    std::string other;
    if (reference && !reference->target_hash.empty()) other = reference->target_hash;
    if (!args.target_json.empty()) other = target.hash;
    if (!sample_hash.empty() && !other.empty() && sample_hash != other) {
      std::cerr << "target hash mismatch between inputs (use --force to "
                   "compare anyway): "
                << sample_hash << " vs " << other << "\n";
      return kExitBadInput;
    }
  }

  if (args.lambda < 0.0 || args.lambda > 1.0) {
    std::cerr << "lambda outside [0, 1]\n";
    return kExitBadInput;
  }

  Json out;
  try {
    Matrix xs(samples.values.rows, dim);
    for (std::size_t r = 0; r < xs.rows; ++r)
      std::copy(samples.values.row(r), samples.values.row(r) + dim, xs.row(r));

    for (const std::string& name : args.metrics) {
      if (name == "mmd" || name == "sinkhorn") {
        if (!reference) throw std::invalid_argument(name + " needs --ref samples");
        const std::size_t rdim = state_columns(*reference);
        if (rdim != dim)
          throw std::invalid_argument("dimension mismatch between csv files");
        Matrix ys(reference->values.rows, rdim);
        for (std::size_t r = 0; r < ys.rows; ++r)
          std::copy(reference->values.row(r), reference->values.row(r) + rdim,
                    ys.row(r));
        if (name == "mmd") {
          out["mmd"] = mmd(xs, ys);
        } else {
          const SinkhornResult sk = sinkhorn(xs, ys);
          out["sinkhorn"] = {{"cost", sk.cost},
                             {"converged", sk.converged},
                             {"marginal_violation", sk.marginal_violation},
                             {"iterations", sk.iterations}};
        }
      } else if (name == "w2_energy") {
        if (!reference || !target.continuous)
          throw std::invalid_argument(
              "w2_energy needs --ref samples and a continuous --target spec");
        const std::size_t rdim = state_columns(*reference);
        if (rdim != dim)
          throw std::invalid_argument("dimension mismatch between csv files");
        Vec ea, eb;
        for (std::size_t r = 0; r < xs.rows; ++r)
          ea.push_back(potential(*target.continuous,
                                 std::span<const double>(xs.row(r), dim)));
        for (std::size_t r = 0; r < reference->values.rows; ++r)
          eb.push_back(potential(
              *target.continuous,
              std::span<const double>(reference->values.row(r), dim)));
        out["w2_energy"] = w2_1d(ea, eb);
      } else {
        // Discrete metrics.
        if (!target.discrete)
          throw std::invalid_argument(name + " needs a discrete --target spec");
        const DiscreteTarget& dt = *target.discrete;
        if (dt.dim() != dim)
          throw std::invalid_argument("dimension mismatch with the target spec");
        const auto states = csv_to_states(samples, dim);
        if (name == "magnetization") {
          out["magnetization"] = magnetization(states, dt.alphabet());
          if (reference) {
            const auto ref_states = csv_to_states(*reference, dim);
            out["magnetization_error"] =
                std::abs(magnetization(states, dt.alphabet()) -
                         magnetization(ref_states, dt.alphabet()));
          }
        } else if (name == "two_point_corr") {
          if (dt.kind == DiscreteKind::MaxCut)
            throw std::invalid_argument("two_point_corr needs a lattice target");
          Json corr = Json::array();
          for (std::size_t r = 1; r < dt.lattice_side; ++r)
            corr.push_back(two_point_corr(states, dt.lattice_side, r, dt.alphabet()));
          out["two_point_corr"] = corr;
          if (reference) {
            const auto ref_states = csv_to_states(*reference, dim);
            double worst = 0.0;
            for (std::size_t r = 1; r < dt.lattice_side; ++r)
              worst = std::max(
                  worst, std::abs(two_point_corr(states, dt.lattice_side, r,
                                                 dt.alphabet()) -
                                  two_point_corr(ref_states, dt.lattice_side, r,
                                                 dt.alphabet())));
            out["two_point_corr_error"] = worst;
          }
        } else if (name == "tv") {
          const Enumeration exact = exact_interpolant(dt, args.lambda);
          out["tv"] = tv_empirical(states, exact, dt.alphabet());
        }
      }
    }
  } catch (const std::exception& err) {
    std::cerr << err.what() << "\n";
    return kExitBadInput;
  }

  const std::string text = out.dump(2) + "\n";
  std::cout << text;
  if (!args.out_json.empty()) write_text(args.out_json, text);
  return kExitOk;
}

int cmd_oracle(const std::string& target_json, double lambda,
               const std::string& out_csv) {
  if (lambda < 0.0 || lambda > 1.0) {
    std::cerr << "lambda outside [0, 1]\n";
    return kExitBadInput;
  }
  LoadedTarget target;
  try {
    target = load_target(target_json);
    if (!target.discrete)
      throw std::invalid_argument("oracle needs a discrete target spec");
    const Enumeration exact = exact_interpolant(*target.discrete, lambda);
    const std::size_t d = target.discrete->dim();
    Matrix rows(exact.states.size(), d + 1);
    for (std::size_t i = 0; i < exact.states.size(); ++i) {
      for (std::size_t k = 0; k < d; ++k) rows.at(i, k) = exact.states[i][k];
      rows.at(i, d) = exact.probs[i];
    }
    auto header = csv_state_header(d);
    header.push_back("prob");
    write_csv(out_csv, header, rows, target.hash);
  } catch (const std::exception& err) {
    std::cerr << err.what() << "\n";
    return kExitBadInput;
  }
  return kExitOk;
}

int cmd_baseline(const BaselineArgs& args) {
  LoadedTarget target;
  try {
    target = load_target(args.target_json);
    if (!target.discrete)
      throw std::invalid_argument("baseline needs a discrete target spec");
    std::vector<std::vector<int>> samples;
    if (args.algorithm == "mh")
      samples = mh_chain(*target.discrete, args.chain);
    else if (args.algorithm == "sw")
      samples = sw_chain(*target.discrete, args.chain);
    else
      throw std::invalid_argument("unknown baseline algorithm '" +
                                  args.algorithm + "' (use mh or sw)");
    const std::size_t d = target.discrete->dim();
    Matrix rows(samples.size(), d);
    for (std::size_t i = 0; i < samples.size(); ++i)
      for (std::size_t k = 0; k < d; ++k) rows.at(i, k) = samples[i][k];
    write_csv(args.out_csv, csv_state_header(d), rows, target.hash);
  } catch (const std::exception& err) {
    std::cerr << err.what() << "\n";
    return kExitBadInput;
  }
  return kExitOk;
}

}  // namespace pdns
