#include "pdns/config.hpp"

#include <fstream>
#include <set>

#include "pdns/io.hpp"

namespace pdns {
namespace {

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw std::invalid_argument("config error at " + path + ": " + message);
}

double get_number(const Json& block, const std::string& path,
                  const std::string& key, std::optional<double> fallback = {}) {
  if (!block.contains(key)) {
    if (fallback) return *fallback;
    fail(path + "." + key, "missing required number");
  }
  if (!block[key].is_number()) fail(path + "." + key, "expected a number");
  return block[key].get<double>();
}

std::size_t get_count(const Json& block, const std::string& path,
                      const std::string& key,
                      std::optional<std::size_t> fallback = {}) {
  if (!block.contains(key)) {
    if (fallback) return *fallback;
    fail(path + "." + key, "missing required count");
  }
  if (!block[key].is_number_integer() || block[key].get<long long>() < 0)
    fail(path + "." + key, "expected a nonnegative integer");
  return block[key].get<std::size_t>();
}

std::string get_string(const Json& block, const std::string& path,
                       const std::string& key,
                       std::optional<std::string> fallback = {}) {
  if (!block.contains(key)) {
    if (fallback) return *fallback;
    fail(path + "." + key, "missing required string");
  }
  if (!block[key].is_string()) fail(path + "." + key, "expected a string");
  return block[key].get<std::string>();
}

std::vector<std::size_t> get_size_list(const Json& block,
                                       const std::string& path,
                                       const std::string& key,
                                       std::vector<std::size_t> fallback) {
  if (!block.contains(key)) return fallback;
  if (!block[key].is_array()) fail(path + "." + key, "expected an array");
  std::vector<std::size_t> out;
  for (const Json& v : block[key]) {
    if (!v.is_number_integer() || v.get<long long>() <= 0)
      fail(path + "." + key, "expected positive integers");
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

}  // namespace

bool target_block_is_discrete(const Json& block) {
  const std::string kind = block.value("kind", "");
  return kind == "ising" || kind == "potts" || kind == "maxcut";
}

ContinuousTarget parse_continuous_target(const Json& block) {
  const std::string path = "target";
  ContinuousTarget t;
  const std::string kind = get_string(block, path, "kind");
  if (kind == "many_well")
    t.kind = ContinuousKind::ManyWell;
  else if (kind == "funnel")
    t.kind = ContinuousKind::Funnel;
  else if (kind == "gmm")
    t.kind = ContinuousKind::Gmm;
  else if (kind == "mos")
    t.kind = ContinuousKind::MixtureOfStudents;
  else if (kind == "dw4")
    t.kind = ContinuousKind::DoubleWell4;
  else if (kind == "lj")
    t.kind = ContinuousKind::LennardJones;
  else
    fail(path + ".kind", "unknown continuous target '" + kind + "'");

  t.beta = get_number(block, path, "beta", 1.0);
  if (t.beta <= 0) fail(path + ".beta", "beta must be positive");
  t.grad_clip = get_number(block, path, "grad_clip", 100.0);

  switch (t.kind) {
    case ContinuousKind::ManyWell:
      t.dim = get_count(block, path, "dim", std::size_t{5});
      t.delta = get_number(block, path, "delta", 4.0);
      break;
    case ContinuousKind::Funnel:
      t.dim = get_count(block, path, "dim", std::size_t{10});
      t.funnel_sigma = get_number(block, path, "sigma", 3.0);
      break;
    case ContinuousKind::Gmm:
    case ContinuousKind::MixtureOfStudents: {
      if (!block.contains("centers") || !block["centers"].is_array() ||
          block["centers"].empty())
        fail(path + ".centers", "mixture targets need a center list");
      for (const Json& c : block["centers"]) {
        if (!c.is_array() || c.empty())
          fail(path + ".centers", "each center must be a nonempty array");
        Vec center;
        for (const Json& v : c) center.push_back(v.get<double>());
        t.centers.push_back(std::move(center));
      }
      t.dim = t.centers[0].size();
      t.mode_sigma = get_number(block, path, "mode_sigma", 1.0);
      t.student_dof = get_number(block, path, "dof", 2.0);
      break;
    }
    case ContinuousKind::DoubleWell4:
      t.dim = 8;
      t.dw_a = get_number(block, path, "a", 0.0);
      t.dw_b = get_number(block, path, "b", -4.0);
      t.dw_c = get_number(block, path, "c", 0.9);
      t.dw_d0 = get_number(block, path, "d0", 1.0);
      t.dw_tau = get_number(block, path, "tau", 1.0);
      break;
    case ContinuousKind::LennardJones:
      t.lj_n = get_count(block, path, "particles", std::size_t{13});
      t.dim = 3 * t.lj_n;
      t.lj_rm = get_number(block, path, "r_m", 1.0);
      t.lj_eps = get_number(block, path, "eps", 1.0);
      t.lj_c = get_number(block, path, "com_coupling", 0.5);
      t.lj_tau = get_number(block, path, "tau", 1.0);
      break;
  }
  try {
    t.validate();
  } catch (const std::exception& e) {
    fail(path, e.what());
  }
  return t;
}

DiscreteTarget parse_discrete_target(const Json& block) {
  const std::string path = "target";
  DiscreteTarget t;
  const std::string kind = get_string(block, path, "kind");
  if (kind == "ising")
    t.kind = DiscreteKind::Ising;
  else if (kind == "potts")
    t.kind = DiscreteKind::Potts;
  else if (kind == "maxcut")
    t.kind = DiscreteKind::MaxCut;
  else
    fail(path + ".kind", "unknown discrete target '" + kind + "'");

  t.beta = get_number(block, path, "beta");
  if (t.beta < 0) fail(path + ".beta", "beta must be nonnegative");
  t.coupling = get_number(block, path, "coupling", 1.0);
  if (t.kind == DiscreteKind::MaxCut) {
    if (!block.contains("edges") || !block["edges"].is_array())
      fail(path + ".edges", "maxcut needs an edge list");
    for (const Json& e : block["edges"]) {
      if (!e.is_array() || e.size() != 2)
        fail(path + ".edges", "each edge must be a pair");
      t.graph_edges.emplace_back(e[0].get<std::size_t>(),
                                 e[1].get<std::size_t>());
    }
  } else {
    t.lattice_side = get_count(block, path, "side");
    if (t.kind == DiscreteKind::Potts)
      t.q = get_count(block, path, "q", std::size_t{4});
  }
  try {
    t.validate();
  } catch (const std::exception& e) {
    fail(path, e.what());
  }
  return t;
}

std::string hash_target_block(const Json& target) {
  return fnv1a_hex(target.dump());
}

RunConfig parse_run_config(const Json& doc) {
  RunConfig cfg;
  cfg.echo = doc;
  if (!doc.contains("target") || !doc["target"].is_object())
    fail("target", "missing target block");
  const Json& target = doc["target"];
  cfg.target_hash = hash_target_block(target);

  const bool discrete = target_block_is_discrete(target);
  const Json process = doc.value("process", Json::object());
  const Json net = doc.value("net", Json::object());

  if (discrete) {
    DiscreteWorld world;
    world.target = parse_discrete_target(target);
    if (process.contains("type") && process["type"] != "ctmc")
      fail("process.type", "discrete targets pair with the ctmc process");
    world.ctmc_steps = get_count(process, "process", "steps", std::size_t{128});
    if (world.ctmc_steps < 1) fail("process.steps", "need at least one step");
    world.net.seq_len = world.target.dim();
    world.net.alphabet = world.target.alphabet();
    world.net.hidden = get_size_list(net, "net", "hidden", {128, 128});
    cfg.discrete = std::move(world);
  } else {
    ContinuousWorld world;
    world.target = parse_continuous_target(target);
    if (process.contains("type") && process["type"] != "ou")
      fail("process.type", "continuous targets pair with the ou process");
    world.sched.sigma_bar = get_number(process, "process", "sigma_bar", 2.0);
    world.sched.alpha_min = get_number(process, "process", "alpha_min", 0.1);
    world.sched.alpha_max = get_number(process, "process", "alpha_max", 10.0);
    world.sched.steps = get_count(process, "process", "steps", std::size_t{200});
    world.sched.memoryless_gate =
        get_number(process, "process", "memoryless_gate", 0.1);
    try {
      world.sched.validate();
    } catch (const std::exception& e) {
      fail("process", e.what());
    }
    world.net.dim = world.target.dim;
    world.net.hidden = get_size_list(net, "net", "hidden", {64, 64});
    world.net.time_feature_count =
        get_count(net, "net", "time_features", std::size_t{8});
    world.net.horizon = world.sched.horizon;
    cfg.continuous = std::move(world);
  }

  const Json train = doc.value("train", Json::object());
  TrainConfig& tc = cfg.train;
  tc.stages = get_count(train, "train", "stages", std::size_t{5});
  tc.inner_steps = get_count(train, "train", "inner_steps", std::size_t{200});
  tc.batch = get_count(train, "train", "batch", std::size_t{256});
  tc.buffer = get_count(train, "train", "buffer", std::size_t{2048});
  tc.buffer_refresh_every =
      get_count(train, "train", "buffer_refresh_every", std::size_t{0});
  const std::string algo = get_string(train, "train", "algorithm", "weight");
  if (algo == "weight")
    tc.algorithm = TrainConfig::Algorithm::WeightBased;
  else if (algo == "resample")
    tc.algorithm = TrainConfig::Algorithm::ResampleBased;
  else
    fail("train.algorithm", "expected 'weight' or 'resample'");
  const std::string variant = get_string(train, "train", "prox_target", "eta");
  if (variant == "eta")
    tc.prox_target = SchedulerState::Target::Eta;
  else if (variant == "lambda")
    tc.prox_target = SchedulerState::Target::Lambda;
  else
    fail("train.prox_target", "expected 'eta' or 'lambda'");

  const Json scheduler = train.value("scheduler", Json::object());
  const std::string mode = get_string(scheduler, "train.scheduler", "mode", "predefined");
  if (mode == "predefined") {
    tc.scheduler_mode = SchedulerState::Mode::Predefined;
    if (scheduler.contains("lambdas")) {
      for (const Json& v : scheduler["lambdas"])
        tc.lambda_schedule.push_back(v.get<double>());
    } else {
      // Linear ramp from 1 to 0 over the configured stage count.
      for (std::size_t k = 1; k <= tc.stages; ++k)
        tc.lambda_schedule.push_back(
            1.0 - static_cast<double>(k) / static_cast<double>(tc.stages));
      if (!tc.lambda_schedule.empty()) tc.lambda_schedule.back() = 0.0;
    }
  } else if (mode == "adaptive") {
    tc.scheduler_mode = SchedulerState::Mode::Adaptive;
    tc.trust_radius = get_number(scheduler, "train.scheduler", "epsilon", 0.1);
  } else {
    fail("train.scheduler.mode", "expected 'predefined' or 'adaptive'");
  }

  tc.lr = get_number(train, "train", "lr", 1e-3);
  tc.adam_beta1 = get_number(train, "train", "beta1", 0.0);
  tc.adam_beta2 = get_number(train, "train", "beta2", 0.9);
  tc.adam_eps = get_number(train, "train", "adam_eps", 1e-8);
  tc.ema_decay = get_number(train, "train", "ema_decay", 0.999);
  tc.mask_lambda_min = get_number(train, "train", "mask_lambda_min", 0.01);
  tc.replicates = get_count(train, "train", "replicates", std::size_t{1});
  tc.warm_start_steps =
      get_count(train, "train", "warm_start_steps", tc.inner_steps);
  tc.final_eval_samples =
      get_count(train, "train", "final_eval_samples", std::size_t{4096});
  tc.seed = doc.value("seed", std::uint64_t{0});
  tc.workers = static_cast<int>(doc.value("workers", 1));
  try {
    tc.validate();
  } catch (const std::exception& e) {
    fail("train", e.what());
  }

  const Json metrics = doc.value("metrics", Json::object());
  if (metrics.contains("names"))
    for (const Json& v : metrics["names"])
      cfg.metric_names.push_back(v.get<std::string>());
  cfg.metric_samples = get_count(metrics, "metrics", "samples", std::size_t{2000});
  cfg.seed = tc.seed;
  cfg.out_dir = doc.value("out_dir", std::string{"run"});
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("config error: cannot open " + path);
  Json doc;
  try {
    doc = Json::parse(is, nullptr, true, /*allow comments*/ true);
  } catch (const Json::parse_error& e) {
    throw std::invalid_argument("config error: " + std::string(e.what()));
  }
  return parse_run_config(doc);
}

}  // namespace pdns
