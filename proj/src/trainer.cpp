#include "pdns/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pdns/metrics.hpp"

namespace pdns {
namespace {

constexpr std::uint64_t kInitStream = 0x696e6974ULL;    // "init"
constexpr std::uint64_t kTrainStream = 0x7472616eULL;   // "tran"
constexpr std::uint64_t kStageStream = 0x73746167ULL;   // "stag"
constexpr std::uint64_t kFinalStream = 0x66696e6cULL;   // "finl"

std::uint64_t stage_seed(const TrainConfig& cfg, std::size_t stage,
                         std::size_t refresh) {
  return derive_seed(cfg.seed ^ kStageStream, stage * 4096 + refresh);
}

struct StageWeights {
  Vec base_normalized;
  Vec prox_normalized;
  double ess_local = 1.0;
  double ess_global = 1.0;
  double kl = 0.0;
};

StageWeights stage_weights(const Vec& rewards, const Vec& log_rns,
                           const SchedulerState& state) {
  const std::size_t n = rewards.size();
  Vec base(n), prox(n);
  for (std::size_t i = 0; i < n; ++i) {
    base[i] = base_log_weight(log_rns[i], rewards[i]);
    prox[i] = proximal_log_weight(log_rns[i], rewards[i], state);
  }
  StageWeights out;
  auto nb = normalize_and_ess(base);
  auto np = normalize_and_ess(prox);
  out.base_normalized = std::move(nb.weights);
  out.prox_normalized = std::move(np.weights);
  out.ess_global = nb.ess;
  out.ess_local = np.ess;
  out.kl = kl_estimate(out.prox_normalized);
  return out;
}

void mean_and_se(const Vec& xs, double& mean, double& se) {
  const double n = static_cast<double>(xs.size());
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= std::max(1.0, n - 1.0);
  se = std::sqrt(var / n);
}

// One filled stage buffer with the per-entry reward / log RN kept separate
// (the lambda weight variant needs them individually).
template <typename State>
struct Fill {
  std::vector<State> states;
  Vec rewards;
  Vec log_rns;
  std::size_t dropped = 0;
  double soc = std::numeric_limits<double>::quiet_NaN();
  double soc_se = std::numeric_limits<double>::quiet_NaN();
};

Fill<Vec> fill_continuous(const ContinuousWorld& world, const ParamStore& policy,
                          std::size_t n, std::uint64_t seed, int workers) {
  const RolloutResult res = rollout(policy, world.net, world.sched, n, seed, workers);
  const TerminalReward tr = world.reward();
  Fill<Vec> out;
  out.dropped = res.dropped;
  Vec soc_terms;
  soc_terms.reserve(res.records.size());
  for (const TrajectoryRecord& rec : res.records) {
    const double r = tr(std::span<const double>(rec.x_T));
    if (!std::isfinite(r)) {
      ++out.dropped;
      continue;
    }
    soc_terms.push_back(rec.control_energy - r);
    out.states.push_back(rec.x_T);
    out.rewards.push_back(r);
    out.log_rns.push_back(rec.log_rn_ref_over_model);
  }
  if (out.states.empty())
    throw std::runtime_error("trainer: every rollout was dropped");
  mean_and_se(soc_terms, out.soc, out.soc_se);
  return out;
}

Fill<std::vector<int>> fill_discrete(const DiscreteWorld& world,
                                     const ParamStore& policy, std::size_t n,
                                     std::uint64_t seed, int workers) {
  const DiscreteRolloutResult res =
      rollout_discrete(policy, world.net, world.ctmc_steps, n, seed, workers);
  const TerminalReward tr = world.reward();
  Fill<std::vector<int>> out;
  for (const DiscreteTrajectoryRecord& rec : res.records) {
    const double r = tr(std::span<const int>(rec.x_T));
    if (!std::isfinite(r) || !std::isfinite(rec.log_rn_ref_over_model)) {
      ++out.dropped;
      continue;
    }
    out.states.push_back(rec.x_T);
    out.rewards.push_back(r);
    out.log_rns.push_back(rec.log_rn_ref_over_model);
  }
  if (out.states.empty())
    throw std::runtime_error("trainer: every rollout was dropped");
  return out;
}

template <typename State>
ReplayBuffer<State> make_buffer(std::vector<State>&& states, const Vec& weights,
                                std::size_t stage) {
  ReplayBuffer<State> buffer;
  buffer.stage = stage;
  buffer.entries.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i)
    buffer.entries.push_back(
        {std::move(states[i]), std::log(std::max(weights[i], 1e-300)),
         weights[i]});
  return buffer;
}

template <typename State>
ReplayBuffer<State> uniform_buffer(std::vector<State>&& states,
                                   std::size_t stage) {
  const double w = 1.0 / static_cast<double>(states.size());
  ReplayBuffer<State> buffer;
  buffer.stage = stage;
  buffer.entries.reserve(states.size());
  for (State& s : states) buffer.entries.push_back({std::move(s), 0.0, w});
  return buffer;
}

std::vector<std::size_t> draw_indices(std::size_t count, std::size_t upper,
                                      Rng& rng) {
  std::vector<std::size_t> idx(count);
  for (std::size_t& v : idx) v = static_cast<std::size_t>(rng.below(upper));
  return idx;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch == 0 || buffer == 0 || batch > buffer)
    throw std::invalid_argument("train config: need 0 < batch <= buffer");
  if (mask_lambda_min <= 0.0 || mask_lambda_min > 0.5)
    throw std::invalid_argument("train config: mask_lambda_min must be in (0, 0.5]");
  if (replicates == 0)
    throw std::invalid_argument("train config: replicates must be positive");
  if (lr < 0.0) throw std::invalid_argument("train config: lr must be >= 0");
  if (ema_decay < 0.0 || ema_decay >= 1.0)
    throw std::invalid_argument("train config: ema_decay must be in [0, 1)");
  if (scheduler_mode == SchedulerState::Mode::Predefined) {
    if (lambda_schedule.size() != stages)
      throw std::invalid_argument(
          "train config: predefined schedule needs one lambda per stage");
    double prev = 1.0;
    for (double lam : lambda_schedule) {
      if (lam < 0.0 || lam > 1.0)
        throw std::invalid_argument("train config: lambda outside [0, 1]");
      if (lam > prev)
        throw std::invalid_argument("train config: lambda schedule must be nonincreasing");
      prev = lam;
    }
    if (stages > 0 && lambda_schedule.back() != 0.0)
      throw std::invalid_argument("train config: lambda schedule must end at 0");
  } else {
    if (trust_radius <= 0.0)
      throw std::invalid_argument("train config: trust radius must be > 0");
    if (buffer < 100)
      throw std::invalid_argument(
          "train config: adaptive scheduler needs a buffer of at least 100");
  }
}

ContinuousBatch prepare_continuous_batch(const ReplayBuffer<Vec>& buffer,
                                         std::span<const std::size_t> indices,
                                         const OuSchedule& sched, Rng& rng) {
  if (buffer.entries.empty())
    throw std::invalid_argument("prepare batch: empty buffer");
  const std::size_t b = indices.size();
  const std::size_t d = buffer.entries[0].state.size();
  const double scale = static_cast<double>(buffer.entries.size()) /
                       static_cast<double>(b);
  ContinuousBatch batch;
  batch.ts.resize(b);
  batch.xt = Matrix(b, d);
  batch.score_target = Matrix(b, d);
  batch.weights.resize(b);
  Vec x0(d);
  for (std::size_t i = 0; i < b; ++i) {
    const auto& entry = buffer.entries[indices[i]];
    for (double& v : x0) v = sched.sigma_bar * rng.normal();
    double t = rng.uniform() * sched.horizon;
    // Redraw if the conditional score is singular at the drawn time.
    while (true) {
      const double ct = sched.c_coeff(t);
      if (1.0 - ct * ct > 1e-12) break;
      t = rng.uniform() * sched.horizon;
    }
    const Vec xt = bridge_sample(sched, x0, entry.state, t, rng);
    const Vec score = cond_score(sched, xt, entry.state, t);
    const double sig = sched.sigma(t);
    batch.ts[i] = t;
    for (std::size_t k = 0; k < d; ++k) {
      batch.xt.at(i, k) = xt[k];
      batch.score_target.at(i, k) = sig * score[k];
    }
    batch.weights[i] = entry.normalized_weight * scale;
  }
  return batch;
}

std::pair<double, std::vector<Array>> wdce_continuous_eval(
    const ParamStore& params, const ControlNetSpec& spec,
    const ContinuousBatch& batch) {
  MlpCache cache;
  const Matrix u = forward_control_batch_times(params, spec, batch.ts, batch.xt, &cache);
  Matrix dout(u.rows, u.cols);
  double loss = 0.0;
  for (std::size_t i = 0; i < u.rows; ++i) {
    const double w = batch.weights[i];
    for (std::size_t k = 0; k < u.cols; ++k) {
      const double resid = u.at(i, k) - batch.score_target.at(i, k);
      loss += 0.5 * w * resid * resid;
      dout.at(i, k) = w * resid;
    }
  }
  return {loss, backward_control(params, spec, cache, dout)};
}

DiscreteBatch prepare_discrete_batch(const ReplayBuffer<std::vector<int>>& buffer,
                                     std::span<const std::size_t> indices,
                                     double lambda_min, std::size_t replicates,
                                     int mask_symbol, Rng& rng) {
  if (buffer.entries.empty())
    throw std::invalid_argument("prepare batch: empty buffer");
  const double scale = static_cast<double>(buffer.entries.size()) /
                       static_cast<double>(indices.size());
  DiscreteBatch batch;
  for (const std::size_t idx : indices) {
    const auto& entry = buffer.entries[idx];
    for (std::size_t rep = 0; rep < replicates; ++rep) {
      std::vector<int> masked;
      double lambda = 0.0;
      bool has_mask = false;
      for (int attempt = 0; attempt < 2 && !has_mask; ++attempt) {
        lambda = rng.uniform(lambda_min, 1.0);
        masked = mask_corrupt(entry.state, lambda, mask_symbol, rng);
        for (int v : masked)
          if (v == mask_symbol) {
            has_mask = true;
            break;
          }
      }
      if (!has_mask) {
        ++batch.skipped;
        continue;
      }
      std::vector<std::pair<std::size_t, int>> targets;
      for (std::size_t pos = 0; pos < masked.size(); ++pos)
        if (masked[pos] == mask_symbol)
          targets.emplace_back(pos, entry.state[pos]);
      batch.masked.push_back(std::move(masked));
      batch.targets.push_back(std::move(targets));
      batch.scales.push_back(entry.normalized_weight * scale / lambda /
                             static_cast<double>(replicates));
    }
  }
  return batch;
}

std::pair<double, std::vector<Array>> wdce_discrete_eval(
    const ParamStore& params, const ScoreNetSpec& spec,
    const DiscreteBatch& batch) {
  if (batch.masked.empty()) {
    std::vector<Array> zero;
    for (const Array& p : params.params) zero.push_back(Array::zeros(p.shape));
    return {0.0, zero};
  }
  MlpCache cache;
  const Matrix probs = forward_score_batch(params, spec, batch.masked, &cache);
  Matrix dprobs(probs.rows, probs.cols);
  const std::size_t n = spec.alphabet;
  double loss = 0.0;
  for (std::size_t row = 0; row < probs.rows; ++row) {
    const double scale = batch.scales[row];
    if (scale == 0.0) continue;
    for (const auto& [pos, value] : batch.targets[row]) {
      const std::size_t col = pos * n + static_cast<std::size_t>(value);
      const double s = probs.at(row, col);
      loss -= scale * std::log(std::max(s, 1e-300));
      dprobs.at(row, col) = -scale / std::max(s, 1e-12);
    }
  }
  return {loss, backward_score(params, spec, cache, dprobs)};
}

namespace {

// Shared inner optimization loop. refill() re-populates the buffer under
// the stage's fixed eta/lambda; it runs after every buffer_refresh_every
// gradient updates.
template <typename State, typename PrepareEval>
double inner_loop(ParamStore& params, const TrainConfig& cfg,
                  ReplayBuffer<State>& buffer, std::size_t steps, Rng& rng,
                  const std::function<void()>& refill, std::size_t& refreshes,
                  PrepareEval&& step_fn) {
  double last_loss = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t s = 1; s <= steps; ++s) {
    const auto idx = draw_indices(cfg.batch, buffer.entries.size(), rng);
    const auto [loss, grads] = step_fn(params, buffer, idx, rng);
    adam_step(params, grads, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    ema_update(params, cfg.ema_decay);
    last_loss = loss;
    if (cfg.buffer_refresh_every > 0 && s % cfg.buffer_refresh_every == 0 &&
        refill) {
      refill();
      ++refreshes;
      buffer.refresh_count = refreshes;
    }
  }
  return last_loss;
}

}  // namespace

ParamStore run_pdns(const ContinuousWorld& world, const TrainConfig& cfg,
                    RunReport& report, const StageCallback& on_stage) {
  cfg.validate();
  world.target.validate();
  world.sched.validate();
  report = RunReport{};

  Rng init_rng(derive_seed(cfg.seed, kInitStream));
  ParamStore params = init_params(world.net.widths(), init_rng);
  Rng train_rng(derive_seed(cfg.seed, kTrainStream));
  SchedulerState state;
  state.mode = cfg.scheduler_mode;
  state.target_variant = cfg.prox_target;

  auto step_fn = [&world](ParamStore& p, const ReplayBuffer<Vec>& buf,
                          std::span<const std::size_t> idx, Rng& rng) {
    const ContinuousBatch batch = prepare_continuous_batch(buf, idx, world.sched, rng);
    return wdce_continuous_eval(p, world.net, batch);
  };

  // Stage 0: annealed warm start with uniform weights.
  {
    StageLog log;
    log.k = 0;
    log.lambda = 1.0;
    std::vector<Vec> states = annealed_rollout(world.reward(), world.sched,
                                               cfg.buffer, stage_seed(cfg, 0, 0),
                                               cfg.workers);
    ReplayBuffer<Vec> buffer = uniform_buffer(std::move(states), 0);
    std::size_t refreshes = 0;
    log.loss = inner_loop(params, cfg, buffer, cfg.warm_start_steps, train_rng,
                          {}, refreshes, step_fn);
    log.ess_local = 1.0;
    log.kl = 0.0;
    report.stages.push_back(log);
    if (on_stage) on_stage(log, params);
  }

  for (std::size_t k = 1; k <= cfg.stages && !report.aborted; ++k) {
    StageLog log;
    log.k = k;
    try {
      std::size_t refresh = 0;
      Fill<Vec> fill = fill_continuous(world, params.ema_snapshot(), cfg.buffer,
                                       stage_seed(cfg, k, refresh), cfg.workers);
      log.dropped = fill.dropped;
      log.soc_policy_cost = fill.soc;
      log.soc_policy_se = fill.soc_se;

      if (cfg.scheduler_mode == SchedulerState::Mode::Adaptive) {
        Vec base(fill.rewards.size());
        for (std::size_t i = 0; i < base.size(); ++i)
          base[i] = base_log_weight(fill.log_rns[i], fill.rewards[i]);
        state.advance(adaptive_eta(base, cfg.trust_radius));
      } else {
        predefined_eta(state, cfg.lambda_schedule, k);
      }
      log.eta = state.eta();
      log.lambda = state.lambda();

      StageWeights weights = stage_weights(fill.rewards, fill.log_rns, state);
      log.ess_local = weights.ess_local;
      log.ess_global = weights.ess_global;
      log.kl = weights.kl;

      const double collapse_gate = 10.0 / static_cast<double>(cfg.buffer);
      if (weights.ess_local < collapse_gate)
        throw std::runtime_error("stage " + std::to_string(k) +
                                 ": weight collapse (local ESS " +
                                 std::to_string(weights.ess_local) + " < " +
                                 std::to_string(collapse_gate) + ")");

      ReplayBuffer<Vec> buffer =
          make_buffer(std::move(fill.states), weights.prox_normalized, k);
      if (cfg.algorithm == TrainConfig::Algorithm::ResampleBased)
        buffer = resample(buffer, train_rng);

      auto refill = [&] {
        ++refresh;
        Fill<Vec> f = fill_continuous(world, params.ema_snapshot(), cfg.buffer,
                                      stage_seed(cfg, k, refresh), cfg.workers);
        log.dropped += f.dropped;
        StageWeights w = stage_weights(f.rewards, f.log_rns, state);
        buffer = make_buffer(std::move(f.states), w.prox_normalized, k);
        if (cfg.algorithm == TrainConfig::Algorithm::ResampleBased)
          buffer = resample(buffer, train_rng);
      };

      std::size_t refreshes = 0;
      log.loss = inner_loop(params, cfg, buffer, cfg.inner_steps, train_rng,
                            refill, refreshes, step_fn);
      log.refreshes = refreshes;
    } catch (const std::exception& err) {
      report.aborted = true;
      report.abort_reason = err.what();
    }
    report.stages.push_back(log);
    if (on_stage) on_stage(log, params);
  }

  // Final evaluation under the trained (EMA) policy.
  if (!report.aborted) {
    Fill<Vec> fin =
        fill_continuous(world, params.ema_snapshot(), cfg.final_eval_samples,
                        derive_seed(cfg.seed, kFinalStream), cfg.workers);
    Vec base(fin.rewards.size());
    for (std::size_t i = 0; i < base.size(); ++i)
      base[i] = base_log_weight(fin.log_rns[i], fin.rewards[i]);
    report.global_ess = normalize_and_ess(base).ess;
    if (base.size() >= 100) {
      const LogZEstimate lz = logz_estimate(base, 0.0);
      report.logz = lz.log_z;
      report.logz_se = lz.std_error;
    }
    report.final_soc_cost = fin.soc;
  }
  return params;
}

ParamStore run_pdns(const DiscreteWorld& world, const TrainConfig& cfg,
                    RunReport& report, const StageCallback& on_stage) {
  cfg.validate();
  world.target.validate();
  if (world.net.seq_len != world.target.dim() ||
      world.net.alphabet != world.target.alphabet())
    throw std::invalid_argument("trainer: score net does not match the target");
  report = RunReport{};

  Rng init_rng(derive_seed(cfg.seed, kInitStream));
  ParamStore params = init_params(world.net.widths(), init_rng);
  Rng train_rng(derive_seed(cfg.seed, kTrainStream));
  SchedulerState state;
  state.mode = cfg.scheduler_mode;
  state.target_variant = cfg.prox_target;

  auto step_fn = [&world, &cfg](ParamStore& p,
                                const ReplayBuffer<std::vector<int>>& buf,
                                std::span<const std::size_t> idx, Rng& rng) {
    const DiscreteBatch batch =
        prepare_discrete_batch(buf, idx, cfg.mask_lambda_min, cfg.replicates,
                               world.net.mask_symbol(), rng);
    return wdce_discrete_eval(p, world.net, batch);
  };

  // Stage 0: the zero-initialized score net is exactly the uniform
  // reference process; nothing to train.
  {
    StageLog log;
    log.k = 0;
    log.lambda = 1.0;
    log.ess_local = 1.0;
    log.kl = 0.0;
    report.stages.push_back(log);
    if (on_stage) on_stage(log, params);
  }

  for (std::size_t k = 1; k <= cfg.stages && !report.aborted; ++k) {
    StageLog log;
    log.k = k;
    try {
      std::size_t refresh = 0;
      Fill<std::vector<int>> fill =
          fill_discrete(world, params.ema_snapshot(), cfg.buffer,
                        stage_seed(cfg, k, refresh), cfg.workers);
      log.dropped = fill.dropped;

      if (cfg.scheduler_mode == SchedulerState::Mode::Adaptive) {
        Vec base(fill.rewards.size());
        for (std::size_t i = 0; i < base.size(); ++i)
          base[i] = base_log_weight(fill.log_rns[i], fill.rewards[i]);
        state.advance(adaptive_eta(base, cfg.trust_radius));
      } else {
        predefined_eta(state, cfg.lambda_schedule, k);
      }
      log.eta = state.eta();
      log.lambda = state.lambda();

      StageWeights weights = stage_weights(fill.rewards, fill.log_rns, state);
      log.ess_local = weights.ess_local;
      log.ess_global = weights.ess_global;
      log.kl = weights.kl;

      const double collapse_gate = 10.0 / static_cast<double>(cfg.buffer);
      if (weights.ess_local < collapse_gate)
        throw std::runtime_error("stage " + std::to_string(k) +
                                 ": weight collapse (local ESS " +
                                 std::to_string(weights.ess_local) + " < " +
                                 std::to_string(collapse_gate) + ")");

      ReplayBuffer<std::vector<int>> buffer =
          make_buffer(std::move(fill.states), weights.prox_normalized, k);
      if (cfg.algorithm == TrainConfig::Algorithm::ResampleBased)
        buffer = resample(buffer, train_rng);

      auto refill = [&] {
        ++refresh;
        Fill<std::vector<int>> f =
            fill_discrete(world, params.ema_snapshot(), cfg.buffer,
                          stage_seed(cfg, k, refresh), cfg.workers);
        log.dropped += f.dropped;
        StageWeights w = stage_weights(f.rewards, f.log_rns, state);
        buffer = make_buffer(std::move(f.states), w.prox_normalized, k);
        if (cfg.algorithm == TrainConfig::Algorithm::ResampleBased)
          buffer = resample(buffer, train_rng);
      };

      std::size_t refreshes = 0;
      log.loss = inner_loop(params, cfg, buffer, cfg.inner_steps, train_rng,
                            refill, refreshes, step_fn);
      log.refreshes = refreshes;
    } catch (const std::exception& err) {
      report.aborted = true;
      report.abort_reason = err.what();
    }
    report.stages.push_back(log);
    if (on_stage) on_stage(log, params);
  }

  if (!report.aborted) {
    Fill<std::vector<int>> fin =
        fill_discrete(world, params.ema_snapshot(), cfg.final_eval_samples,
                      derive_seed(cfg.seed, kFinalStream), cfg.workers);
    Vec base(fin.rewards.size());
    for (std::size_t i = 0; i < base.size(); ++i)
      base[i] = base_log_weight(fin.log_rns[i], fin.rewards[i]);
    report.global_ess = normalize_and_ess(base).ess;
    if (base.size() >= 100) {
      const LogZEstimate lz = logz_estimate(base, world.reward().log_nu_offset());
      report.logz = lz.log_z;
      report.logz_se = lz.std_error;
    }
  }
  return params;
}

}  // namespace pdns
