#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pdns/approximator.hpp"
#include "pdns/common.hpp"
#include "pdns/ctmc_engine.hpp"
#include "pdns/energy_targets.hpp"
#include "pdns/ou_reference.hpp"
#include "pdns/proximal_core.hpp"
#include "pdns/sde_engine.hpp"

namespace pdns {

struct TrainConfig {
  std::size_t stages = 5;
  std::size_t inner_steps = 200;
  std::size_t batch = 256;
  std::size_t buffer = 2048;
  std::size_t buffer_refresh_every = 0;  // gradient steps; 0 = once per stage
  enum class Algorithm { WeightBased, ResampleBased };
  Algorithm algorithm = Algorithm::WeightBased;
  SchedulerState::Target prox_target = SchedulerState::Target::Eta;
  SchedulerState::Mode scheduler_mode = SchedulerState::Mode::Predefined;
  Vec lambda_schedule;        // predefined mode, one value per stage, ends at 0
  double trust_radius = 0.1;  // adaptive mode KL radius
  double lr = 1e-3;
  double adam_beta1 = 0.0;
  double adam_beta2 = 0.9;
  double adam_eps = 1e-8;
  double ema_decay = 0.999;
  double mask_lambda_min = 0.01;  // discrete corruption lambda ~ U[min, 1]
  std::size_t replicates = 1;     // discrete corruptions per buffered sample
  std::size_t warm_start_steps = 200;  // continuous stage-0 gradient steps
  std::size_t final_eval_samples = 4096;
  std::uint64_t seed = 0;
  int workers = 1;

  void validate() const;
};

/// One line of the per-stage JSONL trace. eta is +inf for unregularized
/// stages and NaN for the warm-start stage (serialized as null).
struct StageLog {
  std::size_t k = 0;
  double lambda = 1.0;
  double eta = std::numeric_limits<double>::quiet_NaN();
  double ess_local = 1.0;
  double ess_global = std::numeric_limits<double>::quiet_NaN();
  double kl = 0.0;
  std::size_t dropped = 0;
  std::size_t refreshes = 0;
  double loss = std::numeric_limits<double>::quiet_NaN();
  // Control cost of the policy that filled this stage's buffer.
  double soc_policy_cost = std::numeric_limits<double>::quiet_NaN();
  double soc_policy_se = std::numeric_limits<double>::quiet_NaN();
};

struct RunReport {
  std::vector<StageLog> stages;
  double global_ess = std::numeric_limits<double>::quiet_NaN();
  double logz = std::numeric_limits<double>::quiet_NaN();
  double logz_se = std::numeric_limits<double>::quiet_NaN();
  double final_soc_cost = std::numeric_limits<double>::quiet_NaN();
  bool aborted = false;
  std::string abort_reason;
};

struct ContinuousWorld {
  ContinuousTarget target;
  OuSchedule sched;
  ControlNetSpec net;
  bool include_constants = true;

  TerminalReward reward() const {
    TerminalReward tr;
    tr.continuous = &target;
    tr.sigma_bar = sched.sigma_bar;
    tr.include_constants = include_constants;
    return tr;
  }
};

struct DiscreteWorld {
  DiscreteTarget target;
  ScoreNetSpec net;
  std::size_t ctmc_steps = 128;

  TerminalReward reward() const {
    TerminalReward tr;
    tr.discrete = &target;
    return tr;
  }
};

using StageCallback =
    std::function<void(const StageLog&, const ParamStore&)>;

// --- WDCE losses -----------------------------------------------------------

/// Bridge-matching batch: per entry a fresh X_0 ~ nu, t ~ U[0, T) and the
/// bridge draw X_t; the regression target is sigma_t * cond_score.
struct ContinuousBatch {
  Vec ts;
  Matrix xt;
  Matrix score_target;
  Vec weights;  // normalized weight times the batch scale
};

ContinuousBatch prepare_continuous_batch(
    const ReplayBuffer<Vec>& buffer, std::span<const std::size_t> indices,
    const OuSchedule& sched, Rng& rng);

/// Loss and parameter gradients of the weighted bridge-matching objective;
/// pure in params once the batch is fixed (finite-difference checkable).
std::pair<double, std::vector<Array>> wdce_continuous_eval(
    const ParamStore& params, const ControlNetSpec& spec,
    const ContinuousBatch& batch);

/// Masked cross-entropy batch: per entry (and replicate) a corruption level
/// lambda ~ U[lambda_min, 1] and the masked sequence; entries that keep no
/// mask after one redraw are skipped and counted.
struct DiscreteBatch {
  std::vector<std::vector<int>> masked;
  std::vector<std::vector<std::pair<std::size_t, int>>> targets;
  Vec scales;  // normalized weight * batch scale * (1/lambda) / replicates
  std::size_t skipped = 0;
};

DiscreteBatch prepare_discrete_batch(const ReplayBuffer<std::vector<int>>& buffer,
                                     std::span<const std::size_t> indices,
                                     double lambda_min, std::size_t replicates,
                                     int mask_symbol, Rng& rng);

std::pair<double, std::vector<Array>> wdce_discrete_eval(
    const ParamStore& params, const ScoreNetSpec& spec,
    const DiscreteBatch& batch);

// --- outer loops ------------------------------------------------------------

/// Full proximal run on a continuous world: annealed warm start, then the
/// scheduled stages. Returns the trained parameters (EMA copy is the
/// sampling policy).
ParamStore run_pdns(const ContinuousWorld& world, const TrainConfig& cfg,
                    RunReport& report, const StageCallback& on_stage = {});

/// Full proximal run on a discrete world; the zero-initialized score net is
/// exactly the uniform reference, so stage 0 is the reference itself.
ParamStore run_pdns(const DiscreteWorld& world, const TrainConfig& cfg,
                    RunReport& report, const StageCallback& on_stage = {});

}  // namespace pdns
