#pragma once

#include <cstdint>
#include <vector>

#include "pdns/approximator.hpp"
#include "pdns/common.hpp"
#include "pdns/ou_reference.hpp"

namespace pdns {

/// Terminal state of one rollout plus the online-accumulated
/// log dP^ref/dP^theta of its realized discrete path (the only per-path
/// state the training loop keeps).
struct TrajectoryRecord {
  Vec x_T;
  double log_rn_ref_over_model = 0.0;
  double control_energy = 0.0;  // integral of |u|^2 / 2, diagnostic
  std::uint64_t seed_tag = 0;
};

struct RolloutResult {
  std::vector<TrajectoryRecord> records;
  std::size_t dropped = 0;
};

/// Euler-Maruyama simulation of the controlled SDE. Each step uses the same
/// Brownian increment for the state update and the Girsanov log-weight:
///   x += (-(alpha_t/2) x + sigma_t u) dt + sigma_t dW
///   log_rn -= u . dW + 0.5 |u|^2 dt
/// Trajectories that leave the finite range are dropped and counted; more
/// than 1% drops in a batch raises an error.
RolloutResult rollout(const ParamStore& params, const ControlNetSpec& spec,
                      const OuSchedule& sched, std::size_t n,
                      std::uint64_t seed, int workers = 1);

/// Mean of control_energy - r(x_T): the relative-entropy control cost.
/// Diagnostic only; never used as a training objective.
double soc_cost(const std::vector<TrajectoryRecord>& records,
                const TerminalReward& tr);

/// Terminal states of the annealed warm-start dynamics (no weights).
std::vector<Vec> annealed_rollout(const TerminalReward& tr,
                                  const OuSchedule& sched, std::size_t n,
                                  std::uint64_t seed, int workers = 1);

}  // namespace pdns
