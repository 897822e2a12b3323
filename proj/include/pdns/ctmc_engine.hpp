#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pdns/approximator.hpp"
#include "pdns/common.hpp"

namespace pdns {

/// Sequence over {1..N, MASK} at some time in [0, T]; fully masked at t = 0
/// and fully revealed at t = T.
struct MaskedState {
  std::vector<int> x;
  double t = 0.0;
};

struct DiscreteTrajectoryRecord {
  std::vector<int> x_T;
  double log_rn_ref_over_model = 0.0;  // sum over the d jumps
  std::uint64_t seed_tag = 0;
};

struct DiscreteRolloutResult {
  std::vector<DiscreteTrajectoryRecord> records;
  std::size_t floored_scores = 0;  // score entries clamped at 1e-12
};

/// Conditional unmask probability of the linear survival schedule
/// (masked probability 1 - t/T): dt / (T - t), clamped to 1 at the final
/// step so every coordinate is revealed by t = T.
double unmask_prob(double t, double dt, double horizon = 1.0);

/// Masked-diffusion simulation from the fully masked state. Per step each
/// still-masked coordinate independently unmasks; its value is drawn from
/// the score row evaluated at the pre-step state and the log-weight gains
/// log((1/N) / s(x_pre)_{i,n}). Exactly d contributions accumulate.
DiscreteRolloutResult rollout_discrete(const ParamStore& params,
                                       const ScoreNetSpec& spec,
                                       std::size_t steps, std::size_t n,
                                       std::uint64_t seed, int workers = 1);

/// Row-stochastic scores for a batch of masked states, one (d x N) row
/// block per state flattened to d*N columns.
using ScoreFn = std::function<Matrix(const std::vector<std::vector<int>>&)>;

/// Same simulation driven by an arbitrary score function (used to plug in
/// enumeration-exact conditionals as an oracle policy).
DiscreteRolloutResult rollout_discrete_fn(const ScoreFn& score, std::size_t seq_len,
                                          std::size_t alphabet, std::size_t steps,
                                          std::size_t n, std::uint64_t seed,
                                          int workers = 1);

/// Independently replaces each entry by MASK with probability lambda.
/// lambda = 0 is rejected (the 1/lambda loss factor would diverge).
std::vector<int> mask_corrupt(std::span<const int> x, double lambda,
                              int mask_symbol, Rng& rng);

}  // namespace pdns
