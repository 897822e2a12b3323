#pragma once

#include <limits>
#include <span>
#include <vector>

#include "pdns/common.hpp"

namespace pdns {

/// Stage bookkeeping for the proximal recursion lambda_k =
/// lambda_{k-1} / (eta_k + 1), with lambda_0 = 1. eta may be infinity
/// (gamma = 1, the unregularized stage).
struct SchedulerState {
  enum class Mode { Predefined, Adaptive };
  enum class Target { Eta, Lambda };

  Mode mode = Mode::Predefined;
  Target target_variant = Target::Eta;
  std::size_t k = 0;
  Vec lambda_history{1.0};  // lambda_0 = 1
  Vec eta_history;          // eta_1..eta_k

  /// Records eta_{k+1} and extends the lambda history by the recursion.
  void advance(double eta);

  double lambda() const { return lambda_history.back(); }
  double eta() const { return eta_history.back(); }
  /// Tempering exponent gamma_k = eta_k / (eta_k + 1); exactly 1 at eta = inf.
  double gamma() const;
};

/// r(X_T) + log dP^ref/dP^theta: the log of the unnormalized target weight.
double base_log_weight(double log_rn_ref_over_model, double reward);

/// Stage weight of the current proximal subproblem. Eta variant:
/// gamma_k * (r + log_rn). Lambda variant: (1 - lambda_k) * r + log_rn.
double proximal_log_weight(double log_rn_ref_over_model, double reward,
                           const SchedulerState& state);

struct NormalizeResult {
  Vec weights;       // on the simplex
  double ess = 0.0;  // (M sum w^2)^-1, in [1/M, 1]
  double log_sum = 0.0;  // log sum exp of the inputs
};

/// Log-sum-exp normalization plus the effective sample size.
NormalizeResult normalize_and_ess(std::span<const double> log_weights);

/// Empirical-measure KL estimate -(1/M) sum log(M w_j); weights floored at
/// 1e-300 before the log. Zero iff uniform.
double kl_estimate(std::span<const double> normalized_weights);

/// Largest gamma in (0,1] whose tempered weights keep the KL estimate within
/// the trust radius, found by bisection to |dgamma| <= 1e-3 (the estimate is
/// nondecreasing in gamma). Returns eta = gamma/(1-gamma); infinity at
/// gamma = 1.
double adaptive_eta(std::span<const double> base_log_weights, double epsilon);

/// Stage k of a predefined lambda schedule (lambda_0 = 1 implicit,
/// nonincreasing). Returns (eta_k, lambda_k) and advances the state so the
/// recursion holds exactly.
std::pair<double, double> predefined_eta(SchedulerState& state,
                                         std::span<const double> lambda_schedule,
                                         std::size_t k);

/// Replay entries for one outer stage: terminal state, raw log weight, and
/// the stage-normalized weight.
template <typename State>
struct ReplayBuffer {
  struct Entry {
    State state;
    double log_raw_weight = 0.0;
    double normalized_weight = 0.0;
  };
  std::vector<Entry> entries;
  std::size_t stage = 0;
  std::size_t refresh_count = 0;
};

/// Categorical resampling by normalized weight; the result carries uniform
/// weights. Systematic resampling is available for variance studies.
template <typename State>
ReplayBuffer<State> resample(const ReplayBuffer<State>& buffer, Rng& rng,
                             bool systematic = false);

// --- template implementation ---

template <typename State>
ReplayBuffer<State> resample(const ReplayBuffer<State>& buffer, Rng& rng,
                             bool systematic) {
  const std::size_t n = buffer.entries.size();
  if (n == 0) throw std::invalid_argument("resample: empty buffer");
  Vec cdf(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += buffer.entries[i].normalized_weight;
    cdf[i] = acc;
  }
  ReplayBuffer<State> out;
  out.stage = buffer.stage;
  out.refresh_count = buffer.refresh_count;
  out.entries.reserve(n);
  const double uniform_w = 1.0 / static_cast<double>(n);
  auto pick = [&](double u) {
    std::size_t lo = 0, hi = n - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (cdf[mid] < u)
        lo = mid + 1;
      else
        hi = mid;
    }
    return lo;
  };
  if (systematic) {
    const double start = rng.uniform() * uniform_w;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = pick(start + static_cast<double>(i) * uniform_w);
      out.entries.push_back({buffer.entries[j].state, 0.0, uniform_w});
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = pick(rng.uniform() * acc);
      out.entries.push_back({buffer.entries[j].state, 0.0, uniform_w});
    }
  }
  return out;
}

}  // namespace pdns
