#include "pdns/ctmc_engine.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace pdns {
namespace {

constexpr std::uint64_t kDiscreteStream = 0x63746d63ULL;  // "ctmc"
constexpr double kScoreFloor = 1e-12;

}  // namespace

double unmask_prob(double t, double dt, double horizon) {
  if (t < 0.0 || dt <= 0.0 || t + dt > horizon + 1e-12)
    throw std::invalid_argument("unmask_prob: need 0 <= t < t+dt <= T");
  const double remaining = horizon - t;
  if (dt >= remaining) return 1.0;
  return dt / remaining;
}

DiscreteRolloutResult rollout_discrete(const ParamStore& params,
                                       const ScoreNetSpec& spec,
                                       std::size_t steps, std::size_t n,
                                       std::uint64_t seed, int workers) {
  return rollout_discrete_fn(
      [&params, &spec](const std::vector<std::vector<int>>& states) {
        return forward_score_batch(params, spec, states);
      },
      spec.seq_len, spec.alphabet, steps, n, seed, workers);
}

DiscreteRolloutResult rollout_discrete_fn(const ScoreFn& score, std::size_t seq_len,
                                          std::size_t alphabet, std::size_t steps,
                                          std::size_t n, std::uint64_t seed,
                                          int workers) {
  if (steps < 1) throw std::invalid_argument("rollout_discrete: steps must be >= 1");
  const std::size_t d = seq_len;
  const int mask = static_cast<int>(alphabet);
  const double dt = 1.0 / static_cast<double>(steps);

  DiscreteRolloutResult out;
  out.records.resize(n);
  std::atomic<std::size_t> floored{0};

  parallel_chunks(n, workers, [&](std::size_t lo, std::size_t hi) {
    const std::size_t count = hi - lo;
    if (count == 0) return;
    std::vector<Rng> rngs;
    rngs.reserve(count);
    for (std::size_t i = lo; i < hi; ++i)
      rngs.emplace_back(derive_seed(seed ^ kDiscreteStream, i));

    std::vector<std::vector<int>> states(count, std::vector<int>(d, mask));
    Vec log_rn(count, 0.0);
    std::vector<int> masked_left(count, static_cast<int>(d));
    std::size_t local_floored = 0;
    const double log_uniform = -std::log(static_cast<double>(alphabet));

    std::vector<std::size_t> active;
    std::vector<std::vector<int>> active_states;
    for (std::size_t j = 0; j < steps; ++j) {
      const double t = static_cast<double>(j) * dt;
      const double p = unmask_prob(t, dt);
      active.clear();
      active_states.clear();
      for (std::size_t i = 0; i < count; ++i)
        if (masked_left[i] > 0) active.push_back(i);
      if (active.empty()) break;
      for (std::size_t a : active) active_states.push_back(states[a]);
      // Score of the pre-step state for every coordinate revealed this step.
      const Matrix scores = score(active_states);
      for (std::size_t row = 0; row < active.size(); ++row) {
        const std::size_t i = active[row];
        Rng& rng = rngs[i];
        const double* srow = scores.row(row);
        for (std::size_t pos = 0; pos < d; ++pos) {
          if (states[i][pos] != mask) continue;
          if (p < 1.0 && rng.uniform() >= p) continue;
          const double* probs = srow + pos * alphabet;
          double u = rng.uniform();
          std::size_t value = alphabet - 1;
          for (std::size_t v = 0; v + 1 < alphabet; ++v) {
            u -= probs[v];
            if (u < 0.0) {
              value = v;
              break;
            }
          }
          double s = probs[value];
          if (s < kScoreFloor) {
            s = kScoreFloor;
            ++local_floored;
          }
          log_rn[i] += log_uniform - std::log(s);
          states[i][pos] = static_cast<int>(value);
          --masked_left[i];
        }
      }
    }
    for (std::size_t i = 0; i < count; ++i) {
      DiscreteTrajectoryRecord& rec = out.records[lo + i];
      rec.x_T = std::move(states[i]);
      rec.log_rn_ref_over_model = log_rn[i];
      rec.seed_tag = derive_seed(seed ^ kDiscreteStream, lo + i);
    }
    floored.fetch_add(local_floored, std::memory_order_relaxed);
  });

  out.floored_scores = floored.load();
  return out;
}

std::vector<int> mask_corrupt(std::span<const int> x, double lambda,
                              int mask_symbol, Rng& rng) {
  if (lambda <= 0.0 || lambda > 1.0)
    throw std::invalid_argument("mask_corrupt: lambda must be in (0, 1]");
  std::vector<int> out(x.begin(), x.end());
  for (int& v : out)
    if (rng.uniform() < lambda) v = mask_symbol;
  return out;
}

}  // namespace pdns
