#include "pdns/sde_engine.hpp"

#include <cmath>
#include <stdexcept>

namespace pdns {
namespace {

constexpr std::uint64_t kRolloutStream = 0x726f6c6cULL;   // "roll"
constexpr std::uint64_t kAnnealedStream = 0x616e6e6cULL;  // "annl"

}  // namespace

RolloutResult rollout(const ParamStore& params, const ControlNetSpec& spec,
                      const OuSchedule& sched, std::size_t n,
                      std::uint64_t seed, int workers) {
  sched.validate();
  if (n < 1) throw std::invalid_argument("rollout: n must be >= 1");
  const std::size_t d = spec.dim;
  const std::size_t steps = sched.steps;
  const double dt = sched.dt();
  const double sqrt_dt = std::sqrt(dt);

  std::vector<TrajectoryRecord> records(n);
  std::vector<char> alive(n, 1);

  parallel_chunks(n, workers, [&](std::size_t lo, std::size_t hi) {
    const std::size_t count = hi - lo;
    if (count == 0) return;
    std::vector<Rng> rngs;
    rngs.reserve(count);
    for (std::size_t i = lo; i < hi; ++i)
      rngs.emplace_back(derive_seed(seed ^ kRolloutStream, i));

    Matrix x(count, d);
    Vec log_rn(count, 0.0), energy(count, 0.0);
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t k = 0; k < d; ++k)
        x.at(i, k) = sched.sigma_bar * rngs[i].normal();

    Vec dw(d);
    for (std::size_t j = 0; j < steps; ++j) {
      const double t = static_cast<double>(j) * dt;
      const double half_alpha = 0.5 * sched.alpha(t);
      const double sig = sched.sigma(t);
      const Matrix u = forward_control_batch(params, spec, t, x);
      for (std::size_t i = 0; i < count; ++i) {
        double* xi = x.row(i);
        const double* ui = u.row(i);
        double u_dw = 0.0, u_sq = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          dw[k] = sqrt_dt * rngs[i].normal();
          u_dw += ui[k] * dw[k];
          u_sq += ui[k] * ui[k];
          xi[k] += (-half_alpha * xi[k] + sig * ui[k]) * dt + sig * dw[k];
        }
        log_rn[i] -= u_dw + 0.5 * u_sq * dt;
        energy[i] += 0.5 * u_sq * dt;
        if (alive[lo + i] && !all_finite({xi, d})) alive[lo + i] = 0;
      }
    }
    for (std::size_t i = 0; i < count; ++i) {
      TrajectoryRecord& rec = records[lo + i];
      rec.x_T.assign(x.row(i), x.row(i) + d);
      rec.log_rn_ref_over_model = log_rn[i];
      rec.control_energy = energy[i];
      rec.seed_tag = derive_seed(seed ^ kRolloutStream, lo + i);
      if (alive[lo + i] && !std::isfinite(log_rn[i])) alive[lo + i] = 0;
    }
  });

  RolloutResult out;
  out.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (alive[i])
      out.records.push_back(std::move(records[i]));
    else
      ++out.dropped;
  }
  if (out.dropped * 100 > n)
    throw std::runtime_error("rollout: more than 1% of trajectories diverged (" +
                             std::to_string(out.dropped) + "/" +
                             std::to_string(n) + ")");
  return out;
}

double soc_cost(const std::vector<TrajectoryRecord>& records,
                const TerminalReward& tr) {
  if (records.empty()) throw std::invalid_argument("soc_cost: no records");
  double s = 0.0;
  for (const TrajectoryRecord& rec : records)
    s += rec.control_energy - tr(std::span<const double>(rec.x_T));
  return s / static_cast<double>(records.size());
}

std::vector<Vec> annealed_rollout(const TerminalReward& tr,
                                  const OuSchedule& sched, std::size_t n,
                                  std::uint64_t seed, int workers) {
  sched.validate();
  if (!tr.continuous)
    throw std::logic_error("annealed_rollout: continuous target required");
  const std::size_t d = tr.continuous->dim;
  const std::size_t steps = sched.steps;
  const double dt = sched.dt();
  const double sqrt_dt = std::sqrt(dt);

  std::vector<Vec> states(n);
  parallel_chunks(n, workers, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      Rng rng(derive_seed(seed ^ kAnnealedStream, i));
      Vec x(d);
      for (double& v : x) v = sched.sigma_bar * rng.normal();
      for (std::size_t j = 0; j < steps; ++j) {
        const double t = static_cast<double>(j) * dt;
        const double sig = sched.sigma(t);
        const Vec drift = annealed_drift(tr, sched, t, x);
        for (std::size_t k = 0; k < d; ++k)
          x[k] += drift[k] * dt + sig * sqrt_dt * rng.normal();
      }
      states[i] = std::move(x);
    }
  });
  // Replace diverged walkers with fresh stationary draws so the warm-start
  // buffer stays full; steep potentials can blow up a few paths early on.
  std::size_t replaced = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!all_finite(states[i])) {
      Rng rng(derive_seed(seed ^ kAnnealedStream ^ 0xdeadULL, i));
      for (double& v : states[i]) v = sched.sigma_bar * rng.normal();
      ++replaced;
    }
  }
  if (replaced * 100 > n)
    throw std::runtime_error("annealed_rollout: more than 1% of walkers diverged");
  return states;
}

}  // namespace pdns
