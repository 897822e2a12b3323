#include "pdns/proximal_core.hpp"

#include <cmath>
#include <stdexcept>

namespace pdns {
namespace {

Vec tempered_normalized(std::span<const double> base, double gamma) {
  Vec scaled(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) scaled[i] = gamma * base[i];
  return normalize_and_ess(scaled).weights;
}

}  // namespace

void SchedulerState::advance(double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("scheduler: eta must be > 0");
  eta_history.push_back(eta);
  const double prev = lambda_history.back();
  const double next = std::isinf(eta) ? 0.0 : prev / (eta + 1.0);
  lambda_history.push_back(next);
  k += 1;
}

double SchedulerState::gamma() const {
  const double e = eta();
  if (std::isinf(e)) return 1.0;
  return e / (e + 1.0);
}

double base_log_weight(double log_rn_ref_over_model, double reward) {
  return reward + log_rn_ref_over_model;
}

double proximal_log_weight(double log_rn_ref_over_model, double reward,
                           const SchedulerState& state) {
  if (state.k == 0)
    throw std::logic_error("proximal_log_weight: no stage has been advanced");
  if (state.target_variant == SchedulerState::Target::Eta)
    return state.gamma() * (reward + log_rn_ref_over_model);
  return (1.0 - state.lambda()) * reward + log_rn_ref_over_model;
}

NormalizeResult normalize_and_ess(std::span<const double> log_weights) {
  const std::size_t m = log_weights.size();
  if (m == 0) throw std::invalid_argument("normalize_and_ess: empty input");
  double mx = -std::numeric_limits<double>::infinity();
  for (double lw : log_weights) {
    if (std::isnan(lw)) throw std::invalid_argument("normalize_and_ess: NaN weight");
    mx = std::max(mx, lw);
  }
  if (!std::isfinite(mx))
    throw std::invalid_argument("normalize_and_ess: all weights are -inf");
  NormalizeResult out;
  out.weights.resize(m);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    out.weights[i] = std::exp(log_weights[i] - mx);
    total += out.weights[i];
  }
  double sum_sq = 0.0;
  for (double& w : out.weights) {
    w /= total;
    sum_sq += w * w;
  }
  out.ess = 1.0 / (static_cast<double>(m) * sum_sq);
  out.log_sum = mx + std::log(total);
  return out;
}

double kl_estimate(std::span<const double> normalized_weights) {
  const std::size_t m = normalized_weights.size();
  if (m == 0) throw std::invalid_argument("kl_estimate: empty input");
  const double logm = std::log(static_cast<double>(m));
  double s = 0.0;
  for (double w : normalized_weights)
    s += logm + std::log(std::max(w, 1e-300));
  return -s / static_cast<double>(m);
}

double adaptive_eta(std::span<const double> base_log_weights, double epsilon) {
  if (epsilon <= 0.0) throw std::invalid_argument("adaptive_eta: epsilon must be > 0");
  if (base_log_weights.size() < 2)
    throw std::invalid_argument("adaptive_eta: need at least 2 weights");
  auto kl_at = [&](double gamma) {
    return kl_estimate(tempered_normalized(base_log_weights, gamma));
  };
  if (kl_at(1.0) <= epsilon) return std::numeric_limits<double>::infinity();
  double lo = 0.0, hi = 1.0;
  while (hi - lo > 1e-3) {
    const double mid = 0.5 * (lo + hi);
    if (kl_at(mid) <= epsilon)
      lo = mid;
    else
      hi = mid;
  }
  if (lo == 0.0)
    throw std::runtime_error("adaptive_eta: trust radius unreachable at gamma -> 0");
  return lo / (1.0 - lo);
}

std::pair<double, double> predefined_eta(SchedulerState& state,
                                         std::span<const double> lambda_schedule,
                                         std::size_t k) {
  if (k < 1 || k > lambda_schedule.size())
    throw std::invalid_argument("predefined_eta: stage index out of range");
  if (state.k != k - 1)
    throw std::logic_error("predefined_eta: stages must advance in order");
  double prev = 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double cur = lambda_schedule[i];
    if (cur < 0.0 || cur > 1.0)
      throw std::invalid_argument("predefined_eta: lambda outside [0, 1]");
    if (cur > prev)
      throw std::invalid_argument("predefined_eta: lambda schedule must be nonincreasing");
    prev = cur;
  }
  const double lam_prev = state.lambda();
  const double lam_target = lambda_schedule[k - 1];
  const double eta = lam_target == 0.0
                         ? std::numeric_limits<double>::infinity()
                         : lam_prev / lam_target - 1.0;
  state.advance(eta);
  return {eta, state.lambda()};
}

}  // namespace pdns
