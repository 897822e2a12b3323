#include "pdns/ou_reference.hpp"

#include <cmath>
#include <stdexcept>

namespace pdns {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void check_time(const OuSchedule& sched, double t) {
  if (t < 0.0 || t > sched.horizon)
    throw std::domain_error("ou: t outside [0, T]");
}

}  // namespace

double OuSchedule::b_coeff(double t) const {
  return std::exp(-0.5 * integral_alpha(t));
}

double OuSchedule::c_coeff(double t) const {
  return std::exp(-0.5 * (integral_alpha(horizon) - integral_alpha(t)));
}

void OuSchedule::validate() const {
  if (sigma_bar <= 0.0) throw std::invalid_argument("ou: sigma_bar must be > 0");
  if (alpha_min <= 0.0 || alpha_min > alpha_max)
    throw std::invalid_argument("ou: need 0 < alpha_min <= alpha_max");
  if (horizon <= 0.0) throw std::invalid_argument("ou: horizon must be > 0");
  if (steps < 2) throw std::invalid_argument("ou: need at least 2 steps");
  const double b_t = b_coeff(horizon);
  if (b_t >= memoryless_gate)
    throw std::invalid_argument(
        "ou: schedule is not near-memoryless (B_T = " + std::to_string(b_t) +
        " >= gate " + std::to_string(memoryless_gate) + ")");
}

ScheduleCoeffs schedule_integral(const OuSchedule& sched, double t) {
  check_time(sched, t);
  return {sched.integral_alpha(t), sched.b_coeff(t), sched.c_coeff(t)};
}

GaussianMarginal ref_marginal(const OuSchedule& sched, double t) {
  check_time(sched, t);
  return {0.0, sched.sigma_bar * sched.sigma_bar};
}

Vec bridge_sample(const OuSchedule& sched, std::span<const double> x0,
                  std::span<const double> xT, double t, Rng& rng) {
  check_time(sched, t);
  if (x0.size() != xT.size())
    throw std::invalid_argument("bridge_sample: endpoint dimension mismatch");
  if (t == 0.0) return Vec(x0.begin(), x0.end());
  if (t == sched.horizon) return Vec(xT.begin(), xT.end());

  const double bt = sched.b_coeff(t);
  const double ct = sched.c_coeff(t);
  const double bT = sched.b_coeff(sched.horizon);
  const double denom = 1.0 - bT * bT;
  if (denom < 1e-12)
    throw std::runtime_error("bridge_sample: schedule too close to degenerate");
  const double coef0 = bt * (1.0 - ct * ct) / denom;
  const double coefT = ct * (1.0 - bt * bt) / denom;
  const double var = sched.sigma_bar * sched.sigma_bar * (1.0 - bt * bt) *
                     (1.0 - ct * ct) / denom;
  const double sd = std::sqrt(var);
  Vec out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = coef0 * x0[i] + coefT * xT[i] + sd * rng.normal();
  return out;
}

Vec cond_score(const OuSchedule& sched, std::span<const double> x_t,
               std::span<const double> x_T, double t) {
  if (t < 0.0 || t >= sched.horizon)
    throw std::domain_error("cond_score: requires 0 <= t < T");
  const double ct = sched.c_coeff(t);
  const double denom =
      sched.sigma_bar * sched.sigma_bar * (1.0 - ct * ct);
  Vec out(x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = -ct * (ct * x_t[i] - x_T[i]) / denom;
  return out;
}

double TerminalReward::operator()(std::span<const double> x) const {
  if (!continuous) throw std::logic_error("terminal_reward: no continuous target");
  const double s2 = sigma_bar * sigma_bar;
  double r = -continuous->beta * potential(*continuous, x) +
             0.5 * squared_norm(x) / s2;
  if (include_constants)
    r += 0.5 * static_cast<double>(x.size()) * (kLog2Pi + std::log(s2));
  return r;
}

double TerminalReward::operator()(std::span<const int> x) const {
  if (!discrete) throw std::logic_error("terminal_reward: no discrete target");
  return -discrete->beta * potential(*discrete, x);
}

double TerminalReward::log_nu_offset() const {
  if (!discrete) return 0.0;
  return static_cast<double>(discrete->dim()) *
         std::log(static_cast<double>(discrete->alphabet()));
}

// Langevin drift on the geometric path mu^{1-t/T} pi^{t/T} at the process's
// own noise scale sigma_t^2 = sigma_bar^2 alpha_t:
//   (sigma_t^2 / 2) grad log pi_t = -(alpha_t/2) [(1-t/T) x
//                                    + (t/T) sigma_bar^2 beta clip(grad V)].
// At t = 0 this is exactly the OU base drift, so the warm start launches
// from the stationary reference.
Vec annealed_drift(const TerminalReward& tr, const OuSchedule& sched, double t,
                   std::span<const double> x) {
  if (!tr.continuous)
    throw std::logic_error("annealed_drift: continuous target required");
  check_time(sched, t);
  const double frac = t / sched.horizon;
  const double s2 = sched.sigma_bar * sched.sigma_bar;
  const double half_alpha = 0.5 * sched.alpha(t);
  Vec grad;
  if (frac > 0.0) grad = potential_grad(*tr.continuous, x);
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = (1.0 - frac) * x[i];
    if (frac > 0.0) v += frac * s2 * tr.continuous->beta * grad[i];
    out[i] = -half_alpha * v;
  }
  return out;
}

}  // namespace pdns
