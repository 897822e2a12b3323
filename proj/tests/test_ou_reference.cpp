#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pdns/ou_reference.hpp"
#include "pdns/sde_engine.hpp"
#include "test_support.hpp"

using namespace pdns;

namespace {

OuSchedule default_schedule() {
  OuSchedule s;
  s.sigma_bar = 2.0;
  s.alpha_min = 0.1;
  s.alpha_max = 10.0;
  s.steps = 200;
  return s;
}

ContinuousTarget gauss_target(double mean, double sigma) {
  ContinuousTarget t;
  t.kind = ContinuousKind::Gmm;
  t.dim = 1;
  t.centers = {{mean}};
  t.mode_sigma = sigma;
  return t;
}

}  // namespace

TEST_CASE("schedule integrals in closed form") {
  OuSchedule s = default_schedule();
  const ScheduleCoeffs at1 = schedule_integral(s, 1.0);
  CHECK(at1.a == doctest::Approx(5.05).epsilon(1e-14));
  CHECK(at1.b == doctest::Approx(std::exp(-2.525)).epsilon(1e-14));
  CHECK(at1.c == doctest::Approx(1.0));

  const ScheduleCoeffs at0 = schedule_integral(s, 0.0);
  CHECK(at0.b == 1.0);
  CHECK(at0.c == s.b_coeff(1.0));  // C(0) = B(T)

  // Constant alpha: B(t) = exp(-a t / 2).
  OuSchedule flat = s;
  flat.alpha_min = flat.alpha_max = 8.0;
  for (double t : {0.1, 0.4, 0.9})
    CHECK(flat.b_coeff(t) == doctest::Approx(std::exp(-4.0 * t)).epsilon(1e-14));

  CHECK_THROWS_AS(schedule_integral(s, -0.1), std::domain_error);
  CHECK_THROWS_AS(schedule_integral(s, 1.2), std::domain_error);

  OuSchedule not_memoryless = s;
  not_memoryless.alpha_max = 0.2;  // B_T far above the gate
  CHECK_THROWS_WITH_AS(not_memoryless.validate(),
                       doctest::Contains("memoryless"), std::invalid_argument);
}

TEST_CASE("reference marginal is stationary") {
  const OuSchedule s = default_schedule();
  for (double t : {0.0, 0.3, 1.0}) {
    const GaussianMarginal m = ref_marginal(s, t);
    CHECK(m.mean == 0.0);
    CHECK(m.variance == doctest::Approx(4.0));
  }

  // Simulation oracle: terminal variance of uncontrolled rollouts.
  ControlNetSpec spec;
  spec.dim = 1;
  spec.hidden = {4};
  Rng rng(1);
  const ParamStore zero_net = init_params(spec.widths(), rng);
  const RolloutResult res = rollout(zero_net, spec, s, 100000, 7);
  Vec xs;
  for (const auto& rec : res.records) xs.push_back(rec.x_T[0]);
  const double mean = test::mean_of(xs);
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size() - 1);
  CHECK(std::abs(var - 4.0) / 4.0 < 0.03);
}

TEST_CASE("bridge endpoints are exact and moments match the closed form") {
  const OuSchedule s = default_schedule();
  const Vec x0 = {1.25, -0.75};
  const Vec xT = {-2.5, 0.5};
  Rng rng(3);

  const Vec at0 = bridge_sample(s, x0, xT, 0.0, rng);
  CHECK(at0 == x0);
  const Vec atT = bridge_sample(s, x0, xT, 1.0, rng);
  CHECK(atT == xT);

  const double t = 0.35;
  const double bt = s.b_coeff(t), ct = s.c_coeff(t), bT = s.b_coeff(1.0);
  const double denom = 1.0 - bT * bT;
  const double want_mean =
      bt * (1 - ct * ct) / denom * x0[0] + ct * (1 - bt * bt) / denom * xT[0];
  const double want_var =
      s.sigma_bar * s.sigma_bar * (1 - bt * bt) * (1 - ct * ct) / denom;

  const std::size_t n = 100000;
  Vec draws(n);
  for (std::size_t i = 0; i < n; ++i)
    draws[i] = bridge_sample(s, x0, xT, t, rng)[0];
  const double mean = test::mean_of(draws);
  double var = 0.0;
  for (double d : draws) var += (d - mean) * (d - mean);
  var /= static_cast<double>(n - 1);

  const double mean_se = std::sqrt(want_var / static_cast<double>(n));
  const double var_se = want_var * std::sqrt(2.0 / static_cast<double>(n - 1));
  CHECK(std::abs(mean - want_mean) < 4 * mean_se);
  CHECK(std::abs(var - want_var) < 4 * var_se);
}

TEST_CASE("conditional score identities") {
  const OuSchedule s = default_schedule();
  const double t = 0.6;
  const double ct = s.c_coeff(t);

  SUBCASE("zero residual gives the zero vector") {
    const Vec x_t = {0.7, -1.1};
    const Vec x_T = {ct * 0.7, ct * -1.1};
    for (double v : cond_score(s, x_t, x_T, t))
      CHECK(v == doctest::Approx(0.0));
  }

  SUBCASE("matches finite differences of the transition log density") {
    Rng rng(11);
    const double var = s.sigma_bar * s.sigma_bar * (1 - ct * ct);
    auto log_density = [&](const Vec& xt, const Vec& xT) {
      double acc = 0.0;
      for (std::size_t i = 0; i < xt.size(); ++i) {
        const double resid = xT[i] - ct * xt[i];
        acc += -0.5 * resid * resid / var;
      }
      return acc;
    };
    for (int trial = 0; trial < 10; ++trial) {
      Vec xt = {rng.normal(), rng.normal()};
      Vec xT = {rng.normal(), rng.normal()};
      const Vec score = cond_score(s, xt, xT, t);
      for (std::size_t i = 0; i < 2; ++i) {
        const double h = 1e-6;
        Vec up = xt, down = xt;
        up[i] += h;
        down[i] -= h;
        const double fd = (log_density(up, xT) - log_density(down, xT)) / (2 * h);
        CHECK(test::rel_err(score[i], fd) < 1e-6);
      }
    }
  }

  SUBCASE("scale homogeneity in sigma_bar") {
    OuSchedule doubled = s;
    doubled.sigma_bar = 2.0 * s.sigma_bar;
    const Vec xt = {0.3, 1.7};
    const Vec xT = {-0.4, 0.9};
    const Vec a = cond_score(s, xt, xT, t);
    const Vec b = cond_score(doubled, xt, xT, t);
    for (std::size_t i = 0; i < 2; ++i)
      CHECK(b[i] == doctest::Approx(a[i] / 4.0));
  }

  const Vec one = {0.0};
  CHECK_THROWS_AS(cond_score(s, one, one, 1.0), std::domain_error);
}

TEST_CASE("terminal reward") {
  const OuSchedule s = default_schedule();

  SUBCASE("continuous reward is -beta V - log nu") {
    ContinuousTarget t = gauss_target(1.0, 0.8);
    t.beta = 1.7;
    TerminalReward tr;
    tr.continuous = &t;
    tr.sigma_bar = s.sigma_bar;
    tr.include_constants = true;
    Rng rng(2);
    for (int i = 0; i < 20; ++i) {
      const Vec x = {rng.normal() * 2.0};
      const double log_nu_part =
          0.5 * x[0] * x[0] / 4.0 + 0.5 * std::log(2.0 * M_PI * 4.0);
      CHECK(tr(std::span<const double>(x)) + t.beta * potential(t, x) ==
            doctest::Approx(log_nu_part).epsilon(1e-12));
    }
    tr.include_constants = false;
    const Vec x = {0.5};
    CHECK(tr(std::span<const double>(x)) + t.beta * potential(t, x) ==
          doctest::Approx(0.5 * 0.25 / 4.0).epsilon(1e-12));
  }

  SUBCASE("discrete reward is -beta V") {
    DiscreteTarget ising;
    ising.kind = DiscreteKind::Ising;
    ising.lattice_side = 3;
    ising.beta = 0.5;
    TerminalReward tr;
    tr.discrete = &ising;
    const std::vector<int> aligned(9, 1);
    CHECK(tr(std::span<const int>(aligned)) == doctest::Approx(9.0));
    CHECK(tr.log_nu_offset() == doctest::Approx(9.0 * std::log(2.0)));
  }

  SUBCASE("exp(reward) integrates against nu to Z (quadrature oracle)") {
    // 64-point Gauss-Legendre on [-30, 30] via midpoint refinement is
    // plenty at these scales; use a fine trapezoid for transparency.
    ContinuousTarget t = gauss_target(0.5, 1.0);
    t.beta = 1.0;
    TerminalReward tr;
    tr.continuous = &t;
    tr.sigma_bar = s.sigma_bar;
    tr.include_constants = true;

    const int n = 40000;
    const double lo = -40.0, hi = 40.0, h = (hi - lo) / n;
    double z_direct = 0.0, e_nu = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = lo + (i + 0.5) * h;
      const Vec xv = {x};
      z_direct += std::exp(-t.beta * potential(t, xv)) * h;
      const double nu = std::exp(-0.5 * x * x / 4.0) / std::sqrt(2 * M_PI * 4.0);
      e_nu += nu * std::exp(tr(std::span<const double>(xv))) * h;
    }
    CHECK(z_direct == doctest::Approx(std::sqrt(2.0 * M_PI)).epsilon(1e-8));
    CHECK(e_nu == doctest::Approx(z_direct).epsilon(1e-8));
  }
}

TEST_CASE("annealed drift endpoints") {
  const OuSchedule s = default_schedule();
  ContinuousTarget t = gauss_target(2.0, 0.5);
  TerminalReward tr;
  tr.continuous = &t;
  tr.sigma_bar = s.sigma_bar;

  // t = 0: exactly the OU base drift, so nu is preserved at launch.
  const Vec x = {1.3};
  const Vec d0 = annealed_drift(tr, s, 0.0, x);
  CHECK(d0[0] == doctest::Approx(-0.5 * s.alpha(0.0) * x[0]));

  // t = T: only the target-score term survives.
  const Vec dT = annealed_drift(tr, s, 1.0, x);
  const Vec grad = potential_grad(t, x);
  CHECK(dT[0] ==
        doctest::Approx(-0.5 * s.alpha(1.0) * 4.0 * t.beta * grad[0]));
}

TEST_CASE("memoryless reference: initial/terminal correlation is tiny") {
  // Direct simulation of the uncontrolled Euler chain, independent of the
  // rollout engine.
  const OuSchedule s = default_schedule();
  const std::size_t n = 100000;
  Rng rng(123);
  const double dt = s.dt();
  Vec first(n), last(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = s.sigma_bar * rng.normal();
    first[i] = x;
    for (std::size_t j = 0; j < s.steps; ++j) {
      const double tj = static_cast<double>(j) * dt;
      x += -0.5 * s.alpha(tj) * x * dt +
           s.sigma(tj) * std::sqrt(dt) * rng.normal();
    }
    last[i] = x;
  }
  const double m0 = test::mean_of(first), mT = test::mean_of(last);
  double c = 0.0, v0 = 0.0, vT = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    c += (first[i] - m0) * (last[i] - mT);
    v0 += (first[i] - m0) * (first[i] - m0);
    vT += (last[i] - mT) * (last[i] - mT);
  }
  const double corr = c / std::sqrt(v0 * vT);
  CHECK(std::abs(corr) <= 0.1);  // theory: B_T ~ 0.08
}
