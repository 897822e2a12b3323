#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "pdns/approximator.hpp"
#include "pdns/common.hpp"

namespace pdns::test {

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central finite-difference gradient of loss(params) over every parameter
/// entry; the loss must be pure in the parameters.
inline std::vector<Array> fd_gradient(
    ParamStore ps, const std::function<double(const ParamStore&)>& loss,
    double h = 1e-5) {
  std::vector<Array> grads;
  for (std::size_t a = 0; a < ps.params.size(); ++a) {
    Array g = Array::zeros(ps.params[a].shape);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      const double saved = ps.params[a].data[i];
      ps.params[a].data[i] = saved + h;
      const double up = loss(ps);
      ps.params[a].data[i] = saved - h;
      const double down = loss(ps);
      ps.params[a].data[i] = saved;
      g.data[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

inline double max_rel_err(const std::vector<Array>& a,
                          const std::vector<Array>& b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].data.size(); ++j)
      worst = std::max(worst, rel_err(a[i].data[j], b[i].data[j], floor));
  return worst;
}

/// Upper regularized incomplete gamma Q(a, x) (series + continued fraction).
inline double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) return 1.0;
  if (x == 0.0) return 1.0;
  const double log_gamma = std::lgamma(a);
  if (x < a + 1.0) {
    // P(a, x) by series, return 1 - P.
    double term = 1.0 / a;
    double sum = term;
    double ap = a;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-15) break;
    }
    const double p = sum * std::exp(-x + a * std::log(x) - log_gamma);
    return 1.0 - p;
  }
  // Q(a, x) by Lentz continued fraction.
  double b = x + 1.0 - a;
  double c = 1e300;
  double dnm = 1.0 / b;
  double h = dnm;
  for (int i = 1; i < 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    dnm = an * dnm + b;
    if (std::abs(dnm) < 1e-300) dnm = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    dnm = 1.0 / dnm;
    const double del = dnm * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - log_gamma) * h;
}

/// Chi-square upper-tail p-value.
inline double chi2_pvalue(double stat, double dof) {
  return gamma_q(0.5 * dof, 0.5 * stat);
}

inline double mean_of(const Vec& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double stderr_of(const Vec& xs) {
  const double m = mean_of(xs);
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  v /= static_cast<double>(xs.size() - 1);
  return std::sqrt(v / static_cast<double>(xs.size()));
}

}  // namespace pdns::test
