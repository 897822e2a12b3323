#include "pdns/energy_targets.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pdns {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double lgamma_half(double x) { return std::lgamma(x); }

// log N(x; mu, s^2 I) up to the full constant.
double log_gauss(std::span<const double> x, std::span<const double> mu,
                 double s) {
  double q = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - mu[i];
    q += d * d;
  }
  const double d = static_cast<double>(x.size());
  return -0.5 * q / (s * s) - 0.5 * d * (kLog2Pi + 2.0 * std::log(s));
}

double many_well(const ContinuousTarget& t, std::span<const double> x) {
  double v = 0.0;
  for (double xi : x) {
    const double u = xi * xi - t.delta;
    v += u * u;
  }
  return v;
}

Vec many_well_grad(const ContinuousTarget& t, std::span<const double> x) {
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    g[i] = 4.0 * x[i] * (x[i] * x[i] - t.delta);
  return g;
}

// -log of N(x1; 0, sigma^2) * N(x_{2..d}; 0, e^{x1} I), normalization
// constants dropped.
double funnel(const ContinuousTarget& t, std::span<const double> x) {
  const double s2 = t.funnel_sigma * t.funnel_sigma;
  const double x1 = x[0];
  double rest = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) rest += x[i] * x[i];
  const double dm1 = static_cast<double>(x.size() - 1);
  return 0.5 * x1 * x1 / s2 + 0.5 * dm1 * x1 + 0.5 * std::exp(-x1) * rest;
}

Vec funnel_grad(const ContinuousTarget& t, std::span<const double> x) {
  const double s2 = t.funnel_sigma * t.funnel_sigma;
  const double x1 = x[0];
  const double e = std::exp(-x1);
  double rest = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) rest += x[i] * x[i];
  Vec g(x.size());
  g[0] = x1 / s2 + 0.5 * static_cast<double>(x.size() - 1) - 0.5 * e * rest;
  for (std::size_t i = 1; i < x.size(); ++i) g[i] = e * x[i];
  return g;
}

// Equally weighted Gaussian mixture with the shared normalizer dropped:
// V = -log((1/m) sum_i exp(-|x - mu_i|^2 / (2 s^2))). A single mode is the
// bare quadratic (x - mu)^2 / (2 s^2).
double gmm(const ContinuousTarget& t, std::span<const double> x) {
  Vec logs(t.centers.size());
  for (std::size_t i = 0; i < t.centers.size(); ++i) {
    double q = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double d = x[k] - t.centers[i][k];
      q += d * d;
    }
    logs[i] = -0.5 * q / (t.mode_sigma * t.mode_sigma);
  }
  return -(logsumexp(logs) - std::log(static_cast<double>(t.centers.size())));
}

Vec gmm_grad(const ContinuousTarget& t, std::span<const double> x) {
  const std::size_t m = t.centers.size();
  Vec logs(m);
  for (std::size_t i = 0; i < m; ++i)
    logs[i] = log_gauss(x, t.centers[i], t.mode_sigma);
  const double lse = logsumexp(logs);
  const double inv_s2 = 1.0 / (t.mode_sigma * t.mode_sigma);
  Vec g(x.size(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double w = std::exp(logs[i] - lse);
    for (std::size_t k = 0; k < x.size(); ++k)
      g[k] += w * (x[k] - t.centers[i][k]) * inv_s2;
  }
  return g;
}

double log_student(std::span<const double> x, std::span<const double> mu,
                   double nu) {
  double q = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - mu[i];
    q += d * d;
  }
  const double d = static_cast<double>(x.size());
  const double c = lgamma_half(0.5 * (nu + d)) - lgamma_half(0.5 * nu) -
                   0.5 * d * std::log(nu * M_PI);
  return c - 0.5 * (nu + d) * std::log1p(q / nu);
}

double mos(const ContinuousTarget& t, std::span<const double> x) {
  Vec logs(t.centers.size());
  for (std::size_t i = 0; i < t.centers.size(); ++i)
    logs[i] = log_student(x, t.centers[i], t.student_dof);
  return -(logsumexp(logs) - std::log(static_cast<double>(t.centers.size())));
}

Vec mos_grad(const ContinuousTarget& t, std::span<const double> x) {
  const std::size_t m = t.centers.size();
  const double nu = t.student_dof;
  const double d = static_cast<double>(x.size());
  Vec logs(m);
  for (std::size_t i = 0; i < m; ++i)
    logs[i] = log_student(x, t.centers[i], nu);
  const double lse = logsumexp(logs);
  Vec g(x.size(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double w = std::exp(logs[i] - lse);
    double q = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double dk = x[k] - t.centers[i][k];
      q += dk * dk;
    }
    const double coef = (nu + d) / (nu + q);
    for (std::size_t k = 0; k < x.size(); ++k)
      g[k] += w * coef * (x[k] - t.centers[i][k]);
  }
  return g;
}

double dw4(const ContinuousTarget& t, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = i + 1; j < 4; ++j) {
      const double dx = x[2 * i] - x[2 * j];
      const double dy = x[2 * i + 1] - x[2 * j + 1];
      const double u = std::sqrt(dx * dx + dy * dy) - t.dw_d0;
      s += t.dw_a * u + t.dw_b * u * u + t.dw_c * u * u * u * u;
    }
  }
  return s / (2.0 * t.dw_tau);
}

Vec dw4_grad(const ContinuousTarget& t, std::span<const double> x) {
  Vec g(x.size(), 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = i + 1; j < 4; ++j) {
      const double dx = x[2 * i] - x[2 * j];
      const double dy = x[2 * i + 1] - x[2 * j + 1];
      const double dist = std::sqrt(dx * dx + dy * dy);
      if (dist < 1e-12) continue;
      const double u = dist - t.dw_d0;
      const double dv = (t.dw_a + 2.0 * t.dw_b * u + 4.0 * t.dw_c * u * u * u) /
                        (2.0 * t.dw_tau);
      const double cx = dv * dx / dist, cy = dv * dy / dist;
      g[2 * i] += cx;
      g[2 * i + 1] += cy;
      g[2 * j] -= cx;
      g[2 * j + 1] -= cy;
    }
  }
  return g;
}

// Pairwise 12-6 terms plus a harmonic center-of-mass tether; diverges to
// +infinity at coincident particles.
double lj(const ContinuousTarget& t, std::span<const double> x) {
  const std::size_t n = t.lj_n;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        const double d = x[3 * i + k] - x[3 * j + k];
        d2 += d * d;
      }
      if (d2 == 0.0) return std::numeric_limits<double>::infinity();
      const double r6 = std::pow(t.lj_rm * t.lj_rm / d2, 3.0);
      s += r6 * r6 - r6;
    }
  }
  s *= t.lj_eps / (2.0 * t.lj_tau);
  Vec com(3, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < 3; ++k) com[k] += x[3 * i + k];
  for (double& c : com) c /= static_cast<double>(n);
  double tether = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < 3; ++k) {
      const double d = x[3 * i + k] - com[k];
      tether += d * d;
    }
  return s + 0.5 * t.lj_c * tether;
}

Vec lj_grad(const ContinuousTarget& t, std::span<const double> x) {
  const std::size_t n = t.lj_n;
  Vec g(x.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double d2 = 0.0;
      double dv[3];
      for (std::size_t k = 0; k < 3; ++k) {
        dv[k] = x[3 * i + k] - x[3 * j + k];
        d2 += dv[k] * dv[k];
      }
      if (d2 < 1e-24) d2 = 1e-24;
      const double rm2 = t.lj_rm * t.lj_rm;
      const double r6 = std::pow(rm2 / d2, 3.0);
      // d/d(d2) of (r6^2 - r6) = (-6 r12 + 3 r6) / d2
      const double coef =
          t.lj_eps / (2.0 * t.lj_tau) * (-6.0 * r6 * r6 + 3.0 * r6) / d2;
      for (std::size_t k = 0; k < 3; ++k) {
        g[3 * i + k] += 2.0 * coef * dv[k];
        g[3 * j + k] -= 2.0 * coef * dv[k];
      }
    }
  }
  // Tether gradient: c * (x_i - C); the center-of-mass terms cancel in sum.
  Vec com(3, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < 3; ++k) com[k] += x[3 * i + k];
  for (double& c : com) c /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < 3; ++k)
      g[3 * i + k] += t.lj_c * (x[3 * i + k] - com[k]);
  return g;
}

int spin(int v) { return 2 * v - 1; }

}  // namespace

void ContinuousTarget::validate() const {
  if (dim == 0) throw std::invalid_argument("target: dim must be positive");
  switch (kind) {
    case ContinuousKind::ManyWell:
      if (delta <= 0) throw std::invalid_argument("many-well: delta must be > 0");
      break;
    case ContinuousKind::Funnel:
      if (funnel_sigma <= 0) throw std::invalid_argument("funnel: sigma must be > 0");
      if (dim < 2) throw std::invalid_argument("funnel: dim must be >= 2");
      break;
    case ContinuousKind::Gmm:
    case ContinuousKind::MixtureOfStudents:
      if (centers.empty()) throw std::invalid_argument("mixture: no centers");
      for (const Vec& c : centers)
        if (c.size() != dim)
          throw std::invalid_argument("mixture: center dimension mismatch");
      if (mode_sigma <= 0) throw std::invalid_argument("gmm: mode_sigma must be > 0");
      break;
    case ContinuousKind::DoubleWell4:
      if (dim != 8) throw std::invalid_argument("dw4: dim must be 8");
      break;
    case ContinuousKind::LennardJones:
      if (dim != 3 * lj_n) throw std::invalid_argument("lj: dim must be 3n");
      break;
  }
  if (beta <= 0) throw std::invalid_argument("target: beta must be > 0");
  if (grad_clip <= 0) throw std::invalid_argument("target: grad_clip must be > 0");
}

std::vector<std::pair<std::size_t, std::size_t>> lattice_edges(std::size_t side) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  edges.reserve(2 * side * side);
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) {
      const std::size_t here = r * side + c;
      edges.emplace_back(here, r * side + (c + 1) % side);
      edges.emplace_back(here, ((r + 1) % side) * side + c);
    }
  }
  return edges;
}

std::size_t DiscreteTarget::dim() const {
  if (kind == DiscreteKind::MaxCut) {
    std::size_t n = graph_vertices;
    for (const auto& [a, b] : graph_edges) n = std::max({n, a + 1, b + 1});
    return n;
  }
  return lattice_side * lattice_side;
}

std::size_t DiscreteTarget::alphabet() const {
  return kind == DiscreteKind::Potts ? q : 2;
}

std::vector<std::pair<std::size_t, std::size_t>> DiscreteTarget::edges() const {
  if (kind == DiscreteKind::MaxCut) return graph_edges;
  return lattice_edges(lattice_side);
}

void DiscreteTarget::validate() const {
  if (beta < 0) throw std::invalid_argument("target: beta must be >= 0");
  if (kind == DiscreteKind::MaxCut) {
    if (graph_edges.empty() && graph_vertices == 0)
      throw std::invalid_argument("maxcut: no edges and no vertex count");
    for (const auto& [a, b] : graph_edges)
      if (a == b) throw std::invalid_argument("maxcut: self-loop in graph");
    for (std::size_t i = 0; i < graph_edges.size(); ++i)
      for (std::size_t j = i + 1; j < graph_edges.size(); ++j) {
        const auto& e = graph_edges[i];
        const auto& f = graph_edges[j];
        if ((e.first == f.first && e.second == f.second) ||
            (e.first == f.second && e.second == f.first))
          throw std::invalid_argument("maxcut: duplicate edge in graph");
      }
  } else {
    if (lattice_side < 2)
      throw std::invalid_argument("lattice: side must be >= 2");
    if (kind == DiscreteKind::Potts && q < 2)
      throw std::invalid_argument("potts: q must be >= 2");
  }
}

double potential(const ContinuousTarget& target, std::span<const double> x) {
  if (x.size() != target.dim)
    throw std::invalid_argument("potential: dimension mismatch");
  switch (target.kind) {
    case ContinuousKind::ManyWell: return many_well(target, x);
    case ContinuousKind::Funnel: return funnel(target, x);
    case ContinuousKind::Gmm: return gmm(target, x);
    case ContinuousKind::MixtureOfStudents: return mos(target, x);
    case ContinuousKind::DoubleWell4: return dw4(target, x);
    case ContinuousKind::LennardJones: return lj(target, x);
  }
  throw std::logic_error("potential: unknown kind");
}

double potential(const DiscreteTarget& target, std::span<const int> x) {
  if (x.size() != target.dim())
    throw std::invalid_argument("potential: dimension mismatch");
  const int n = static_cast<int>(target.alphabet());
  for (int v : x)
    if (v < 0 || v >= n) throw std::domain_error("potential: entry outside alphabet");
  double v = 0.0;
  switch (target.kind) {
    case DiscreteKind::Ising:
      for (const auto& [a, b] : target.edges())
        v -= target.coupling * spin(x[a]) * spin(x[b]);
      break;
    case DiscreteKind::Potts:
      for (const auto& [a, b] : target.edges())
        v -= target.coupling * (x[a] == x[b] ? 1.0 : 0.0);
      break;
    case DiscreteKind::MaxCut:
      // V = -cut size, with sigma_i = 2 x_i - 1.
      for (const auto& [a, b] : target.graph_edges)
        v -= 0.5 * (1.0 - spin(x[a]) * spin(x[b]));
      break;
  }
  return v;
}

Vec potential_grad(const ContinuousTarget& target, std::span<const double> x) {
  Vec g;
  switch (target.kind) {
    case ContinuousKind::ManyWell: g = many_well_grad(target, x); break;
    case ContinuousKind::Funnel: g = funnel_grad(target, x); break;
    case ContinuousKind::Gmm: g = gmm_grad(target, x); break;
    case ContinuousKind::MixtureOfStudents: g = mos_grad(target, x); break;
    case ContinuousKind::DoubleWell4: g = dw4_grad(target, x); break;
    case ContinuousKind::LennardJones: g = lj_grad(target, x); break;
  }
  if (!all_finite(g)) throw std::domain_error("potential_grad: non-finite gradient");
  const double norm = std::sqrt(squared_norm(g));
  if (norm > target.grad_clip) {
    const double scale = target.grad_clip / norm;
    for (double& v : g) v *= scale;
  }
  return g;
}

double log_target(const ContinuousTarget& target, std::span<const double> x) {
  return -target.beta * potential(target, x);
}

double log_target(const DiscreteTarget& target, std::span<const int> x) {
  return -target.beta * potential(target, x);
}

std::size_t state_index(std::span<const int> x, std::size_t alphabet) {
  std::size_t idx = 0;
  for (int v : x) idx = idx * alphabet + static_cast<std::size_t>(v);
  return idx;
}

Enumeration enumerate_exact(const DiscreteTarget& target) {
  const std::size_t d = target.dim();
  const std::size_t n = target.alphabet();
  double log_count = d * std::log2(static_cast<double>(n));
  if (log_count > 20.0)
    throw std::invalid_argument(
        "enumerate_exact: state space too large (2^" +
        std::to_string(log_count) + " states exceeds the 2^20 guard)");
  const std::size_t total = [&] {
    std::size_t t = 1;
    for (std::size_t i = 0; i < d; ++i) t *= n;
    return t;
  }();

  Enumeration out;
  out.states.reserve(total);
  Vec logw(total);
  std::vector<int> x(d, 0);
  for (std::size_t idx = 0; idx < total; ++idx) {
    logw[idx] = -target.beta * potential(target, x);
    out.states.push_back(x);
    // mixed-radix increment, last coordinate fastest
    for (std::size_t i = d; i-- > 0;) {
      if (++x[i] < static_cast<int>(n)) break;
      x[i] = 0;
    }
  }
  out.log_z = logsumexp(logw);
  out.probs.resize(total);
  for (std::size_t i = 0; i < total; ++i)
    out.probs[i] = std::exp(logw[i] - out.log_z);
  return out;
}

}  // namespace pdns
