#include "pdns/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pdns {
namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double diff = a[k] - b[k];
    s += diff * diff;
  }
  return s;
}

// Median of the pooled pairwise distances (subsampled above 512 points).
double median_heuristic(const Matrix& x, const Matrix& y) {
  const std::size_t d = x.cols;
  std::vector<const double*> rows;
  for (std::size_t i = 0; i < x.rows; ++i) rows.push_back(x.row(i));
  for (std::size_t i = 0; i < y.rows; ++i) rows.push_back(y.row(i));
  const std::size_t cap = 512;
  if (rows.size() > cap) {
    // Deterministic stride subsample.
    std::vector<const double*> kept;
    const std::size_t stride = rows.size() / cap + 1;
    for (std::size_t i = 0; i < rows.size(); i += stride) kept.push_back(rows[i]);
    rows = std::move(kept);
  }
  Vec dists;
  dists.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j)
      dists.push_back(std::sqrt(sq_dist(rows[i], rows[j], d)));
  if (dists.empty()) return 1.0;
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  const double med = dists[dists.size() / 2];
  return med > 0.0 ? med : 1.0;
}

double kernel_mix(double d2, const Vec& bandwidths) {
  double k = 0.0;
  for (double h : bandwidths) k += std::exp(-0.5 * d2 / (h * h));
  return k / static_cast<double>(bandwidths.size());
}

double weight_at(std::span<const double> weights, std::size_t i, std::size_t n) {
  if (weights.empty()) return 1.0 / static_cast<double>(n);
  return weights[i];
}

}  // namespace

double mmd(const Matrix& x, const Matrix& y) {
  if (x.cols != y.cols) throw std::invalid_argument("mmd: dimension mismatch");
  const std::size_t m = x.rows, n = y.rows, d = x.cols;
  if (m < 2 || n < 2)
    throw std::invalid_argument("mmd: need at least 2 points per set");
  const double med = median_heuristic(x, y);
  const Vec bandwidths = {0.5 * med, med, 2.0 * med};

  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j)
      kxx += kernel_mix(sq_dist(x.row(i), x.row(j), d), bandwidths);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      kyy += kernel_mix(sq_dist(y.row(i), y.row(j), d), bandwidths);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      kxy += kernel_mix(sq_dist(x.row(i), y.row(j), d), bandwidths);

  const double mm = static_cast<double>(m), nn = static_cast<double>(n);
  const double mmd2 = 2.0 * kxx / (mm * (mm - 1.0)) +
                      2.0 * kyy / (nn * (nn - 1.0)) - 2.0 * kxy / (mm * nn);
  return std::sqrt(std::max(0.0, mmd2));
}

SinkhornResult sinkhorn(const Matrix& x, const Matrix& y, double epsilon,
                        std::size_t max_iterations) {
  if (x.cols != y.cols) throw std::invalid_argument("sinkhorn: dimension mismatch");
  if (x.rows == 0 || y.rows == 0)
    throw std::invalid_argument("sinkhorn: empty point cloud");
  const std::size_t m = x.rows, n = y.rows;
  Matrix cost(m, n);
  double max_cost = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      cost.at(i, j) = sq_dist(x.row(i), y.row(j), x.cols);
      max_cost = std::max(max_cost, cost.at(i, j));
    }
  const double log_a = -std::log(static_cast<double>(m));
  const double log_b = -std::log(static_cast<double>(n));

  Vec f(m, 0.0), g(n, 0.0), buf(std::max(m, n));
  SinkhornResult out;

  // Epsilon scaling: anneal from a coarse regularizer down to the target;
  // at eps = 1e-3 on squared costs the direct iteration stalls.
  Vec eps_ladder;
  double e = std::max(epsilon, max_cost / 10.0);
  while (e > epsilon * 1.5) {
    eps_ladder.push_back(e);
    e /= 3.0;
  }
  eps_ladder.push_back(epsilon);

  std::size_t iters = 0;
  double violation = std::numeric_limits<double>::infinity();
  double last_checked = std::numeric_limits<double>::infinity();
  for (std::size_t lvl = 0; lvl < eps_ladder.size() && iters < max_iterations;
       ++lvl) {
    const double eps = eps_ladder[lvl];
    const bool last = (lvl + 1 == eps_ladder.size());
    const std::size_t lvl_cap =
        last ? max_iterations : std::min(iters + 50, max_iterations);
    last_checked = std::numeric_limits<double>::infinity();
    while (iters < lvl_cap) {
      ++iters;
      for (std::size_t i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
          buf[j] = (g[j] - cost.at(i, j)) / eps + log_b;
          mx = std::max(mx, buf[j]);
        }
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += std::exp(buf[j] - mx);
        f[i] = -eps * (mx + std::log(s));
      }
      for (std::size_t j = 0; j < n; ++j) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m; ++i) {
          buf[i] = (f[i] - cost.at(i, j)) / eps + log_a;
          mx = std::max(mx, buf[i]);
        }
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += std::exp(buf[i] - mx);
        g[j] = -eps * (mx + std::log(s));
      }
      // After a g-update the column marginals are exact; check the row
      // violation every few iterations (the check costs a full pass).
      if (iters % 4 == 0 || iters + 1 >= lvl_cap) {
        violation = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          double row = 0.0;
          for (std::size_t j = 0; j < n; ++j)
            row += std::exp((f[i] + g[j] - cost.at(i, j)) / eps + log_a + log_b);
          violation += std::abs(row - std::exp(log_a));
        }
        if (last && violation < 1e-6) break;
        if (!last && violation < 1e-4) break;
        // Stalled fixed point: the plan has stopped moving at this scale.
        if (violation > 0.995 * last_checked) break;
        last_checked = violation;
      }
    }
  }

  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      total += std::exp((f[i] + g[j] - cost.at(i, j)) / epsilon + log_a + log_b) *
               cost.at(i, j);
  out.cost = total;
  out.iterations = iters;
  out.marginal_violation = violation;
  out.converged = violation < 1e-6;
  return out;
}

double w2_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("w2_1d: empty input");
  Vec sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  double acc = 0.0;
  if (sa.size() == sb.size()) {
    for (std::size_t i = 0; i < sa.size(); ++i) {
      const double d = sa[i] - sb[i];
      acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(sa.size()));
  }
  // Quantile interpolation on a common grid.
  const std::size_t grid = 2 * std::max(sa.size(), sb.size());
  auto quantile = [](const Vec& s, double u) {
    const double pos = u * static_cast<double>(s.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return (1.0 - frac) * s[lo] + frac * s[hi];
  };
  for (std::size_t i = 0; i < grid; ++i) {
    const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(grid);
    const double d = quantile(sa, u) - quantile(sb, u);
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(grid));
}

double sample_magnetization(std::span<const int> x) {
  double s = 0.0;
  for (int v : x) s += 2 * v - 1;
  return s / static_cast<double>(x.size());
}

double magnetization(const std::vector<std::vector<int>>& samples,
                     std::size_t alphabet, std::span<const double> weights) {
  if (samples.empty()) throw std::invalid_argument("magnetization: no samples");
  if (!weights.empty() && weights.size() != samples.size())
    throw std::invalid_argument("magnetization: weight count mismatch");
  const std::size_t n = samples.size();
  double acc = 0.0;
  if (alphabet == 2) {
    for (std::size_t i = 0; i < n; ++i)
      acc += weight_at(weights, i, n) * sample_magnetization(samples[i]);
    return acc;
  }
  // Potts: majority-state fraction minus 1/q.
  Vec counts(alphabet);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(counts.begin(), counts.end(), 0.0);
    for (int v : samples[i]) counts[static_cast<std::size_t>(v)] += 1.0;
    const double majority =
        *std::max_element(counts.begin(), counts.end()) /
        static_cast<double>(samples[i].size());
    acc += weight_at(weights, i, n) *
           (majority - 1.0 / static_cast<double>(alphabet));
  }
  return acc;
}

double two_point_corr(const std::vector<std::vector<int>>& samples,
                      std::size_t side, std::size_t offset, std::size_t alphabet,
                      std::span<const double> weights) {
  if (samples.empty()) throw std::invalid_argument("two_point_corr: no samples");
  if (offset >= side) throw std::invalid_argument("two_point_corr: offset out of range");
  if (!weights.empty() && weights.size() != samples.size())
    throw std::invalid_argument("two_point_corr: weight count mismatch");
  const std::size_t n = samples.size();
  const double q = static_cast<double>(alphabet);
  double acc = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const std::vector<int>& x = samples[s];
    if (x.size() != side * side)
      throw std::invalid_argument("two_point_corr: state is not an LxL lattice");
    double corr = 0.0;
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t c = 0; c < side; ++c) {
        const int here = x[r * side + c];
        const int right = x[r * side + (c + offset) % side];
        const int down = x[((r + offset) % side) * side + c];
        if (alphabet == 2) {
          corr += 0.5 * ((2 * here - 1) * (2 * right - 1) +
                         (2 * here - 1) * (2 * down - 1));
        } else {
          corr += 0.5 * ((q * (here == right ? 1.0 : 0.0) - 1.0) / (q - 1.0) +
                         (q * (here == down ? 1.0 : 0.0) - 1.0) / (q - 1.0));
        }
      }
    }
    acc += weight_at(weights, s, n) * corr / static_cast<double>(side * side);
  }
  return acc;
}

LogZEstimate logz_estimate(std::span<const double> base_log_weights,
                           double log_nu_offset) {
  const std::size_t m = base_log_weights.size();
  if (m < 100)
    throw std::invalid_argument("logz_estimate: needs at least 100 records");
  double mx = -std::numeric_limits<double>::infinity();
  for (double lw : base_log_weights) mx = std::max(mx, lw);
  if (!std::isfinite(mx))
    throw std::invalid_argument("logz_estimate: weights are degenerate");
  double s1 = 0.0, s2 = 0.0;
  for (double lw : base_log_weights) {
    const double u = std::exp(lw - mx);
    s1 += u;
    s2 += u * u;
  }
  const double mean = s1 / static_cast<double>(m);
  const double var =
      std::max(0.0, s2 / static_cast<double>(m) - mean * mean);
  LogZEstimate out;
  out.log_z = mx + std::log(mean) + log_nu_offset;
  out.std_error = std::sqrt(var / static_cast<double>(m)) / mean;
  return out;
}

ModeHistogram mode_histogram(const Matrix& samples,
                             const std::vector<Vec>& centers, double radius) {
  if (samples.rows == 0) throw std::invalid_argument("mode_histogram: no samples");
  if (centers.empty() || radius <= 0.0)
    throw std::invalid_argument("mode_histogram: need centers and radius > 0");
  for (std::size_t i = 0; i < centers.size(); ++i)
    for (std::size_t j = i + 1; j < centers.size(); ++j)
      if (centers[i] == centers[j])
        throw std::invalid_argument("mode_histogram: duplicate centers");
  ModeHistogram out;
  out.frequencies.assign(centers.size(), 0.0);
  const double r2 = radius * radius;
  std::size_t unassigned = 0;
  for (std::size_t s = 0; s < samples.rows; ++s) {
    const double* x = samples.row(s);
    std::size_t best = centers.size();
    double best_d2 = std::numeric_limits<double>::infinity();
    std::size_t inside = 0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double d2 = sq_dist(x, centers[c].data(), samples.cols);
      if (d2 <= r2) ++inside;
      if (d2 < best_d2) {
        best_d2 = d2;
        best = c;
      }
    }
    if (inside > 1) out.overlapping = true;
    if (best_d2 <= r2)
      out.frequencies[best] += 1.0;
    else
      ++unassigned;
  }
  const double n = static_cast<double>(samples.rows);
  for (double& fq : out.frequencies) fq /= n;
  out.unassigned = static_cast<double>(unassigned) / n;
  return out;
}

double tv_empirical(const std::vector<std::vector<int>>& samples,
                    const Enumeration& exact, std::size_t alphabet,
                    std::span<const double> weights) {
  if (samples.empty()) throw std::invalid_argument("tv_empirical: no samples");
  if (!weights.empty() && weights.size() != samples.size())
    throw std::invalid_argument("tv_empirical: weight count mismatch");
  Vec empirical(exact.probs.size(), 0.0);
  const std::size_t n = samples.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t idx = state_index(samples[i], alphabet);
    if (idx >= empirical.size())
      throw std::invalid_argument("tv_empirical: sample outside the state space");
    empirical[idx] += weight_at(weights, i, n);
  }
  double tv = 0.0;
  for (std::size_t i = 0; i < exact.probs.size(); ++i)
    tv += std::abs(empirical[i] - exact.probs[i]);
  return 0.5 * tv;
}

}  // namespace pdns
