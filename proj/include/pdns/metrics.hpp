#pragma once

#include <span>
#include <vector>

#include "pdns/common.hpp"
#include "pdns/energy_targets.hpp"

namespace pdns {

/// Square root of the unbiased MMD^2 estimate under a mixture of RBF
/// kernels with bandwidths median-pairwise-distance x {0.5, 1, 2}.
/// Needs at least two points per set; floored at 0 before the root.
double mmd(const Matrix& x, const Matrix& y);

struct SinkhornResult {
  double cost = 0.0;
  double marginal_violation = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
};

/// Entropic OT cost between uniform point clouds under squared-Euclidean
/// cost. Log-domain updates with epsilon scaling; iterates until the L1
/// marginal violation drops below 1e-6 or the iteration cap is hit (the
/// result is then flagged with the achieved violation).
SinkhornResult sinkhorn(const Matrix& x, const Matrix& y, double epsilon = 1e-3,
                        std::size_t max_iterations = 10000);

/// Exact 1-D 2-Wasserstein distance via the sorted quantile coupling.
double w2_1d(std::span<const double> a, std::span<const double> b);

/// Average spin for two-letter states (values {0,1} mapped to {-1,+1}).
/// For Potts (q > 2) reports the majority-state fraction minus 1/q.
/// Optional weights must match the sample count.
double magnetization(const std::vector<std::vector<int>>& samples,
                     std::size_t alphabet, std::span<const double> weights = {});

/// Per-sample average spin of one two-letter state.
double sample_magnetization(std::span<const int> x);

/// Average 2-point correlation at lattice offset r, averaged over the row
/// and column directions with periodic wrap. Ising uses the spin product;
/// Potts the centered indicator (q 1[equal] - 1)/(q - 1).
double two_point_corr(const std::vector<std::vector<int>>& samples,
                      std::size_t side, std::size_t offset, std::size_t alphabet,
                      std::span<const double> weights = {});

struct LogZEstimate {
  double log_z = 0.0;
  double std_error = 0.0;
};

/// Importance-sampling log-normalizer estimate: log-mean-exp of the base
/// log weights plus the terminal-law offset (d log N for discrete targets,
/// 0 for the continuous reward with constants included). The standard error
/// comes from the delta method. Refuses fewer than 100 records.
LogZEstimate logz_estimate(std::span<const double> base_log_weights,
                           double log_nu_offset = 0.0);

struct ModeHistogram {
  Vec frequencies;
  double unassigned = 0.0;
  bool overlapping = false;  // some sample fell inside two balls
};

/// Fraction of samples within radius of each center (nearest center wins
/// when balls overlap).
ModeHistogram mode_histogram(const Matrix& samples,
                             const std::vector<Vec>& centers, double radius);

/// Total variation between the empirical law of samples and an enumerated
/// distribution over the same state space.
double tv_empirical(const std::vector<std::vector<int>>& samples,
                    const Enumeration& exact, std::size_t alphabet,
                    std::span<const double> weights = {});

}  // namespace pdns
