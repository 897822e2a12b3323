#pragma once

#include <cstdint>
#include <vector>

#include "pdns/common.hpp"
#include "pdns/energy_targets.hpp"

namespace pdns {

struct ChainConfig {
  std::size_t burn_in = 10000;   // sweeps discarded before collection
  std::size_t thinning = 10;     // sweeps between collected samples
  std::size_t samples = 10000;   // total samples across chains
  std::size_t chains = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Single-site Metropolis-Hastings with uniformly proposed site and value
/// (the proposal may equal the current state); acceptance min(1, e^{-b dV}).
std::vector<std::vector<int>> mh_chain(const DiscreteTarget& target,
                                       const ChainConfig& cfg);

/// Swendsen-Wang cluster updates. Bonds between equal neighbors open with
/// probability 1 - e^{-2 b J} (Ising, V = -J sum s_i s_j) or 1 - e^{-b J}
/// (Potts, V = -J sum 1[x_i = x_j]); clusters relabel uniformly.
std::vector<std::vector<int>> sw_chain(const DiscreteTarget& target,
                                       const ChainConfig& cfg);

/// Exact geometric interpolant pi^{1-lambda} nu^lambda with nu uniform,
/// i.e. probabilities proportional to e^{-(1-lambda) beta V}.
Enumeration exact_interpolant(const DiscreteTarget& target, double lambda);

struct MaxCutResult {
  long best_value = 0;
  std::vector<int> assignment;
};

/// Exhaustive maximum cut; refuses graphs with more than 20 vertices.
MaxCutResult maxcut_brute(const DiscreteTarget& graph);

/// Cut size of one assignment.
long cut_value(const DiscreteTarget& graph, std::span<const int> x);

/// Exact draws from a Gaussian-mixture target (ground truth for the
/// continuous metrics).
std::vector<Vec> gmm_exact_sample(const ContinuousTarget& target,
                                  std::size_t n, Rng& rng);

}  // namespace pdns
