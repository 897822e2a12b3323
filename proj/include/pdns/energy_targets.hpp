#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "pdns/common.hpp"

namespace pdns {

enum class ContinuousKind { ManyWell, Funnel, Gmm, MixtureOfStudents, DoubleWell4, LennardJones };

/// Continuous potential V with inverse temperature beta over R^d. The
/// unnormalized target is exp(-beta * V).
struct ContinuousTarget {
  ContinuousKind kind = ContinuousKind::Gmm;
  std::size_t dim = 1;
  double beta = 1.0;
  double grad_clip = 100.0;  // max Euclidean norm of the returned gradient

  // many-well
  double delta = 4.0;
  // funnel
  double funnel_sigma = 3.0;
  // gmm / mixture of Student's t
  std::vector<Vec> centers;
  double mode_sigma = 1.0;   // gmm component std deviation
  double student_dof = 2.0;  // mixture-of-students degrees of freedom
  // double-well pair potential (4 particles in 2-D, dim = 8)
  double dw_a = 0.0, dw_b = -4.0, dw_c = 0.9, dw_d0 = 1.0, dw_tau = 1.0;
  // Lennard-Jones (n particles in 3-D, dim = 3n)
  std::size_t lj_n = 13;
  double lj_rm = 1.0, lj_eps = 1.0, lj_c = 0.5, lj_tau = 1.0;

  void validate() const;
};

enum class DiscreteKind { Ising, Potts, MaxCut };

/// Discrete potential over {1..N}^d.  Ising/Potts live on a periodic L x L
/// lattice; MaxCut on an explicit simple undirected graph.
struct DiscreteTarget {
  DiscreteKind kind = DiscreteKind::Ising;
  std::size_t lattice_side = 3;  // L (Ising/Potts)
  std::vector<std::pair<std::size_t, std::size_t>> graph_edges;  // MaxCut
  std::size_t graph_vertices = 0;  // MaxCut; 0 = infer from the edge list
  double coupling = 1.0;  // J
  std::size_t q = 4;      // Potts state count
  double beta = 1.0;

  std::size_t dim() const;
  std::size_t alphabet() const;  // 2 (Ising/MaxCut) or q (Potts)
  /// Undirected bond list; the periodic lattice has exactly 2 L^2 entries.
  std::vector<std::pair<std::size_t, std::size_t>> edges() const;
  void validate() const;
};

/// Periodic right+down bond list of an L x L lattice (2 L^2 bonds).
std::vector<std::pair<std::size_t, std::size_t>> lattice_edges(std::size_t side);

double potential(const ContinuousTarget& target, std::span<const double> x);
double potential(const DiscreteTarget& target, std::span<const int> x);

/// Analytic gradient of V, rescaled so its Euclidean norm is at most
/// target.grad_clip.
Vec potential_grad(const ContinuousTarget& target, std::span<const double> x);

/// Unnormalized log density -beta * V(x).
double log_target(const ContinuousTarget& target, std::span<const double> x);
double log_target(const DiscreteTarget& target, std::span<const int> x);

struct Enumeration {
  std::vector<std::vector<int>> states;
  Vec probs;
  double log_z = 0.0;
};

/// Exhaustive normalization over the full state space (refused above 2^20
/// states). Probabilities use a stable log-sum-exp.
Enumeration enumerate_exact(const DiscreteTarget& target);

/// Mixed-radix index of a state within enumerate_exact ordering.
std::size_t state_index(std::span<const int> x, std::size_t alphabet);

}  // namespace pdns
