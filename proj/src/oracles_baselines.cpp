#include "pdns/oracles_baselines.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pdns {
namespace {

constexpr std::uint64_t kMhStream = 0x6d680000ULL;
constexpr std::uint64_t kSwStream = 0x73770000ULL;

// Union-find over lattice/graph sites.
struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), std::size_t{0});
  }
  std::size_t find(std::size_t a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[b] = a;
  }
};

void run_mh_chain(const DiscreteTarget& target, const ChainConfig& cfg,
                  std::uint64_t seed, std::size_t want,
                  std::vector<std::vector<int>>& out) {
  const std::size_t d = target.dim();
  const std::size_t n = target.alphabet();
  std::vector<std::vector<std::size_t>> neighbors(d);
  for (const auto& [a, b] : target.edges()) {
    neighbors[a].push_back(b);
    neighbors[b].push_back(a);
  }
  auto bond = [&](int va, int vb) {
    switch (target.kind) {
      case DiscreteKind::Ising:
        return -target.coupling * (2 * va - 1) * (2 * vb - 1);
      case DiscreteKind::Potts:
        return -target.coupling * (va == vb ? 1.0 : 0.0);
      case DiscreteKind::MaxCut:
        return -0.5 * (1.0 - (2 * va - 1) * (2 * vb - 1));
    }
    return 0.0;
  };
  Rng rng(seed);
  std::vector<int> x(d);
  for (int& v : x) v = static_cast<int>(rng.below(n));

  auto sweep = [&] {
    for (std::size_t u = 0; u < d; ++u) {
      const std::size_t site = static_cast<std::size_t>(rng.below(d));
      const int proposal = static_cast<int>(rng.below(n));
      const int old = x[site];
      if (proposal == old) continue;  // dV = 0, always accepted
      double dv = 0.0;
      for (std::size_t other : neighbors[site])
        dv += bond(proposal, x[other]) - bond(old, x[other]);
      if (dv <= 0.0 || rng.uniform() < std::exp(-target.beta * dv))
        x[site] = proposal;
    }
  };

  for (std::size_t s = 0; s < cfg.burn_in; ++s) sweep();
  for (std::size_t got = 0; got < want; ++got) {
    for (std::size_t s = 0; s < cfg.thinning; ++s) sweep();
    out.push_back(x);
  }
}

void run_sw_chain(const DiscreteTarget& target, const ChainConfig& cfg,
                  std::uint64_t seed, std::size_t want,
                  std::vector<std::vector<int>>& out) {
  const std::size_t d = target.dim();
  const std::size_t n = target.alphabet();
  const auto edges = target.edges();
  const double bond_exponent =
      target.kind == DiscreteKind::Potts ? 1.0 : 2.0;
  const double p_bond =
      1.0 - std::exp(-bond_exponent * target.beta * target.coupling);
  Rng rng(seed);
  std::vector<int> x(d);
  for (int& v : x) v = static_cast<int>(rng.below(n));

  auto sweep = [&] {
    UnionFind uf(d);
    for (const auto& [a, b] : edges)
      if (x[a] == x[b] && rng.uniform() < p_bond) uf.unite(a, b);
    std::vector<int> label(d, -1);
    for (std::size_t i = 0; i < d; ++i) {
      const std::size_t root = uf.find(i);
      if (label[root] < 0) label[root] = static_cast<int>(rng.below(n));
      x[i] = label[root];
    }
  };

  for (std::size_t s = 0; s < cfg.burn_in; ++s) sweep();
  for (std::size_t got = 0; got < want; ++got) {
    for (std::size_t s = 0; s < cfg.thinning; ++s) sweep();
    out.push_back(x);
  }
}

}  // namespace

void ChainConfig::validate() const {
  if (thinning == 0 || samples == 0 || chains == 0)
    throw std::invalid_argument("chain config: counts must be positive");
}

std::vector<std::vector<int>> mh_chain(const DiscreteTarget& target,
                                       const ChainConfig& cfg) {
  target.validate();
  cfg.validate();
  std::vector<std::vector<int>> out;
  out.reserve(cfg.samples);
  const std::size_t per_chain = (cfg.samples + cfg.chains - 1) / cfg.chains;
  for (std::size_t c = 0; c < cfg.chains && out.size() < cfg.samples; ++c) {
    const std::size_t want = std::min(per_chain, cfg.samples - out.size());
    run_mh_chain(target, cfg, derive_seed(cfg.seed ^ kMhStream, c), want, out);
  }
  return out;
}

std::vector<std::vector<int>> sw_chain(const DiscreteTarget& target,
                                       const ChainConfig& cfg) {
  target.validate();
  cfg.validate();
  if (target.coupling <= 0.0)
    throw std::invalid_argument("sw_chain: requires ferromagnetic coupling J > 0");
  std::vector<std::vector<int>> out;
  out.reserve(cfg.samples);
  const std::size_t per_chain = (cfg.samples + cfg.chains - 1) / cfg.chains;
  for (std::size_t c = 0; c < cfg.chains && out.size() < cfg.samples; ++c) {
    const std::size_t want = std::min(per_chain, cfg.samples - out.size());
    run_sw_chain(target, cfg, derive_seed(cfg.seed ^ kSwStream, c), want, out);
  }
  return out;
}

Enumeration exact_interpolant(const DiscreteTarget& target, double lambda) {
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("exact_interpolant: lambda outside [0, 1]");
  DiscreteTarget tempered = target;
  tempered.beta = target.beta * (1.0 - lambda);
  return enumerate_exact(tempered);
}

long cut_value(const DiscreteTarget& graph, std::span<const int> x) {
  long cut = 0;
  for (const auto& [a, b] : graph.graph_edges)
    if (x[a] != x[b]) ++cut;
  return cut;
}

MaxCutResult maxcut_brute(const DiscreteTarget& graph) {
  if (graph.kind != DiscreteKind::MaxCut)
    throw std::invalid_argument("maxcut_brute: target is not a max-cut instance");
  const std::size_t n = graph.dim();
  if (n > 20)
    throw std::invalid_argument("maxcut_brute: graph has " + std::to_string(n) +
                                " vertices, refusing above 20");
  MaxCutResult best;
  best.best_value = -1;
  std::vector<int> x(n, 0);
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t code = 0; code < total; ++code) {
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<int>((code >> i) & 1);
    const long value = cut_value(graph, x);
    if (value > best.best_value) {
      best.best_value = value;
      best.assignment = x;
    }
  }
  if (best.best_value < 0) best.best_value = 0;
  return best;
}

std::vector<Vec> gmm_exact_sample(const ContinuousTarget& target,
                                  std::size_t n, Rng& rng) {
  if (target.kind != ContinuousKind::Gmm)
    throw std::invalid_argument("gmm_exact_sample: target is not a GMM");
  target.validate();
  std::vector<Vec> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t mode = static_cast<std::size_t>(rng.below(target.centers.size()));
    Vec x(target.dim);
    for (std::size_t k = 0; k < target.dim; ++k)
      x[k] = target.centers[mode][k] + target.mode_sigma * rng.normal();
    out[i] = std::move(x);
  }
  return out;
}

}  // namespace pdns
