#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pdns/common.hpp"

namespace pdns {

/// Shaped parameter array. Weights are (out x in) row-major, biases rank 1.
struct Array {
  std::vector<std::size_t> shape;
  Vec data;

  static Array zeros(std::vector<std::size_t> shape);
  std::size_t size() const { return data.size(); }
};

/// Parameters of one network together with Adam moments and the EMA shadow.
/// Layout: params[2l] = layer-l weight, params[2l+1] = layer-l bias.
struct ParamStore {
  std::vector<Array> params;
  std::vector<Array> adam_m;
  std::vector<Array> adam_v;
  std::vector<Array> ema;
  std::uint64_t step_count = 0;

  /// Detached copy whose live parameters are the EMA shadow (used as the
  /// rollout policy).
  ParamStore ema_snapshot() const;
};

/// Time-conditioned vector field u_theta(t, x) for the controlled SDE.
struct ControlNetSpec {
  std::size_t dim = 1;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t time_feature_count = 8;  // F; the embedding has 2F entries
  // Highest embedding frequency as a multiple of pi/T. The optimal control
  // develops a boundary layer of width ~1/K near t = T, so the ceiling must
  // be able to resolve it (64 is too coarse beyond a few hundred steps).
  double time_frequency_span = 256.0;
  double horizon = 1.0;

  std::vector<std::size_t> widths() const;
};

/// Per-position categorical score network for masked sequences. Inputs are
/// one-hot over {1..N, MASK}; outputs are d rows of N probabilities each.
struct ScoreNetSpec {
  std::size_t seq_len = 1;
  std::size_t alphabet = 2;  // N; the mask symbol is input-only
  std::vector<std::size_t> hidden = {128, 128};

  int mask_symbol() const { return static_cast<int>(alphabet); }
  std::vector<std::size_t> widths() const;
};

/// Initializes parameters for the given layer widths. Hidden layers get a
/// uniform Glorot init; the final layer is zero so the control net starts at
/// u == 0 and the score net at uniform rows.
ParamStore init_params(const std::vector<std::size_t>& widths, Rng& rng);

/// Sinusoidal embedding [sin(w_j t)..., cos(w_j t)...] with F geometrically
/// spaced frequencies in [pi/T, span*pi/T].
Vec time_features(double t, std::size_t count, double horizon,
                  double span = 256.0);

/// Cached forward activations for one batch, consumed by the backward pass.
struct MlpCache {
  Matrix input;
  std::vector<Matrix> pre;   // pre-activation per layer
  std::vector<Matrix> post;  // post-activation per layer (pre for the last)
  Matrix softmax_out;        // score net only: row-softmaxed probabilities
};

Vec forward_control(const ParamStore& ps, const ControlNetSpec& spec, double t,
                    std::span<const double> x);

/// Batched control forward; all rows share the time t. When cache is given
/// the activations needed by backward_control are retained.
Matrix forward_control_batch(const ParamStore& ps, const ControlNetSpec& spec,
                             double t, const Matrix& xs,
                             MlpCache* cache = nullptr);

/// Batched control forward with one time per row.
Matrix forward_control_batch_times(const ParamStore& ps,
                                   const ControlNetSpec& spec,
                                   std::span<const double> ts, const Matrix& xs,
                                   MlpCache* cache = nullptr);

/// Row-stochastic (d x N) scores for one masked sequence, entries in (0,1).
Matrix forward_score(const ParamStore& ps, const ScoreNetSpec& spec,
                     std::span<const int> x);

/// Batched score forward: returns B x (d*N) row-softmaxed probabilities.
Matrix forward_score_batch(const ParamStore& ps, const ScoreNetSpec& spec,
                           const std::vector<std::vector<int>>& xs,
                           MlpCache* cache = nullptr);

/// Reverse-mode gradients of the batch loss whose per-output adjoints are
/// given in dout (B x dim). Gradient arrays are shaped like ps.params.
std::vector<Array> backward_control(const ParamStore& ps,
                                    const ControlNetSpec& spec,
                                    const MlpCache& cache, const Matrix& dout);

/// Same for the score net; dprobs holds adjoints with respect to the
/// post-softmax probabilities (B x d*N).
std::vector<Array> backward_score(const ParamStore& ps,
                                  const ScoreNetSpec& spec,
                                  const MlpCache& cache, const Matrix& dprobs);

/// One Adam update with bias correction; increments step_count. Returns
/// false (and leaves parameters untouched) when a gradient is non-finite.
bool adam_step(ParamStore& ps, const std::vector<Array>& grads, double lr,
               double beta1, double beta2, double eps);

/// ema <- decay * ema + (1 - decay) * params, elementwise.
void ema_update(ParamStore& ps, double decay);

}  // namespace pdns
