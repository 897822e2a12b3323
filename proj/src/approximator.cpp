#include "pdns/approximator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pdns {
namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  const double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  return phi + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

// out(B x n) = in(B x m) * W^T + b, with W (n x m) row-major.
void affine_forward(const Matrix& in, const Array& w, const Array& b,
                    Matrix& out) {
  const std::size_t n = w.shape[0], m = w.shape[1];
  out = Matrix(in.rows, n);
  for (std::size_t r = 0; r < in.rows; ++r) {
    const double* x = in.row(r);
    double* y = out.row(r);
    for (std::size_t j = 0; j < n; ++j) {
      const double* wj = w.data.data() + j * m;
      double s = b.data[j];
      for (std::size_t k = 0; k < m; ++k) s += wj[k] * x[k];
      y[j] = s;
    }
  }
}

// Core MLP forward over explicit widths; hidden layers use GELU, the last
// layer is affine. Returns the final pre-activation matrix.
Matrix mlp_forward(const ParamStore& ps, const std::vector<std::size_t>& widths,
                   const Matrix& input, MlpCache* cache) {
  const std::size_t layers = widths.size() - 1;
  if (ps.params.size() != 2 * layers)
    throw std::invalid_argument("mlp_forward: parameter count mismatch");
  if (cache) {
    cache->input = input;
    cache->pre.clear();
    cache->post.clear();
  }
  Matrix cur = input;
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix pre;
    affine_forward(cur, ps.params[2 * l], ps.params[2 * l + 1], pre);
    if (l + 1 < layers) {
      Matrix post(pre.rows, pre.cols);
      for (std::size_t i = 0; i < pre.data.size(); ++i)
        post.data[i] = gelu(pre.data[i]);
      if (cache) {
        cache->pre.push_back(pre);
        cache->post.push_back(post);
      }
      cur = std::move(post);
    } else {
      if (cache) {
        cache->pre.push_back(pre);
        cache->post.push_back(pre);
      }
      cur = std::move(pre);
    }
  }
  return cur;
}

// Reverse pass shared by both nets: dout is the adjoint of the final
// pre-activation output.
std::vector<Array> mlp_backward(const ParamStore& ps,
                                const std::vector<std::size_t>& widths,
                                const MlpCache& cache, const Matrix& dout) {
  const std::size_t layers = widths.size() - 1;
  if (dout.rows != cache.input.rows || dout.cols != widths.back())
    throw std::invalid_argument("mlp_backward: adjoint shape mismatch");
  std::vector<Array> grads(ps.params.size());
  for (std::size_t i = 0; i < ps.params.size(); ++i)
    grads[i] = Array::zeros(ps.params[i].shape);

  Matrix delta = dout;
  for (std::size_t l = layers; l-- > 0;) {
    const Array& w = ps.params[2 * l];
    const std::size_t n = w.shape[0], m = w.shape[1];
    const Matrix& layer_in = (l == 0) ? cache.input : cache.post[l - 1];
    if (l + 1 < layers) {
      const Matrix& pre = cache.pre[l];
      for (std::size_t i = 0; i < delta.data.size(); ++i)
        delta.data[i] *= gelu_grad(pre.data[i]);
    }
    Array& gw = grads[2 * l];
    Array& gb = grads[2 * l + 1];
    for (std::size_t r = 0; r < delta.rows; ++r) {
      const double* d = delta.row(r);
      const double* x = layer_in.row(r);
      for (std::size_t j = 0; j < n; ++j) {
        const double dj = d[j];
        if (dj == 0.0) continue;
        double* gwj = gw.data.data() + j * m;
        for (std::size_t k = 0; k < m; ++k) gwj[k] += dj * x[k];
        gb.data[j] += dj;
      }
    }
    if (l > 0) {
      Matrix prev(delta.rows, m);
      for (std::size_t r = 0; r < delta.rows; ++r) {
        const double* d = delta.row(r);
        double* p = prev.row(r);
        for (std::size_t j = 0; j < n; ++j) {
          const double dj = d[j];
          if (dj == 0.0) continue;
          const double* wj = w.data.data() + j * m;
          for (std::size_t k = 0; k < m; ++k) p[k] += dj * wj[k];
        }
      }
      delta = std::move(prev);
    }
  }
  return grads;
}

Matrix control_input(const ControlNetSpec& spec, std::span<const double> ts,
                     const Matrix& xs) {
  const std::size_t feat_len = 2 * spec.time_feature_count;
  Matrix in(xs.rows, feat_len + spec.dim);
  Vec feat;
  for (std::size_t r = 0; r < xs.rows; ++r) {
    if (r == 0 || ts.size() > 1)
      feat = time_features(ts.size() > 1 ? ts[r] : ts[0],
                           spec.time_feature_count, spec.horizon,
                           spec.time_frequency_span);
    double* row = in.row(r);
    std::copy(feat.begin(), feat.end(), row);
    std::copy(xs.row(r), xs.row(r) + spec.dim, row + feat_len);
  }
  return in;
}

Matrix score_input(const ScoreNetSpec& spec,
                   const std::vector<std::vector<int>>& xs) {
  const std::size_t d = spec.seq_len;
  const std::size_t letters = spec.alphabet + 1;  // values plus MASK
  Matrix in(xs.size(), d * letters);
  for (std::size_t r = 0; r < xs.size(); ++r) {
    if (xs[r].size() != d)
      throw std::invalid_argument("forward_score: sequence length mismatch");
    double* row = in.row(r);
    for (std::size_t i = 0; i < d; ++i) {
      const int v = xs[r][i];
      if (v < 0 || v > static_cast<int>(spec.alphabet))
        throw std::domain_error("forward_score: entry outside alphabet");
      row[i * letters + static_cast<std::size_t>(v)] = 1.0;
    }
  }
  return in;
}

// Row softmax with the entries clamped to [1e-12, 1 - 1e-12]. The clamp
// only acts on saturated rows, so row sums stay within the 1e-6 contract
// and unsaturated rows (the uniform net in particular) are untouched.
constexpr double kSoftmaxClamp = 1e-12;

void softmax_rows(Matrix& logits, std::size_t group) {
  for (std::size_t r = 0; r < logits.rows; ++r) {
    double* row = logits.row(r);
    for (std::size_t g = 0; g < logits.cols; g += group) {
      double m = row[g];
      for (std::size_t j = 1; j < group; ++j) m = std::max(m, row[g + j]);
      double s = 0.0;
      for (std::size_t j = 0; j < group; ++j) {
        row[g + j] = std::exp(row[g + j] - m);
        s += row[g + j];
      }
      for (std::size_t j = 0; j < group; ++j) {
        const double p = row[g + j] / s;
        row[g + j] = std::min(1.0 - kSoftmaxClamp, std::max(kSoftmaxClamp, p));
      }
    }
  }
}

}  // namespace

Array Array::zeros(std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  Array a;
  a.shape = std::move(shape);
  a.data.assign(n, 0.0);
  return a;
}

ParamStore ParamStore::ema_snapshot() const {
  ParamStore out = *this;
  out.params = ema;
  return out;
}

std::vector<std::size_t> ControlNetSpec::widths() const {
  std::vector<std::size_t> w;
  w.push_back(2 * time_feature_count + dim);
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(dim);
  return w;
}

std::vector<std::size_t> ScoreNetSpec::widths() const {
  std::vector<std::size_t> w;
  w.push_back(seq_len * (alphabet + 1));
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(seq_len * alphabet);
  return w;
}

ParamStore init_params(const std::vector<std::size_t>& widths, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("init_params: need >= 2 widths");
  ParamStore ps;
  const std::size_t layers = widths.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = widths[l], out = widths[l + 1];
    Array w = Array::zeros({out, in});
    Array b = Array::zeros({out});
    if (l + 1 < layers) {
      const double a = std::sqrt(6.0 / static_cast<double>(in + out));
      for (double& v : w.data) v = rng.uniform(-a, a);
    }
    ps.params.push_back(std::move(w));
    ps.params.push_back(std::move(b));
  }
  for (const Array& p : ps.params) {
    ps.adam_m.push_back(Array::zeros(p.shape));
    ps.adam_v.push_back(Array::zeros(p.shape));
  }
  ps.ema = ps.params;
  ps.step_count = 0;
  return ps;
}

Vec time_features(double t, std::size_t count, double horizon, double span) {
  if (count < 1) throw std::invalid_argument("time_features: count must be >= 1");
  if (span < 1.0) throw std::invalid_argument("time_features: span must be >= 1");
  if (t < 0.0 || t > horizon)
    throw std::domain_error("time_features: t outside [0, T]");
  Vec out(2 * count);
  const double base = M_PI / horizon;
  for (std::size_t j = 0; j < count; ++j) {
    const double expo =
        (count == 1) ? 0.0
                     : static_cast<double>(j) / static_cast<double>(count - 1);
    const double omega = base * std::pow(span, expo);
    out[j] = std::sin(omega * t);
    out[count + j] = std::cos(omega * t);
  }
  return out;
}

Vec forward_control(const ParamStore& ps, const ControlNetSpec& spec, double t,
                    std::span<const double> x) {
  if (x.size() != spec.dim)
    throw std::invalid_argument("forward_control: dimension mismatch");
  if (!all_finite(x))
    throw std::domain_error("forward_control: non-finite input state");
  Matrix xs(1, spec.dim);
  std::copy(x.begin(), x.end(), xs.row(0));
  Matrix out = forward_control_batch(ps, spec, t, xs);
  return Vec(out.row(0), out.row(0) + spec.dim);
}

Matrix forward_control_batch(const ParamStore& ps, const ControlNetSpec& spec,
                             double t, const Matrix& xs, MlpCache* cache) {
  const double ts[1] = {t};
  return forward_control_batch_times(ps, spec, ts, xs, cache);
}

Matrix forward_control_batch_times(const ParamStore& ps,
                                   const ControlNetSpec& spec,
                                   std::span<const double> ts, const Matrix& xs,
                                   MlpCache* cache) {
  if (xs.cols != spec.dim)
    throw std::invalid_argument("forward_control_batch: dimension mismatch");
  if (ts.size() != 1 && ts.size() != xs.rows)
    throw std::invalid_argument("forward_control_batch: time count mismatch");
  const Matrix in = control_input(spec, ts, xs);
  return mlp_forward(ps, spec.widths(), in, cache);
}

Matrix forward_score(const ParamStore& ps, const ScoreNetSpec& spec,
                     std::span<const int> x) {
  std::vector<std::vector<int>> batch{std::vector<int>(x.begin(), x.end())};
  const Matrix flat = forward_score_batch(ps, spec, batch);
  Matrix out(spec.seq_len, spec.alphabet);
  std::copy(flat.row(0), flat.row(0) + flat.cols, out.data.begin());
  return out;
}

Matrix forward_score_batch(const ParamStore& ps, const ScoreNetSpec& spec,
                           const std::vector<std::vector<int>>& xs,
                           MlpCache* cache) {
  const Matrix in = score_input(spec, xs);
  Matrix logits = mlp_forward(ps, spec.widths(), in, cache);
  softmax_rows(logits, spec.alphabet);
  if (cache) cache->softmax_out = logits;
  return logits;
}

std::vector<Array> backward_control(const ParamStore& ps,
                                    const ControlNetSpec& spec,
                                    const MlpCache& cache, const Matrix& dout) {
  return mlp_backward(ps, spec.widths(), cache, dout);
}

std::vector<Array> backward_score(const ParamStore& ps,
                                  const ScoreNetSpec& spec,
                                  const MlpCache& cache, const Matrix& dprobs) {
  // Softmax Jacobian per row: dlogit_j = s_j * (a_j - sum_k a_k s_k).
  const Matrix& s = cache.softmax_out;
  if (dprobs.rows != s.rows || dprobs.cols != s.cols)
    throw std::invalid_argument("backward_score: adjoint shape mismatch");
  Matrix dlogits(s.rows, s.cols);
  const std::size_t group = spec.alphabet;
  for (std::size_t r = 0; r < s.rows; ++r) {
    const double* sr = s.row(r);
    const double* ar = dprobs.row(r);
    double* dr = dlogits.row(r);
    for (std::size_t g = 0; g < s.cols; g += group) {
      double inner = 0.0;
      for (std::size_t j = 0; j < group; ++j) inner += ar[g + j] * sr[g + j];
      for (std::size_t j = 0; j < group; ++j)
        dr[g + j] = sr[g + j] * (ar[g + j] - inner);
    }
  }
  return mlp_backward(ps, spec.widths(), cache, dlogits);
}

bool adam_step(ParamStore& ps, const std::vector<Array>& grads, double lr,
               double beta1, double beta2, double eps) {
  if (grads.size() != ps.params.size())
    throw std::invalid_argument("adam_step: gradient count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].data.size() != ps.params[i].data.size())
      throw std::invalid_argument("adam_step: gradient shape mismatch");
    if (!all_finite(grads[i].data)) return false;  // skip update, caller warns
  }
  const double t = static_cast<double>(ps.step_count + 1);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    Vec& p = ps.params[i].data;
    Vec& m = ps.adam_m[i].data;
    Vec& v = ps.adam_v[i].data;
    const Vec& g = grads[i].data;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
      v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
  ps.step_count += 1;
  return true;
}

void ema_update(ParamStore& ps, double decay) {
  if (decay < 0.0 || decay >= 1.0)
    throw std::invalid_argument("ema_update: decay must be in [0, 1)");
  for (std::size_t i = 0; i < ps.params.size(); ++i) {
    Vec& e = ps.ema[i].data;
    const Vec& p = ps.params[i].data;
    for (std::size_t j = 0; j < e.size(); ++j)
      e[j] = decay * e[j] + (1.0 - decay) * p[j];
  }
}

}  // namespace pdns
