/// \file net.hpp
/// \brief MLP model zoo: forward evaluation, per-datum losses and gradients,
///        model-output Jacobians and exact linearized prediction.
///
/// Parameters live in one flat vector ("theta"), laid out layer by layer as
/// W (row-major, out x in) followed by b. Gradients are computed by hand-
/// rolled reverse mode over that layout; tangents (JVPs) by forward mode.
/// Sign convention: per-datum gradient rows are gradients of the
/// log-likelihood, i.e. the negated loss gradient.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "viking/core.hpp"

namespace viking {

enum class Activation { Tanh, Relu, Elu };
enum class LossKind { Categorical, GaussianRegression };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Elu: return "elu";
  }
  return "?";
}

inline const char* to_string(LossKind k) {
  return k == LossKind::Categorical ? "categorical" : "gaussian";
}

struct ModelSpec {
  /// [input, hidden..., output]. Two entries give a purely linear model.
  std::vector<std::size_t> layer_sizes;
  Activation activation = Activation::Tanh;
  LossKind loss = LossKind::Categorical;
  /// Observation noise std of the Gaussian likelihood (regression only).
  double obs_noise = 1.0;

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
  std::size_t layer_count() const { return layer_sizes.size() - 1; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
      n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
    return n;
  }

  void validate() const {
    require(layer_sizes.size() >= 2, "ModelSpec: need at least input and output sizes");
    for (std::size_t s : layer_sizes)
      require(s >= 1, "ModelSpec: layer sizes must be positive");
    if (loss == LossKind::GaussianRegression)
      require(obs_noise > 0.0, "ModelSpec: obs_noise must be positive");
  }

  /// FNV-1a over the canonical textual form; used to pair checkpoints with
  /// the architecture they were trained on.
  std::uint64_t hash() const {
    std::string s = "mlp|";
    for (std::size_t v : layer_sizes) s += std::to_string(v) + ",";
    s += "|";
    s += to_string(activation);
    s += "|";
    s += to_string(loss);
    if (loss == LossKind::GaussianRegression) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "|%.17g", obs_noise);
      s += buf;
    }
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    return h;
  }
};

struct Batch {
  Matrix inputs;            ///< B x input_dim
  Matrix targets;           ///< B x output_dim (regression)
  std::vector<int> labels;  ///< B (categorical)

  std::size_t size() const { return inputs.rows; }
};

inline void validate_batch(const ModelSpec& spec, const Batch& batch) {
  require(batch.size() >= 1, "batch: must contain at least one datum");
  require(batch.inputs.cols == spec.input_dim(), "batch: input width does not match model");
  if (spec.loss == LossKind::Categorical) {
    require(batch.labels.size() == batch.size(), "batch: label count does not match inputs");
    for (std::size_t i = 0; i < batch.labels.size(); ++i)
      require(batch.labels[i] >= 0 &&
                  static_cast<std::size_t>(batch.labels[i]) < spec.output_dim(),
              "batch: label out of class range at datum " + std::to_string(i));
  } else {
    require(batch.targets.rows == batch.size() && batch.targets.cols == spec.output_dim(),
            "batch: target shape does not match model output");
  }
}

namespace detail {

struct LayerView {
  const double* w;  // out x in, row-major
  const double* b;  // out
  std::size_t in, out;
};

inline LayerView layer_view(const ModelSpec& spec, const Vector& params, std::size_t l) {
  std::size_t off = 0;
  for (std::size_t k = 0; k < l; ++k)
    off += spec.layer_sizes[k] * spec.layer_sizes[k + 1] + spec.layer_sizes[k + 1];
  const std::size_t in = spec.layer_sizes[l];
  const std::size_t out = spec.layer_sizes[l + 1];
  return {params.data() + off, params.data() + off + in * out, in, out};
}

inline double act_value(Activation a, double z) {
  switch (a) {
    case Activation::Tanh: return std::tanh(z);
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::Elu: return z > 0.0 ? z : std::expm1(z);
  }
  return 0.0;
}

/// Derivative expressed through the cached activation value.
inline double act_deriv(Activation a, double z, double value) {
  switch (a) {
    case Activation::Tanh: return 1.0 - value * value;
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Elu: return z > 0.0 ? 1.0 : value + 1.0;
  }
  return 0.0;
}

/// Per-datum forward pass caching pre-activations and activations.
struct Trace {
  std::vector<Vector> pre;  ///< z_l, one per layer
  std::vector<Vector> act;  ///< a_0 = input, then activated hidden layers
};

inline Vector forward_datum(const ModelSpec& spec, const Vector& params, const Vector& x,
                            Trace* trace = nullptr) {
  const std::size_t layers = spec.layer_count();
  Vector a = x;
  if (trace) {
    trace->pre.assign(layers, {});
    trace->act.assign(layers + 1, {});
    trace->act[0] = a;
  }
  for (std::size_t l = 0; l < layers; ++l) {
    const LayerView lv = layer_view(spec, params, l);
    Vector z(lv.out);
    for (std::size_t o = 0; o < lv.out; ++o) {
      double s = lv.b[o];
      const double* row = lv.w + o * lv.in;
      for (std::size_t i = 0; i < lv.in; ++i) s += row[i] * a[i];
      z[o] = s;
    }
    const bool last = (l + 1 == layers);
    if (trace) trace->pre[l] = z;
    if (last) {
      a = std::move(z);
    } else {
      Vector h(z.size());
      for (std::size_t o = 0; o < z.size(); ++o) h[o] = act_value(spec.activation, z[o]);
      a = std::move(h);
    }
    if (trace) trace->act[l + 1] = a;
  }
  return a;
}

/// Accumulates d(loss-like scalar)/d(theta) into grad given the cotangent of
/// the network output. grad must be sized param_count().
inline void backward_datum(const ModelSpec& spec, const Vector& params, const Trace& trace,
                           Vector cotangent, Vector& grad) {
  const std::size_t layers = spec.layer_count();
  std::size_t off_end = grad.size();
  for (std::size_t l = layers; l-- > 0;) {
    const LayerView lv = layer_view(spec, params, l);
    const std::size_t block = lv.in * lv.out + lv.out;
    const std::size_t off = off_end - block;
    double* gw = grad.data() + off;
    double* gb = grad.data() + off + lv.in * lv.out;
    const Vector& a_prev = trace.act[l];
    for (std::size_t o = 0; o < lv.out; ++o) {
      const double d = cotangent[o];
      gb[o] += d;
      if (d != 0.0) {
        double* grow = gw + o * lv.in;
        for (std::size_t i = 0; i < lv.in; ++i) grow[i] += d * a_prev[i];
      }
    }
    if (l > 0) {
      Vector da(lv.in, 0.0);
      for (std::size_t o = 0; o < lv.out; ++o) {
        const double d = cotangent[o];
        if (d == 0.0) continue;
        const double* row = lv.w + o * lv.in;
        for (std::size_t i = 0; i < lv.in; ++i) da[i] += d * row[i];
      }
      const Vector& z = trace.pre[l - 1];
      const Vector& a = trace.act[l];
      for (std::size_t i = 0; i < lv.in; ++i)
        da[i] *= act_deriv(spec.activation, z[i], a[i]);
      cotangent = std::move(da);
    }
    off_end = off;
  }
}

}  // namespace detail

/// Stabilized softmax.
inline Vector softmax(const Vector& logits) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  Vector p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    s += p[i];
  }
  for (double& v : p) v /= s;
  return p;
}

inline double log_sum_exp(const Vector& logits) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double s = 0.0;
  for (double v : logits) s += std::exp(v - m);
  return m + std::log(s);
}

inline Vector forward(const ModelSpec& spec, const Vector& params, const Vector& x) {
  require(params.size() == spec.param_count(), "forward: parameter vector has wrong length");
  require(x.size() == spec.input_dim(), "forward: input width does not match model");
  return detail::forward_datum(spec, params, x);
}

inline Matrix forward(const ModelSpec& spec, const Vector& params, const Matrix& inputs) {
  require(params.size() == spec.param_count(), "forward: parameter vector has wrong length");
  require(inputs.cols == spec.input_dim(), "forward: input width does not match model");
  Matrix out(inputs.rows, spec.output_dim());
  for (std::size_t i = 0; i < inputs.rows; ++i)
    out.set_row(i, detail::forward_datum(spec, params, inputs.row(i)));
  return out;
}

/// Negative log-likelihood of one datum given the network output.
inline double loss_from_output(const ModelSpec& spec, const Vector& out, const Batch& batch,
                               std::size_t i) {
  if (spec.loss == LossKind::Categorical) {
    return log_sum_exp(out) - out[static_cast<std::size_t>(batch.labels[i])];
  }
  const double s2 = spec.obs_noise * spec.obs_noise;
  double q = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double r = out[k] - batch.targets(i, k);
    q += r * r;
  }
  return 0.5 * q / s2 +
         0.5 * static_cast<double>(out.size()) *
             std::log(6.283185307179586476925286766559 * s2);
}

/// d(loss)/d(output) for one datum.
inline Vector loss_cotangent(const ModelSpec& spec, const Vector& out, const Batch& batch,
                             std::size_t i) {
  if (spec.loss == LossKind::Categorical) {
    Vector g = softmax(out);
    g[static_cast<std::size_t>(batch.labels[i])] -= 1.0;
    return g;
  }
  const double inv_s2 = 1.0 / (spec.obs_noise * spec.obs_noise);
  Vector g(out.size());
  for (std::size_t k = 0; k < out.size(); ++k)
    g[k] = (out[k] - batch.targets(i, k)) * inv_s2;
  return g;
}

/// Entry i is -log p(y_i | x_i, params).
inline Vector per_datum_losses(const ModelSpec& spec, const Vector& params, const Batch& batch) {
  validate_batch(spec, batch);
  Vector losses(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vector out = detail::forward_datum(spec, params, batch.inputs.row(i));
    losses[i] = loss_from_output(spec, out, batch, i);
    if (!std::isfinite(losses[i]))
      throw std::runtime_error("per_datum_losses: non-finite loss at datum " +
                               std::to_string(i));
  }
  return losses;
}

inline double batch_mean_loss(const ModelSpec& spec, const Vector& params, const Batch& batch) {
  const Vector losses = per_datum_losses(spec, params, batch);
  double s = 0.0;
  for (double v : losses) s += v;
  return s / static_cast<double>(losses.size());
}

/// Row i is the log-likelihood gradient of datum i (B x D).
inline Matrix per_datum_grads(const ModelSpec& spec, const Vector& params, const Batch& batch) {
  validate_batch(spec, batch);
  const std::size_t dim = spec.param_count();
  Matrix rows(batch.size(), dim);
  detail::Trace trace;
  Vector grad(dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vector out = detail::forward_datum(spec, params, batch.inputs.row(i), &trace);
    std::fill(grad.begin(), grad.end(), 0.0);
    detail::backward_datum(spec, params, trace, loss_cotangent(spec, out, batch, i), grad);
    if (!all_finite(grad))
      throw std::runtime_error("per_datum_grads: non-finite gradient at datum " +
                               std::to_string(i));
    for (std::size_t j = 0; j < dim; ++j) rows(i, j) = -grad[j];
  }
  return rows;
}

/// Sum over the batch of per-datum loss gradients. This is the single
/// primitive both the MLE warmup and the ELBO loop reduce to, so the two
/// paths stay bitwise comparable.
inline Vector batch_loss_grad_sum(const ModelSpec& spec, const Vector& params,
                                  const Batch& batch) {
  validate_batch(spec, batch);
  Vector grad(spec.param_count(), 0.0);
  detail::Trace trace;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vector out = detail::forward_datum(spec, params, batch.inputs.row(i), &trace);
    detail::backward_datum(spec, params, trace, loss_cotangent(spec, out, batch, i), grad);
  }
  if (!all_finite(grad))
    throw std::runtime_error("batch_loss_grad_sum: non-finite gradient");
  return grad;
}

/// Rows are d f_k(x_i) / d theta in datum-major order ((B*out) x D).
inline Matrix model_output_jacobian(const ModelSpec& spec, const Vector& params,
                                    const Matrix& inputs) {
  require(inputs.cols == spec.input_dim(), "model_output_jacobian: input width mismatch");
  const std::size_t dim = spec.param_count();
  const std::size_t out_dim = spec.output_dim();
  Matrix rows(inputs.rows * out_dim, dim);
  detail::Trace trace;
  Vector grad(dim);
  for (std::size_t i = 0; i < inputs.rows; ++i) {
    detail::forward_datum(spec, params, inputs.row(i), &trace);
    for (std::size_t k = 0; k < out_dim; ++k) {
      Vector cot(out_dim, 0.0);
      cot[k] = 1.0;
      std::fill(grad.begin(), grad.end(), 0.0);
      detail::backward_datum(spec, params, trace, std::move(cot), grad);
      rows.set_row(i * out_dim + k, grad);
    }
  }
  return rows;
}

/// Directional derivative of the network output along a parameter tangent,
/// computed by forward-mode propagation (exact, not finite-differenced).
inline Vector jvp(const ModelSpec& spec, const Vector& params, const Vector& x,
                  const Vector& tangent) {
  require(params.size() == spec.param_count() && tangent.size() == params.size(),
          "jvp: parameter/tangent length mismatch");
  const std::size_t layers = spec.layer_count();
  Vector a = x;
  Vector da(x.size(), 0.0);
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const detail::LayerView lv = detail::layer_view(spec, params, l);
    const double* tw = tangent.data() + off;
    const double* tb = tangent.data() + off + lv.in * lv.out;
    off += lv.in * lv.out + lv.out;
    Vector z(lv.out), dz(lv.out);
    for (std::size_t o = 0; o < lv.out; ++o) {
      const double* wrow = lv.w + o * lv.in;
      const double* trow = tw + o * lv.in;
      double s = lv.b[o];
      double ds = tb[o];
      for (std::size_t i = 0; i < lv.in; ++i) {
        s += wrow[i] * a[i];
        ds += trow[i] * a[i] + wrow[i] * da[i];
      }
      z[o] = s;
      dz[o] = ds;
    }
    if (l + 1 == layers) {
      a = std::move(z);
      da = std::move(dz);
    } else {
      Vector h(lv.out), dh(lv.out);
      for (std::size_t o = 0; o < lv.out; ++o) {
        h[o] = detail::act_value(spec.activation, z[o]);
        dh[o] = detail::act_deriv(spec.activation, z[o], h[o]) * dz[o];
      }
      a = std::move(h);
      da = std::move(dh);
    }
  }
  return da;
}

/// First-order prediction around theta_hat: f(theta_hat, x) plus the exact
/// Jacobian-vector product with the parameter displacement.
inline Matrix linearized_predict(const ModelSpec& spec, const Vector& theta_hat,
                                 const Vector& theta_sample, const Matrix& inputs) {
  require(theta_hat.size() == spec.param_count() && theta_sample.size() == theta_hat.size(),
          "linearized_predict: parameter vectors must both have length D");
  const Vector delta = sub(theta_sample, theta_hat);
  Matrix out(inputs.rows, spec.output_dim());
  for (std::size_t i = 0; i < inputs.rows; ++i) {
    const Vector x = inputs.row(i);
    Vector y = detail::forward_datum(spec, theta_hat, x);
    const Vector dy = jvp(spec, theta_hat, x, delta);
    for (std::size_t k = 0; k < y.size(); ++k) y[k] += dy[k];
    out.set_row(i, y);
  }
  return out;
}

/// Glorot-uniform weights, zero biases.
inline Vector init_params(const ModelSpec& spec, Rng& rng) {
  Vector params(spec.param_count(), 0.0);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
    const std::size_t in = spec.layer_sizes[l];
    const std::size_t out = spec.layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (std::size_t k = 0; k < in * out; ++k) params[off + k] = rng.uniform(-limit, limit);
    off += in * out + out;  // biases stay zero
  }
  return params;
}

/// Per-layer (W, b) view used by pack/unpack round trips.
struct LayerParams {
  Matrix weights;
  Vector bias;
};

inline std::vector<LayerParams> unpack(const ModelSpec& spec, const Vector& params) {
  require(params.size() == spec.param_count(), "unpack: parameter vector has wrong length");
  std::vector<LayerParams> layers;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
    const std::size_t in = spec.layer_sizes[l];
    const std::size_t out = spec.layer_sizes[l + 1];
    LayerParams lp;
    lp.weights = Matrix(out, in);
    std::copy(params.begin() + static_cast<std::ptrdiff_t>(off),
              params.begin() + static_cast<std::ptrdiff_t>(off + in * out),
              lp.weights.data.begin());
    off += in * out;
    lp.bias.assign(params.begin() + static_cast<std::ptrdiff_t>(off),
                   params.begin() + static_cast<std::ptrdiff_t>(off + out));
    off += out;
    layers.push_back(std::move(lp));
  }
  return layers;
}

inline Vector pack(const ModelSpec& spec, const std::vector<LayerParams>& layers) {
  Vector params;
  params.reserve(spec.param_count());
  for (const LayerParams& lp : layers) {
    params.insert(params.end(), lp.weights.data.begin(), lp.weights.data.end());
    params.insert(params.end(), lp.bias.begin(), lp.bias.end());
  }
  require(params.size() == spec.param_count(), "pack: layer shapes do not match spec");
  return params;
}

}  // namespace viking
