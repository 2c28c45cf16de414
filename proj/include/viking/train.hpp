/// \file train.hpp
/// \brief Training loops: Adam, MLE warmup, post-hoc sigma tuning, and the
///        full ELBO loop with stochastic alternating projections.
///
/// The loop minimizes the beta-ELBO scaled by -1/N_total, i.e. the per-datum
/// mean reconstruction loss plus (beta/N_total) * KL. This has the same
/// maximizer as the full-scale ELBO and collapses bitwise to plain Adam MLE
/// when both sigmas are exactly zero and beta is zero. Logged ELBO values
/// keep the full-dataset scale.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "viking/core.hpp"
#include "viking/linalg.hpp"
#include "viking/net.hpp"
#include "viking/posterior.hpp"

namespace viking {

/// Splitmix-style stream derivation so sub-streams of one seed stay
/// decorrelated and reproducible.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct TrainConfig {
  double beta = 1e-4;              ///< KL weight (0 disables the KL term)
  double gamma = 0.5;              ///< noise retention of the projection process
  std::size_t train_samples = 1;   ///< S, MC samples per step
  std::size_t eval_samples = 20;   ///< posterior samples at evaluation time
  std::size_t batch_size = 32;
  std::size_t warmup_epochs = 0;
  std::size_t sigma_tune_epochs = 5;
  std::size_t elbo_epochs = 50;
  double lr_warmup = 1e-3;
  double lr_elbo = 1e-4;
  std::size_t cg_iters = 10;
  double cg_tol = 1e-6;
  double clip_norm = 0.0;          ///< global-norm gradient clip; 0 disables
  std::size_t projection_passes = 1;
  double init_log_alpha = 4.0;
  double init_log_sigma_im = -2.0;
  bool train_sigmas = true;
  JacobianKind jacobian = JacobianKind::Loss;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  ///< epochs between periodic checkpoints; 0 = end only

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (!(beta >= 0.0)) v.push_back("train.beta must be >= 0");
    if (!(gamma >= 0.0 && gamma <= 1.0)) v.push_back("train.gamma must lie in [0, 1]");
    if (train_samples < 1) v.push_back("train.train_samples must be >= 1");
    if (eval_samples < 1) v.push_back("train.eval_samples must be >= 1");
    if (batch_size < 1) v.push_back("train.batch_size must be >= 1");
    if (!(lr_warmup > 0.0)) v.push_back("train.lr_warmup must be > 0");
    if (!(lr_elbo > 0.0)) v.push_back("train.lr_elbo must be > 0");
    if (cg_iters < 1) v.push_back("train.cg_iters must be >= 1");
    if (!(cg_tol > 0.0)) v.push_back("train.cg_tol must be > 0");
    if (!(clip_norm >= 0.0)) v.push_back("train.clip_norm must be >= 0");
    if (projection_passes < 1) v.push_back("train.projection_passes must be >= 1");
    return v;
  }

  void validate() const {
    const auto v = violations();
    if (v.empty()) return;
    std::string msg = "invalid train config:";
    for (const auto& s : v) msg += "\n  - " + s;
    throw std::invalid_argument(msg);
  }

  CgOptions cg_options() const { return {cg_iters, cg_tol, true}; }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_metric = 0.0;  ///< accuracy (categorical) or RMSE (regression)
  double val_metric = 0.0;
  double val_nll = 0.0;
  double elbo = 0.0;  ///< mean of per-step full-scale estimates
  double kl = 0.0;
  double r_hat = 0.0;
  double sigma_ker = 0.0;
  double sigma_im = 0.0;
  /// |<eps_ker, eps_im>| / |eps0|^2, averaged over samples at the epoch's
  /// last step. eps_im is formed against the epoch-initial draw even after
  /// fresh noise injections, so this measures how far the split drifts from
  /// orthogonality within the epoch.
  double split_dot = 0.0;
  double wall_time_s = 0.0;
};

using TrainLog = std::vector<EpochRecord>;

struct Adam {
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Vector m, v;
  std::uint64_t t = 0;

  Adam(std::size_t dim, double lr_) : lr(lr_), m(dim, 0.0), v(dim, 0.0) {}

  /// Returns the additive update (already negated); callers apply it with
  /// `param[i] += delta[i]` so every path shares the same arithmetic.
  Vector update(const Vector& grad) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    Vector delta(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      delta[i] = -lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
    return delta;
  }
};

/// Scales the gradient so its Euclidean norm does not exceed max_norm.
inline void clip_global_norm(Vector& grad, double max_norm) {
  if (max_norm <= 0.0) return;
  const double n = norm2(grad);
  if (n > max_norm) scale(grad, max_norm / n);
}

struct TrainHooks {
  /// Called after every optimizer step with the current parameters.
  std::function<void(std::size_t step, const Vector& theta)> on_step;
  /// Called after every completed epoch with the current posterior.
  std::function<void(std::size_t epoch, const Posterior& post)> on_epoch;
};

struct PointMetrics {
  double metric = 0.0;  ///< accuracy or RMSE
  double nll = 0.0;     ///< mean negative log-likelihood
};

/// Point-estimate metrics at fixed parameters (no posterior sampling).
inline PointMetrics point_metrics(const ModelSpec& spec, const Vector& params,
                                  const Batch& batch) {
  PointMetrics pm;
  const Vector losses = per_datum_losses(spec, params, batch);
  for (double v : losses) pm.nll += v;
  pm.nll /= static_cast<double>(losses.size());
  if (spec.loss == LossKind::Categorical) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Vector out = forward(spec, params, batch.inputs.row(i));
      std::size_t arg = 0;
      for (std::size_t k = 1; k < out.size(); ++k)
        if (out[k] > out[arg]) arg = k;
      if (arg == static_cast<std::size_t>(batch.labels[i])) ++correct;
    }
    pm.metric = static_cast<double>(correct) / static_cast<double>(batch.size());
  } else {
    double sq = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Vector out = forward(spec, params, batch.inputs.row(i));
      for (std::size_t k = 0; k < out.size(); ++k) {
        const double r = out[k] - batch.targets(i, k);
        sq += r * r;
        ++n;
      }
    }
    pm.metric = std::sqrt(sq / static_cast<double>(n));
  }
  return pm;
}

inline std::size_t total_points(const std::vector<Batch>& batches) {
  std::size_t n = 0;
  for (const Batch& b : batches) n += b.size();
  return n;
}

/// Adam minimization of the mean negative log-likelihood. epochs = 0 returns
/// the initialization unchanged.
inline Vector warmup_mle(const ModelSpec& spec, const std::vector<Batch>& batches,
                         std::size_t epochs, double lr, const Vector& init_params,
                         double clip_norm = 0.0, const TrainHooks& hooks = {}) {
  require(!batches.empty(), "warmup_mle: need at least one batch");
  require(init_params.size() == spec.param_count(),
          "warmup_mle: init params length does not match model");
  Vector params = init_params;
  Adam adam(params.size(), lr);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    for (const Batch& batch : batches) {
      Vector grad;
      try {
        grad = batch_loss_grad_sum(spec, params, batch);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("warmup_mle: diverged at epoch " + std::to_string(epoch) +
                                 " (" + e.what() + ")");
      }
      scale(grad, 1.0 / static_cast<double>(batch.size()));
      clip_global_norm(grad, clip_norm);
      const Vector delta = adam.update(grad);
      for (std::size_t i = 0; i < params.size(); ++i) params[i] += delta[i];
      ++step;
      if (hooks.on_step) hooks.on_step(step, params);
    }
  }
  return params;
}

struct TrainResult {
  Posterior posterior;
  TrainLog log;
};

/// Full ELBO optimization. Per epoch: redraw and alternating-project the
/// kernel noise over all batches, then per mini-batch advance the noise
/// process, draw S samples, and take one Adam step over
/// (theta_hat, log alpha, log sigma_im). The first sigma_tune_epochs epochs
/// keep theta_hat frozen.
inline TrainResult train_viking(const ModelSpec& spec, const std::vector<Batch>& train_batches,
                                const Batch& val, const TrainConfig& cfg,
                                const Vector& init_params, const TrainHooks& hooks = {}) {
  spec.validate();
  cfg.validate();
  require(!train_batches.empty(), "train_viking: need at least one batch");
  const std::size_t dim = spec.param_count();
  require(init_params.size() == dim, "train_viking: init params length does not match model");

  Posterior post;
  post.theta_hat = init_params;
  post.log_alpha = cfg.init_log_alpha;
  post.log_sigma_im = cfg.init_log_sigma_im;

  const std::size_t n_total = total_points(train_batches);
  const CgOptions cg = cfg.cg_options();
  ProjectionState state(cfg.train_samples, cfg.gamma, Rng(derive_seed(cfg.seed, 1)));
  Adam adam(dim + 2, cfg.lr_elbo);

  TrainLog log;
  double r_smooth = -1.0;
  std::size_t step = 0;
  const std::size_t total_epochs = cfg.sigma_tune_epochs + cfg.elbo_epochs;

  for (std::size_t epoch = 0; epoch < total_epochs; ++epoch) {
    const auto tic = std::chrono::steady_clock::now();
    const bool theta_active = epoch >= cfg.sigma_tune_epochs;
    try {
      init_kernel_noise(state, spec, post.theta_hat, train_batches, cfg.jacobian, cg,
                        static_cast<int>(cfg.projection_passes));
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("train_viking: projection failure in the epoch " +
                               std::to_string(epoch) + " pre-pass (" + e.what() + ")");
    }
    double elbo_acc = 0.0;
    std::size_t elbo_cnt = 0;
    double split_dot = 0.0;

    for (const Batch& batch : train_batches) {
      try {
        const DenseMap j = build_jacobian(spec, post.theta_hat, batch, cfg.jacobian);
        step_kernel_noise(state, j, cg);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("train_viking: projection failure at epoch " +
                                 std::to_string(epoch) + ", step " + std::to_string(step) +
                                 " (" + e.what() + ")");
      }

      std::vector<PosteriorSample> samples;
      samples.reserve(cfg.train_samples);
      for (std::size_t s = 0; s < cfg.train_samples; ++s)
        samples.push_back(draw_sample(post, state, s));

      split_dot = 0.0;
      for (std::size_t s = 0; s < samples.size(); ++s)
        split_dot += std::abs(dot(samples[s].eps_ker, samples[s].eps_im)) /
                     dot(state.eps0[s], state.eps0[s]);
      split_dot /= static_cast<double>(samples.size());

      const double r_step = estimate_rank(state, dim).r_hat;
      r_smooth = r_smooth < 0.0 ? r_step : 0.9 * r_smooth + 0.1 * r_step;

      // Reconstruction gradients with frozen noise directions.
      Vector g_theta;
      double ga_raw = 0.0, gb_raw = 0.0;
      for (std::size_t s = 0; s < samples.size(); ++s) {
        Vector gs;
        try {
          gs = batch_loss_grad_sum(spec, samples[s].theta, batch);
        } catch (const std::runtime_error& e) {
          throw std::runtime_error("train_viking: failure at epoch " + std::to_string(epoch) +
                                   ", step " + std::to_string(step) + " (" + e.what() + ")");
        }
        ga_raw += dot(gs, samples[s].eps_ker);
        gb_raw += dot(gs, samples[s].eps_im);
        if (s == 0)
          g_theta = std::move(gs);
        else
          axpy(1.0, gs, g_theta);
      }
      const double inv_sb =
          1.0 / static_cast<double>(cfg.train_samples * batch.size());

      Vector grad(dim + 2, 0.0);
      if (theta_active)
        for (std::size_t i = 0; i < dim; ++i) grad[i] = g_theta[i] * inv_sb;
      if (cfg.train_sigmas) {
        grad[dim] = ga_raw * (-0.5 * post.sigma_ker()) * inv_sb;
        grad[dim + 1] = gb_raw * post.sigma_im() * inv_sb;
      }
      if (cfg.beta != 0.0) {
        const KlGrads kg = kl_grads(post, r_smooth);
        const double w = cfg.beta / static_cast<double>(n_total);
        if (theta_active)
          for (std::size_t i = 0; i < dim; ++i) grad[i] += w * kg.d_theta[i];
        if (cfg.train_sigmas) {
          grad[dim] += w * kg.d_log_alpha;
          grad[dim + 1] += w * kg.d_log_sigma_im;
        }
      }
      if (!all_finite(grad))
        throw std::runtime_error("train_viking: non-finite gradient at epoch " +
                                 std::to_string(epoch) + ", step " + std::to_string(step));
      clip_global_norm(grad, cfg.clip_norm);
      const Vector delta = adam.update(grad);
      for (std::size_t i = 0; i < dim; ++i) post.theta_hat[i] += delta[i];
      post.log_alpha += delta[dim];
      post.log_sigma_im += delta[dim + 1];

      elbo_acc += elbo_estimate(spec, post, samples, batch, r_smooth, cfg.beta, n_total);
      if (!std::isfinite(elbo_acc))
        throw std::runtime_error("train_viking: non-finite ELBO at epoch " +
                                 std::to_string(epoch) + ", step " + std::to_string(step));
      ++elbo_cnt;
      ++step;
      if (hooks.on_step) hooks.on_step(step, post.theta_hat);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    PointMetrics train_pm{0.0, 0.0};
    for (const Batch& b : train_batches) {
      const PointMetrics pm = point_metrics(spec, post.theta_hat, b);
      const double w = static_cast<double>(b.size()) / static_cast<double>(n_total);
      train_pm.metric += w * pm.metric;
      train_pm.nll += w * pm.nll;
    }
    const PointMetrics val_pm = point_metrics(spec, post.theta_hat, val);
    rec.train_metric = train_pm.metric;
    rec.val_metric = val_pm.metric;
    rec.val_nll = val_pm.nll;
    rec.elbo = elbo_acc / static_cast<double>(elbo_cnt);
    rec.kl = cfg.beta != 0.0 ? kl(post, r_smooth < 0.0 ? 0.0 : r_smooth, dim) : 0.0;
    rec.r_hat = r_smooth < 0.0 ? 0.0 : r_smooth;
    rec.sigma_ker = post.sigma_ker();
    rec.sigma_im = post.sigma_im();
    rec.split_dot = split_dot;
    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
    log.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(epoch, post);
  }
  return {std::move(post), std::move(log)};
}

/// Post-hoc variational inference with a fixed model: the kernel noise is
/// projected once and reused for every step; only (log alpha, log sigma_im)
/// are optimized. theta_hat is never written.
inline Posterior posthoc_tune_sigmas(const ModelSpec& spec, const Vector& theta_hat,
                                     const std::vector<Batch>& train_batches,
                                     const TrainConfig& cfg, std::size_t epochs,
                                     TrainLog* log_out = nullptr) {
  spec.validate();
  cfg.validate();
  require(!train_batches.empty(), "posthoc_tune_sigmas: need at least one batch");
  Posterior post;
  post.theta_hat = theta_hat;
  post.log_alpha = cfg.init_log_alpha;
  post.log_sigma_im = cfg.init_log_sigma_im;
  const std::size_t dim = post.dim();
  const std::size_t n_total = total_points(train_batches);
  const CgOptions cg = cfg.cg_options();

  ProjectionState state(cfg.train_samples, cfg.gamma, Rng(derive_seed(cfg.seed, 2)));
  init_kernel_noise(state, spec, post.theta_hat, train_batches, cfg.jacobian, cg,
                    static_cast<int>(cfg.projection_passes));
  const double r_hat = estimate_rank(state, dim).r_hat;

  Adam adam(2, cfg.lr_elbo);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const auto tic = std::chrono::steady_clock::now();
    double elbo_acc = 0.0;
    std::size_t elbo_cnt = 0;
    for (const Batch& batch : train_batches) {
      std::vector<PosteriorSample> samples;
      samples.reserve(cfg.train_samples);
      for (std::size_t s = 0; s < cfg.train_samples; ++s)
        samples.push_back(draw_sample(post, state, s));

      double ga_raw = 0.0, gb_raw = 0.0;
      for (const PosteriorSample& s : samples) {
        const Vector gs = batch_loss_grad_sum(spec, s.theta, batch);
        ga_raw += dot(gs, s.eps_ker);
        gb_raw += dot(gs, s.eps_im);
      }
      const double inv_sb = 1.0 / static_cast<double>(cfg.train_samples * batch.size());
      Vector grad(2);
      grad[0] = ga_raw * (-0.5 * post.sigma_ker()) * inv_sb;
      grad[1] = gb_raw * post.sigma_im() * inv_sb;
      if (cfg.beta != 0.0) {
        const KlGrads kg = kl_grads(post, r_hat);
        const double w = cfg.beta / static_cast<double>(n_total);
        grad[0] += w * kg.d_log_alpha;
        grad[1] += w * kg.d_log_sigma_im;
      }
      clip_global_norm(grad, cfg.clip_norm);
      const Vector delta = adam.update(grad);
      post.log_alpha += delta[0];
      post.log_sigma_im += delta[1];
      elbo_acc += elbo_estimate(spec, post, samples, batch, r_hat, cfg.beta, n_total);
      ++elbo_cnt;
    }
    if (log_out) {
      EpochRecord rec;
      rec.epoch = epoch;
      rec.elbo = elbo_acc / static_cast<double>(elbo_cnt);
      rec.kl = cfg.beta != 0.0 ? kl(post, r_hat, dim) : 0.0;
      rec.r_hat = r_hat;
      rec.sigma_ker = post.sigma_ker();
      rec.sigma_im = post.sigma_im();
      rec.wall_time_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
      log_out->push_back(rec);
    }
  }
  return post;
}

}  // namespace viking
