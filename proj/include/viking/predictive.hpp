/// \file predictive.hpp
/// \brief Posterior-predictive evaluation: drawing eval-time samples via a
///        fresh projection pass at the current mean, and assembling the
///        per-sample predictive tensors the metrics consume.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "viking/core.hpp"
#include "viking/linalg.hpp"
#include "viking/metrics.hpp"
#include "viking/net.hpp"
#include "viking/posterior.hpp"

namespace viking {

/// Eval-time posterior draws. The kernel directions are recomputed with one
/// fresh alternating-projection pass over the training batches at the final
/// theta_hat: the kernel moved with the mean during training, so reusing
/// training-time noise would describe a stale posterior.
inline std::vector<PosteriorSample> draw_eval_samples(
    const ModelSpec& spec, const Posterior& post, const std::vector<Batch>& train_batches,
    JacobianKind kind, const CgOptions& cg, std::size_t n_samples, Rng rng, int passes = 1) {
  ProjectionState state(n_samples, /*gamma=*/1.0, rng);
  init_kernel_noise(state, spec, post.theta_hat, train_batches, kind, cg, passes);
  std::vector<PosteriorSample> samples;
  samples.reserve(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) samples.push_back(draw_sample(post, state, s));
  return samples;
}

/// Per-sample class probabilities for every input (rows of each matrix sum
/// to one).
inline PredictiveBatch predict_classification(const ModelSpec& spec,
                                              const std::vector<PosteriorSample>& samples,
                                              const Batch& data) {
  PredictiveBatch out;
  out.labels = data.labels;
  out.per_sample.reserve(samples.size());
  for (const PosteriorSample& s : samples) {
    Matrix probs(data.size(), spec.output_dim());
    for (std::size_t i = 0; i < data.size(); ++i)
      probs.set_row(i, softmax(forward(spec, s.theta, data.inputs.row(i))));
    out.per_sample.push_back(std::move(probs));
  }
  return out;
}

/// S x N matrix of scalar regression outputs on the given inputs. With
/// linearize set, predictions are first-order around theta_hat so kernel
/// directions provably leave training predictions unchanged.
inline Matrix predict_regression(const ModelSpec& spec, const Posterior& post,
                                 const std::vector<PosteriorSample>& samples,
                                 const Matrix& inputs, bool linearize) {
  require(spec.output_dim() == 1, "predict_regression: scalar outputs only");
  Matrix out(samples.size(), inputs.rows);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const Matrix pred = linearize
                            ? linearized_predict(spec, post.theta_hat, samples[s].theta, inputs)
                            : forward(spec, samples[s].theta, inputs);
    for (std::size_t i = 0; i < inputs.rows; ++i) out(s, i) = pred(i, 0);
  }
  return out;
}

/// Mixture predictive NLL for scalar regression: each posterior sample
/// contributes a Gaussian component at its prediction with the model's
/// observation noise.
inline double regression_mixture_nll(const ModelSpec& spec, const Matrix& sample_outputs,
                                     const Matrix& targets) {
  require(sample_outputs.cols == targets.rows && targets.cols == 1,
          "regression_mixture_nll: sample columns must match target rows");
  const double s2 = spec.obs_noise * spec.obs_noise;
  const double norm = 1.0 / std::sqrt(6.283185307179586476925286766559 * s2);
  double nll = 0.0;
  for (std::size_t i = 0; i < targets.rows; ++i) {
    double acc = 0.0;
    for (std::size_t s = 0; s < sample_outputs.rows; ++s) {
      const double r = sample_outputs(s, i) - targets(i, 0);
      acc += std::exp(-0.5 * r * r / s2);
    }
    const double dens = norm * acc / static_cast<double>(sample_outputs.rows);
    nll -= std::log(std::max(dens, 1e-300));
  }
  return nll / static_cast<double>(targets.rows);
}

/// One max-softmax-variance score per input.
inline Vector ood_scores(const PredictiveBatch& batch) {
  require(batch.samples() >= 2, "ood_scores: need at least two samples");
  const std::size_t n = batch.points();
  const std::size_t classes = batch.per_sample[0].cols;
  Vector scores(n);
  Matrix probs(batch.samples(), classes);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < batch.samples(); ++s)
      for (std::size_t c = 0; c < classes; ++c) probs(s, c) = batch.per_sample[s](i, c);
    scores[i] = ood_score(probs);
  }
  return scores;
}

}  // namespace viking
