/// \file posterior.hpp
/// \brief Two-subspace Gaussian posterior: kernel-noise state, stochastic
///        alternating projections, Hutchinson rank estimation, closed-form
///        KL, and the ELBO estimate.
///
/// The variational family is N(theta_hat, Sigma) with
/// Sigma = sigma_ker^2 P + sigma_im^2 (I - P), where P projects onto the
/// kernel of the per-batch gradient row stacks. sigma_ker is tied to the
/// prior precision (alpha = 1 / sigma_ker^2) and both scales are carried in
/// log form, so positivity holds by construction.

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "viking/core.hpp"
#include "viking/linalg.hpp"
#include "viking/net.hpp"

namespace viking {

struct Posterior {
  Vector theta_hat;
  double log_alpha = 4.0;
  double log_sigma_im = -2.0;

  std::size_t dim() const { return theta_hat.size(); }
  double alpha() const { return std::exp(log_alpha); }
  double sigma_ker() const { return std::exp(-0.5 * log_alpha); }
  double sigma_im() const { return std::exp(log_sigma_im); }
};

/// Per-MC-sample noise state evolved across an epoch: the epoch-initial
/// draws eps0 and the current kernel components eps_ker. hutch holds, per
/// sample, <input, output> of the most recent projection application; these
/// are the Hutchinson pairs for the running kernel-dimension estimate.
/// Pairing each projection's own input with its output matters: dotting
/// eps_ker^(t) against the epoch-initial eps0 instead decays like
/// gamma^(t/2) once fresh noise enters the process.
struct ProjectionState {
  std::vector<Vector> eps0;
  std::vector<Vector> eps_ker;
  Vector hutch;
  double gamma = 0.5;
  Rng rng;

  ProjectionState(std::size_t num_samples, double gamma_, Rng rng_)
      : eps0(num_samples), eps_ker(num_samples), hutch(num_samples, 0.0), gamma(gamma_),
        rng(rng_) {
    require(gamma >= 0.0 && gamma <= 1.0, "ProjectionState: gamma must lie in [0, 1]");
  }

  std::size_t samples() const { return eps0.size(); }
};

struct RankEstimate {
  double r_hat = 0.0;  ///< treated as a constant by all derivatives
  std::size_t samples = 0;
};

/// A posterior draw together with the frozen noise directions it was built
/// from; gradients flow only through the affine map, never the projections.
struct PosteriorSample {
  Vector theta;
  Vector eps_ker;
  Vector eps_im;
};

/// Epoch pre-pass: redraw eps0 ~ N(0, I) for every sample from the state's
/// stream, then run `passes` full sweeps of batch-wise kernel projections at
/// the given parameters. After this, eps_ker + (eps0 - eps_ker) recovers
/// eps0 exactly by construction.
inline void init_kernel_noise(ProjectionState& state, const ModelSpec& spec,
                              const Vector& theta_hat, const std::vector<Batch>& batches,
                              JacobianKind kind, const CgOptions& cg, int passes = 1) {
  require(!batches.empty(), "init_kernel_noise: need at least one batch");
  const std::size_t dim = theta_hat.size();
  for (std::size_t s = 0; s < state.samples(); ++s) {
    state.eps0[s] = state.rng.normal_vector(dim);
    state.eps_ker[s] = state.eps0[s];
  }
  for (int pass = 0; pass < passes; ++pass) {
    for (const Batch& batch : batches) {
      const DenseMap j = build_jacobian(spec, theta_hat, batch, kind);
      for (std::size_t s = 0; s < state.samples(); ++s)
        state.eps_ker[s] = kernel_project(j, state.eps_ker[s], cg).eps_ker;
    }
  }
  for (std::size_t s = 0; s < state.samples(); ++s)
    state.hutch[s] = dot(state.eps0[s], state.eps_ker[s]);
}

/// One-shot convenience wrapper owning a fresh stream.
inline ProjectionState init_kernel_noise(const Posterior& post, const ModelSpec& spec,
                                         const std::vector<Batch>& batches, JacobianKind kind,
                                         const CgOptions& cg, std::size_t num_samples,
                                         double gamma, Rng rng, int passes = 1) {
  ProjectionState state(num_samples, gamma, rng);
  init_kernel_noise(state, spec, post.theta_hat, batches, kind, cg, passes);
  return state;
}

/// Stochastic alternating-projection update against the current batch:
/// eps_ker <- P_t(sqrt(gamma) eps_ker + sqrt(1-gamma) eta), eta ~ N(0, I)
/// fresh per call and per sample. gamma = 1 is the plain projection
/// recursion; gamma = 0 forgets the previous state entirely.
inline void step_kernel_noise(ProjectionState& state, const LinearMap& j_t,
                              const CgOptions& cg) {
  const double keep = std::sqrt(state.gamma);
  const double inject = std::sqrt(1.0 - state.gamma);
  for (std::size_t s = 0; s < state.samples(); ++s) {
    Vector mix;
    if (keep == 1.0) {
      mix = state.eps_ker[s];
    } else {
      mix = state.rng.normal_vector(state.eps_ker[s].size());
      scale(mix, inject);
      if (keep != 0.0) axpy(keep, state.eps_ker[s], mix);
    }
    state.eps_ker[s] = kernel_project(j_t, mix, cg).eps_ker;
    state.hutch[s] = dot(mix, state.eps_ker[s]);
  }
}

/// theta^(s) = theta_hat + sigma_ker eps_ker + sigma_im eps_im with
/// eps_im = eps0 - eps_ker (the epoch-initial draw, as written). Exact-zero
/// sigmas skip their term so the degenerate posterior returns theta_hat
/// bit-for-bit.
inline PosteriorSample draw_sample(const Posterior& post, const ProjectionState& state,
                                   std::size_t s) {
  require(s < state.samples(), "draw_sample: sample index out of range");
  PosteriorSample out;
  out.eps_ker = state.eps_ker[s];
  out.eps_im = sub(state.eps0[s], state.eps_ker[s]);
  out.theta = post.theta_hat;
  const double sk = post.sigma_ker();
  const double si = post.sigma_im();
  if (sk != 0.0) axpy(sk, out.eps_ker, out.theta);
  if (si != 0.0) axpy(si, out.eps_im, out.theta);
  return out;
}

/// Hutchinson estimate of the kernel dimension from (eps0, eps_ker) pairs,
/// clamped to [0, D]. The result is a constant input to the KL; nothing
/// differentiates through it.
inline RankEstimate estimate_rank(const std::vector<Vector>& eps0,
                                  const std::vector<Vector>& eps_ker, std::size_t dim) {
  require(!eps0.empty() && eps0.size() == eps_ker.size(),
          "estimate_rank: need matching, non-empty (eps0, eps_ker) pairs");
  double acc = 0.0;
  for (std::size_t s = 0; s < eps0.size(); ++s) acc += dot(eps0[s], eps_ker[s]);
  RankEstimate est;
  est.samples = eps0.size();
  est.r_hat = acc / static_cast<double>(eps0.size());
  if (est.r_hat < 0.0) est.r_hat = 0.0;
  if (est.r_hat > static_cast<double>(dim)) est.r_hat = static_cast<double>(dim);
  return est;
}

/// Running estimate from the state's latest projection pairs.
inline RankEstimate estimate_rank(const ProjectionState& state, std::size_t dim) {
  double acc = 0.0;
  for (double h : state.hutch) acc += h;
  RankEstimate est;
  est.samples = state.samples();
  est.r_hat = acc / static_cast<double>(state.samples());
  if (est.r_hat < 0.0) est.r_hat = 0.0;
  if (est.r_hat > static_cast<double>(dim)) est.r_hat = static_cast<double>(dim);
  return est;
}

/// Closed-form KL(q || prior) for the two-eigenvalue covariance: R
/// eigenvalues sigma_ker^2 and D-R eigenvalues sigma_im^2, prior
/// N(0, alpha^-1 I). R is held constant.
inline double kl_value(double alpha, double sigma_ker, double sigma_im, double theta_sq_norm,
                       double r, double d) {
  require(r >= 0.0 && r <= d, "kl: rank estimate outside [0, D]");
  const double trace_sigma =
      sigma_ker * sigma_ker * r + sigma_im * sigma_im * (d - r);
  const double logdet_sigma = (r != 0.0 ? 2.0 * r * std::log(sigma_ker) : 0.0) +
                              (d - r != 0.0 ? 2.0 * (d - r) * std::log(sigma_im) : 0.0);
  return 0.5 * (alpha * trace_sigma - d + alpha * theta_sq_norm - d * std::log(alpha) -
                logdet_sigma);
}

inline double kl(const Posterior& post, double r, std::size_t d) {
  require(d == post.dim(), "kl: D must equal the posterior dimension");
  return kl_value(post.alpha(), post.sigma_ker(), post.sigma_im(), dot(post.theta_hat, post.theta_hat),
                  r, static_cast<double>(d));
}

/// Partial derivatives of the KL in the optimization variables
/// (theta_hat, log alpha, log sigma_im) under the sigma_ker^2 = 1/alpha tie,
/// with R stopped. d/d theta_hat is exactly alpha * theta_hat.
struct KlGrads {
  Vector d_theta;
  double d_log_alpha = 0.0;
  double d_log_sigma_im = 0.0;
};

inline KlGrads kl_grads(const Posterior& post, double r) {
  const double d = static_cast<double>(post.dim());
  require(r >= 0.0 && r <= d, "kl_grads: rank estimate outside [0, D]");
  const double a = post.log_alpha;
  const double b = post.log_sigma_im;
  const double ratio = std::exp(a + 2.0 * b);  // alpha * sigma_im^2
  KlGrads g;
  g.d_theta = scaled(post.theta_hat, post.alpha());
  g.d_log_alpha =
      0.5 * (ratio * (d - r) + post.alpha() * dot(post.theta_hat, post.theta_hat) - d + r);
  g.d_log_sigma_im = (d - r) * (ratio - 1.0);
  return g;
}

/// Monte Carlo beta-ELBO on one mini-batch, at full-dataset scale:
/// (N_total / B) * sum_i mean_s log p(y_i | theta^(s), x_i) - beta * KL.
inline double elbo_estimate(const ModelSpec& spec, const Posterior& post,
                            const std::vector<PosteriorSample>& samples, const Batch& batch,
                            double r, double beta, std::size_t n_total) {
  require(!samples.empty(), "elbo_estimate: need at least one posterior sample");
  const std::size_t b = batch.size();
  double loglik = 0.0;
  for (const PosteriorSample& s : samples) {
    const Vector losses = per_datum_losses(spec, s.theta, batch);
    for (double v : losses) loglik -= v;
  }
  loglik *= static_cast<double>(n_total) /
            (static_cast<double>(b) * static_cast<double>(samples.size()));
  if (beta == 0.0) return loglik;
  return loglik - beta * kl(post, r, post.dim());
}

}  // namespace viking
