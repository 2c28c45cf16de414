/// \file linalg.hpp
/// \brief Matrix-free linear operators, conjugate gradients with full
///        reorthogonalization, and kernel projection via constrained least
///        squares.
///
/// The projection of a vector eps onto the null space of a rectangular
/// operator J is computed without ever forming J^T J: solve
/// (J J^T) lambda = J eps by CG on the N x N Gram map, then
/// eps_ker = eps - J^T lambda. Plain CG on these systems loses orthogonality
/// of the residuals long before convergence, which shows up as kernel and
/// image components that fail to be orthogonal; re-orthogonalizing each new
/// residual against all stored ones keeps the split clean at the cost of
/// O(iters * N) extra memory.

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "viking/core.hpp"
#include "viking/net.hpp"

namespace viking {

/// Abstract rectangular operator: apply is v -> J v (R^D -> R^N),
/// apply_transpose is u -> J^T u. Implementations must be adjoint-consistent
/// and safe for concurrent const calls.
class LinearMap {
 public:
  virtual ~LinearMap() = default;
  virtual std::size_t rows() const = 0;
  virtual std::size_t cols() const = 0;
  virtual Vector apply(const Vector& v) const = 0;
  virtual Vector apply_transpose(const Vector& u) const = 0;
};

/// Dense row block behind the LinearMap interface. Per-datum gradient
/// stacks are materialized into one of these at desk scale; callers only
/// ever see the operator surface.
class DenseMap final : public LinearMap {
 public:
  explicit DenseMap(Matrix m) : m_(std::move(m)) {}

  std::size_t rows() const override { return m_.rows; }
  std::size_t cols() const override { return m_.cols; }
  Vector apply(const Vector& v) const override { return matvec(m_, v); }
  Vector apply_transpose(const Vector& u) const override { return matvec_t(m_, u); }

  const Matrix& matrix() const { return m_; }

 private:
  Matrix m_;
};

enum class JacobianKind { Loss, ModelOutput };

inline const char* to_string(JacobianKind k) {
  return k == JacobianKind::Loss ? "loss" : "model-output";
}

/// Builds the per-batch row stack whose kernel the posterior lives in:
/// per-datum log-likelihood gradients (Loss) or per-datum model-output
/// Jacobian rows (ModelOutput).
inline DenseMap build_jacobian(const ModelSpec& spec, const Vector& params, const Batch& batch,
                               JacobianKind kind) {
  if (kind == JacobianKind::Loss)
    return DenseMap(per_datum_grads(spec, params, batch));
  return DenseMap(model_output_jacobian(spec, params, batch.inputs));
}

struct CgReport {
  std::size_t iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
  bool stalled = false;  ///< residual stopped decreasing on a singular system
};

struct CgOptions {
  std::size_t max_iter = 10;
  double tol = 1e-6;
  bool reorthogonalize = true;
  /// Extra projection passes inside kernel_project; each pass re-solves the
  /// Gram system against the current residual. Zero keeps one solve per
  /// projection.
  std::size_t refine_rounds = 0;
};

/// CG on a symmetric PSD map. With reorthogonalize set, every new residual
/// is explicitly re-orthogonalized (two Gram-Schmidt passes) against all
/// stored previous residual directions. Debug builds probe the map for
/// symmetry once per solve.
inline std::pair<Vector, CgReport> cg_solve(
    const std::function<Vector(const Vector&)>& gram, const Vector& b,
    const CgOptions& opts = {}) {
  require(all_finite(b), "cg_solve: right-hand side must be finite");
  const std::size_t n = b.size();
  const double nb = norm2(b);
#ifndef NDEBUG
  if (n > 0 && nb > 0.0) {
    Rng probe_rng(0x5ca1ab1e ^ n);
    const Vector u = probe_rng.normal_vector(n);
    const Vector v = probe_rng.normal_vector(n);
    const Vector au = gram(u);
    const Vector av = gram(v);
    const double scale = std::max({1.0, std::abs(dot(u, av)), std::abs(dot(au, v))});
    require(std::abs(dot(u, av) - dot(au, v)) <= 1e-8 * scale,
            "cg_solve: map failed the symmetry probe");
  }
#endif
  CgReport report;
  Vector x(n, 0.0);
  if (nb == 0.0) {
    report.converged = true;
    return {x, report};
  }

  Vector r = b;
  Vector p = r;
  double rs_old = dot(r, r);
  std::vector<Vector> basis;
  if (opts.reorthogonalize) basis.push_back(scaled(r, 1.0 / nb));
  double op_scale = 0.0;  // running ||A|| estimate from the applied products

  for (std::size_t k = 0; k < opts.max_iter; ++k) {
    const Vector ap = gram(p);
    const double p_p = dot(p, p);
    const double p_ap = dot(p, ap);
    if (!std::isfinite(p_ap))
      throw std::runtime_error("cg_solve: numerical breakdown at iteration " +
                               std::to_string(k));
    if (p_p > 0.0) op_scale = std::max(op_scale, std::sqrt(dot(ap, ap) / p_p));
    // A search direction whose Rayleigh quotient sits at the round-off floor
    // of ||A|| is numerically null; stepping along it only amplifies noise.
    if (p_ap <= 32.0 * 2.220446049250313e-16 * op_scale * p_p) {
      report.stalled = true;
      break;
    }
    const double alpha = rs_old / p_ap;
    axpy(alpha, p, x);
    axpy(-alpha, ap, r);
    if (opts.reorthogonalize) {
      for (int pass = 0; pass < 2; ++pass)
        for (const Vector& q : basis) axpy(-dot(r, q), q, r);
    }
    const double rs_new = dot(r, r);
    if (!std::isfinite(rs_new))
      throw std::runtime_error("cg_solve: numerical breakdown at iteration " +
                               std::to_string(k));
    report.iterations = k + 1;
    if (std::sqrt(rs_new) <= opts.tol * nb) break;
    if (opts.reorthogonalize) {
      const double nr = std::sqrt(rs_new);
      if (nr > 0.0) basis.push_back(scaled(r, 1.0 / nr));
    }
    p = add(r, scaled(p, rs_new / rs_old));
    rs_old = rs_new;
  }

  // Report the true residual, not the recurrence's running value.
  const Vector resid = sub(gram(x), b);
  report.relative_residual = norm2(resid) / nb;
  report.converged = report.relative_residual <= opts.tol;
  if (report.converged) report.stalled = false;
  return {x, report};
}

struct ProjectionResult {
  Vector eps_ker;
  CgReport report;
};

/// Euclidean-closest point to eps in ker(J): solve (J J^T) lambda = J eps,
/// then eps_ker = eps - J^T lambda. A zero J row stack leaves eps unchanged
/// (the kernel is everything). With refine_rounds set, the same solve is
/// re-applied to the running eps_ker; the Gram residual of each round equals
/// J eps_ker, so refinement is plain iterative refinement of Eq.-17 and
/// recovers digits the squared conditioning costs a single solve. The
/// reported relative residual is ||J eps_ker|| / ||J eps||.
inline ProjectionResult kernel_project(const LinearMap& j, const Vector& eps,
                                       const CgOptions& opts = {}) {
  require(eps.size() == j.cols(), "kernel_project: eps length must equal operator cols");
  require(all_finite(eps), "kernel_project: eps must be finite");
  const double rhs0_norm = norm2(j.apply(eps));
  CgReport report;
  if (rhs0_norm == 0.0) {
    report.converged = true;
    return {eps, report};
  }
  auto gram = [&j](const Vector& v) { return j.apply(j.apply_transpose(v)); };

  Vector eps_ker = eps;
  double resid = rhs0_norm;
  for (std::size_t round = 0; round <= opts.refine_rounds; ++round) {
    const Vector rhs = round == 0 ? j.apply(eps) : j.apply(eps_ker);
    resid = norm2(rhs);
    if (resid <= opts.tol * rhs0_norm) break;
    auto [lambda, rep] = cg_solve(gram, rhs, opts);
    axpy(-1.0, j.apply_transpose(lambda), eps_ker);
    report.iterations += rep.iterations;
    report.stalled = rep.stalled;
    if (round == opts.refine_rounds) resid = norm2(j.apply(eps_ker));
  }
  report.relative_residual = resid / rhs0_norm;
  report.converged = report.relative_residual <= opts.tol;
  if (report.converged) report.stalled = false;
  return {std::move(eps_ker), report};
}

}  // namespace viking
