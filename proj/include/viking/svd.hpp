/// \file svd.hpp
/// \brief Dense one-sided Jacobi SVD and the SVD-based kernel projector.
///
/// This is the slow, trustworthy route: the matrix-free projection in
/// linalg.hpp is always checked against the projector built here from an
/// explicit singular-value decomposition. Intended for small operators
/// (D <= 2000); the Jacobi iteration is quadratic in the column count but
/// accurate to working precision.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "viking/core.hpp"

namespace viking {

struct SvdResult {
  Matrix u;  ///< m x k, orthonormal columns for nonzero singular values
  Vector s;  ///< k singular values, descending
  Matrix v;  ///< n x k, orthonormal columns
};

namespace detail {

/// One-sided Jacobi on a (m x n, m >= n) working copy: rotate column pairs
/// until all are mutually orthogonal, accumulating rotations into V.
inline SvdResult jacobi_svd_tall(const Matrix& a) {
  const std::size_t m = a.rows, n = a.cols;
  Matrix b = a;
  Matrix v = Matrix::identity(n);
  const double tol = 1e-15;
  const int max_sweeps = 60;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double bp = b(i, p), bq = b(i, q);
          app += bp * bp;
          aqq += bq * bq;
          apq += bp * bq;
        }
        if (std::abs(apq) <= tol * std::sqrt(app * aqq) || apq == 0.0) continue;
        rotated = true;
        const double zeta = (aqq - app) / (2.0 * apq);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double bp = b(i, p), bq = b(i, q);
          b(i, p) = cs * bp - sn * bq;
          b(i, q) = sn * bp + cs * bq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = cs * vp - sn * vq;
          v(i, q) = sn * vp + cs * vq;
        }
      }
    }
    if (!rotated) break;
  }

  SvdResult res;
  res.s.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    double nrm = 0.0;
    for (std::size_t i = 0; i < m; ++i) nrm += b(i, j) * b(i, j);
    res.s[j] = std::sqrt(nrm);
  }

  // Sort descending, permuting the columns of B and V along.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&res](std::size_t x, std::size_t y) { return res.s[x] > res.s[y]; });

  res.u = Matrix(m, n);
  res.v = Matrix(n, n);
  Vector sorted(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    sorted[j] = res.s[src];
    const double inv = res.s[src] > 0.0 ? 1.0 / res.s[src] : 0.0;
    for (std::size_t i = 0; i < m; ++i) res.u(i, j) = b(i, src) * inv;
    for (std::size_t i = 0; i < n; ++i) res.v(i, j) = v(i, src);
  }
  res.s = std::move(sorted);
  return res;
}

}  // namespace detail

/// Thin SVD A = U diag(s) V^T with k = min(rows, cols) columns.
inline SvdResult svd(const Matrix& a) {
  if (a.rows >= a.cols) return detail::jacobi_svd_tall(a);
  SvdResult t = detail::jacobi_svd_tall(transposed(a));
  SvdResult res;
  res.u = std::move(t.v);
  res.v = std::move(t.u);
  res.s = std::move(t.s);
  return res;
}

/// Count of singular values above cutoff_factor times the largest.
inline std::size_t numerical_rank(const Vector& s, double cutoff_factor = 1e-10) {
  if (s.empty() || s[0] <= 0.0) return 0;
  const double cutoff = cutoff_factor * s[0];
  std::size_t r = 0;
  for (double v : s)
    if (v > cutoff) ++r;
  return r;
}

/// Orthogonal projector onto ker(J), built as I minus the row-space
/// projector from the right singular vectors with nonzero singular value.
/// Idempotent and symmetric to working precision.
inline Matrix dense_kernel_projector(const Matrix& j, double cutoff_factor = 1e-10) {
  require(j.cols <= 2000, "dense_kernel_projector: oracle limited to D <= 2000");
  const std::size_t d = j.cols;
  Matrix p = Matrix::identity(d);
  const SvdResult dec = svd(j);
  const std::size_t rank = numerical_rank(dec.s, cutoff_factor);
  for (std::size_t k = 0; k < rank; ++k)
    for (std::size_t r = 0; r < d; ++r) {
      const double vr = dec.v(r, k);
      if (vr == 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) p(r, c) -= vr * dec.v(c, k);
    }
  return p;
}

}  // namespace viking
