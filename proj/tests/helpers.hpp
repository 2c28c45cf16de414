/// Shared test utilities: finite-difference oracles, dense reference
/// routines, and random problem generators. Everything here is independent
/// of the library's matrix-free solve path on purpose.

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "viking/core.hpp"
#include "viking/net.hpp"

namespace testutil {

using viking::Batch;
using viking::Matrix;
using viking::ModelSpec;
using viking::Rng;
using viking::Vector;

/// Central finite differences of a scalar function of a parameter vector.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& at,
                          double h = 1e-5) {
  Vector g(at.size());
  Vector x = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double max_abs_diff(const Vector& a, const Vector& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double rel_error(const Vector& got, const Vector& want) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    num += (got[i] - want[i]) * (got[i] - want[i]);
    den += want[i] * want[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

/// Dense Gaussian elimination with partial pivoting; the oracle for small
/// SPD solves.
inline Vector dense_solve(Matrix a, Vector b) {
  const std::size_t n = a.rows;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
      std::swap(b[k], b[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      for (std::size_t j = k; j < n; ++j) a(i, j) -= f * a(k, j);
      b[i] -= f * b[k];
    }
  }
  Vector x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
    x[i] = s / a(i, i);
  }
  return x;
}

/// Cholesky log-determinant of an SPD matrix (oracle for the dense KL).
inline double cholesky_logdet(Matrix a) {
  const std::size_t n = a.rows;
  double logdet = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    const double l = std::sqrt(d);
    logdet += 2.0 * std::log(l);
    a(j, j) = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / l;
    }
  }
  return logdet;
}

/// Random matrix with i.i.d. standard normal entries.
inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = rng.normal();
  return m;
}

/// Orthonormal columns via modified Gram-Schmidt on a Gaussian draw.
inline Matrix random_orthonormal(std::size_t dim, std::size_t count, Rng& rng) {
  Matrix q(dim, count);
  for (std::size_t c = 0; c < count; ++c) {
    Vector v = rng.normal_vector(dim);
    for (std::size_t p = 0; p < c; ++p) {
      double proj = 0.0;
      for (std::size_t i = 0; i < dim; ++i) proj += v[i] * q(i, p);
      for (std::size_t i = 0; i < dim; ++i) v[i] -= proj * q(i, p);
    }
    const double nrm = viking::norm2(v);
    for (std::size_t i = 0; i < dim; ++i) q(i, c) = v[i] / nrm;
  }
  return q;
}

/// Projector U U^T from orthonormal columns.
inline Matrix projector_from_basis(const Matrix& u) {
  Matrix p(u.rows, u.rows);
  for (std::size_t i = 0; i < u.rows; ++i)
    for (std::size_t j = 0; j < u.rows; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < u.cols; ++k) s += u(i, k) * u(j, k);
      p(i, j) = s;
    }
  return p;
}

/// Small random model + matching batch for gradient and projection checks.
struct RandomInstance {
  ModelSpec spec;
  Vector params;
  Batch batch;
};

inline RandomInstance random_instance(Rng& rng, bool categorical, std::size_t max_hidden = 8,
                                      std::size_t max_batch = 6) {
  RandomInstance inst;
  const std::size_t in = 1 + rng.below(3);
  const std::size_t hidden = 2 + rng.below(max_hidden - 1);
  const std::size_t out = categorical ? 2 + rng.below(3) : 1 + rng.below(2);
  inst.spec.layer_sizes = {in, hidden, out};
  const int act = static_cast<int>(rng.below(3));
  inst.spec.activation = act == 0   ? viking::Activation::Tanh
                         : act == 1 ? viking::Activation::Relu
                                    : viking::Activation::Elu;
  inst.spec.loss =
      categorical ? viking::LossKind::Categorical : viking::LossKind::GaussianRegression;
  inst.spec.obs_noise = categorical ? 1.0 : 0.5 + rng.uniform();
  inst.params = rng.normal_vector(inst.spec.param_count());
  viking::scale(inst.params, 0.7);

  const std::size_t b = 1 + rng.below(max_batch);
  inst.batch.inputs = random_matrix(b, in, rng);
  if (categorical) {
    inst.batch.labels.resize(b);
    for (std::size_t i = 0; i < b; ++i)
      inst.batch.labels[i] = static_cast<int>(rng.below(out));
  } else {
    inst.batch.targets = random_matrix(b, out, rng);
  }
  return inst;
}

}  // namespace testutil
