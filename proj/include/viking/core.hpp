/// \file core.hpp
/// \brief Dense vector/matrix primitives and the deterministic RNG used
///        throughout the library.
///
/// Everything is float64. Vectors are plain std::vector<double>; Matrix is a
/// row-major dense block. These are deliberately minimal: the library works
/// at desk scale (D up to ~1e5) and favors reproducibility over throughput.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace viking {

using Vector = std::vector<double>;

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

/// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  Vector row(std::size_t i) const {
    return Vector(data.begin() + static_cast<std::ptrdiff_t>(i * cols),
                  data.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols));
  }
  void set_row(std::size_t i, const Vector& v) {
    for (std::size_t j = 0; j < cols; ++j) data[i * cols + j] = v[j];
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

inline double dot(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vector& a) { return std::sqrt(dot(a, a)); }

/// y += alpha * x
inline void axpy(double alpha, const Vector& x, Vector& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(Vector& x, double alpha) {
  for (double& v : x) v *= alpha;
}

inline Vector scaled(const Vector& x, double alpha) {
  Vector y(x);
  scale(y, alpha);
  return y;
}

inline Vector add(const Vector& a, const Vector& b) {
  Vector c(a);
  for (std::size_t i = 0; i < b.size(); ++i) c[i] += b[i];
  return c;
}

inline Vector sub(const Vector& a, const Vector& b) {
  Vector c(a);
  for (std::size_t i = 0; i < b.size(); ++i) c[i] -= b[i];
  return c;
}

inline bool all_finite(const Vector& a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

/// y = M x
inline Vector matvec(const Matrix& m, const Vector& x) {
  Vector y(m.rows, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double s = 0.0;
    const double* row = &m.data[i * m.cols];
    for (std::size_t j = 0; j < m.cols; ++j) s += row[j] * x[j];
    y[i] = s;
  }
  return y;
}

/// y = M^T x
inline Vector matvec_t(const Matrix& m, const Vector& x) {
  Vector y(m.cols, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double* row = &m.data[i * m.cols];
    for (std::size_t j = 0; j < m.cols; ++j) y[j] += row[j] * x[i];
  }
  return y;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols == b.rows, "matmul: inner dimensions differ");
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

inline Matrix transposed(const Matrix& m) {
  Matrix t(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
  return t;
}

/// Deterministic random stream. The mt19937_64 engine is bit-exact by
/// standard; normal draws use our own Box-Muller so the full sequence is
/// reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  Vector normal_vector(std::size_t n) {
    Vector v(n);
    for (double& x : v) x = normal();
    return v;
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

  /// In-place Fisher-Yates shuffle (stable across standard libraries).
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace viking
