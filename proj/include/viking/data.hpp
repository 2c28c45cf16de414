/// \file data.hpp
/// \brief Dataset construction and loading: the gapped-sinusoid regression
///        toy, a two-class Gaussian-blobs toy, numeric CSV, and IDX files.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "viking/core.hpp"
#include "viking/net.hpp"

namespace viking {

struct SplitSpec {
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
  bool standardize = true;

  void validate() const {
    require(train_fraction > 0.0 && train_fraction <= 1.0,
            "split: train_fraction must lie in (0, 1]");
  }
};

/// Per-column affine transform fitted on the training split and applied to
/// both splits. Columns with (near-)zero spread are guarded by epsilon.
struct Standardizer {
  Vector mean;
  Vector stddev;

  static Standardizer fit(const Matrix& m) {
    Standardizer st;
    st.mean.assign(m.cols, 0.0);
    st.stddev.assign(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i)
      for (std::size_t j = 0; j < m.cols; ++j) st.mean[j] += m(i, j);
    for (double& v : st.mean) v /= static_cast<double>(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
      for (std::size_t j = 0; j < m.cols; ++j) {
        const double d = m(i, j) - st.mean[j];
        st.stddev[j] += d * d;
      }
    for (double& v : st.stddev) v = std::sqrt(v / static_cast<double>(m.rows));
    return st;
  }

  void apply(Matrix& m) const {
    for (std::size_t i = 0; i < m.rows; ++i)
      for (std::size_t j = 0; j < m.cols; ++j)
        m(i, j) = (m(i, j) - mean[j]) / (stddev[j] + 1e-12);
  }

  void invert(Matrix& m) const {
    for (std::size_t i = 0; i < m.rows; ++i)
      for (std::size_t j = 0; j < m.cols; ++j)
        m(i, j) = m(i, j) * (stddev[j] + 1e-12) + mean[j];
  }
};

struct SinusoidData {
  Batch train;    ///< 10 points: indices 0-4 and 15-19 of the 20-point lattice
  Vector grid_x;  ///< 200-point evaluation grid over [0.25, 0.75]
};

/// y = 5 sin(10 x) + N(0, s^2) on 20 equally spaced x in [0.35, 0.65],
/// keeping only the first and last five points, which leaves a central gap.
inline SinusoidData make_sinusoid(double noise_std, std::uint64_t seed) {
  require(noise_std >= 1e-3 && noise_std <= 1.0,
          "make_sinusoid: noise std must lie in [1e-3, 1]");
  Rng rng(seed);
  SinusoidData data;
  data.train.inputs = Matrix(10, 1);
  data.train.targets = Matrix(10, 1);
  std::size_t row = 0;
  for (int i = 0; i < 20; ++i) {
    const double x = 0.35 + (0.65 - 0.35) * static_cast<double>(i) / 19.0;
    const double y = 5.0 * std::sin(10.0 * x) + noise_std * rng.normal();
    if (i <= 4 || i >= 15) {
      data.train.inputs(row, 0) = x;
      data.train.targets(row, 0) = y;
      ++row;
    }
  }
  data.grid_x.resize(200);
  for (int i = 0; i < 200; ++i)
    data.grid_x[static_cast<std::size_t>(i)] =
        0.25 + (0.75 - 0.25) * static_cast<double>(i) / 199.0;
  return data;
}

/// Two overlapping Gaussian classes at (+-separation/2, 0, ...) in dim
/// dimensions. The desk-scale classification toy.
inline Batch make_blobs(std::size_t points_per_class, std::size_t dim, double separation,
                        double spread, std::uint64_t seed) {
  require(points_per_class >= 1 && dim >= 1, "make_blobs: need points and dimensions");
  require(spread > 0.0, "make_blobs: spread must be positive");
  Rng rng(seed);
  const std::size_t n = 2 * points_per_class;
  Batch batch;
  batch.inputs = Matrix(n, dim);
  batch.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = i < points_per_class ? 0 : 1;
    batch.labels[i] = label;
    batch.inputs(i, 0) =
        (label == 0 ? -0.5 : 0.5) * separation + spread * rng.normal();
    for (std::size_t j = 1; j < dim; ++j) batch.inputs(i, j) = spread * rng.normal();
  }
  // Interleave classes so contiguous mini-batches stay class-balanced.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  Batch shuffled;
  shuffled.inputs = Matrix(n, dim);
  shuffled.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    shuffled.inputs.set_row(i, batch.inputs.row(order[i]));
    shuffled.labels[i] = batch.labels[order[i]];
  }
  return shuffled;
}

struct DataSplit {
  Batch train;
  Batch val;
  Standardizer standardizer;  ///< fitted on the training split
};

namespace detail {

inline DataSplit split_and_standardize(Matrix inputs, Matrix targets, std::vector<int> labels,
                                       const SplitSpec& split) {
  split.validate();
  const std::size_t n = inputs.rows;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(split.seed);
  rng.shuffle(order);
  std::size_t n_train = static_cast<std::size_t>(split.train_fraction * static_cast<double>(n));
  if (n_train == 0) n_train = 1;
  if (n_train > n) n_train = n;

  DataSplit out;
  auto take = [&](std::size_t begin, std::size_t end, Batch& dst) {
    const std::size_t m = end - begin;
    dst.inputs = Matrix(m, inputs.cols);
    if (targets.cols > 0) dst.targets = Matrix(m, targets.cols);
    if (!labels.empty()) dst.labels.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t src = order[begin + i];
      dst.inputs.set_row(i, inputs.row(src));
      if (targets.cols > 0) dst.targets.set_row(i, targets.row(src));
      if (!labels.empty()) dst.labels[i] = labels[src];
    }
  };
  take(0, n_train, out.train);
  take(n_train, n, out.val);
  if (split.standardize) {
    out.standardizer = Standardizer::fit(out.train.inputs);
    out.standardizer.apply(out.train.inputs);
    if (out.val.inputs.rows > 0) out.standardizer.apply(out.val.inputs);
  }
  return out;
}

}  // namespace detail

/// Numeric CSV with a header row; the named column becomes the target
/// (label for categorical use, real value otherwise). Seeded shuffle split;
/// standardization uses training-split statistics for both splits.
inline DataSplit load_csv(const std::string& path, const std::string& target_column,
                          const SplitSpec& split, bool categorical_target) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file " + path);

  auto split_fields = [](const std::string& s) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : s) {
      if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur += c;
      }
    }
    fields.push_back(cur);
    return fields;
  };

  const std::vector<std::string> header = split_fields(line);
  std::size_t target_idx = header.size();
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == target_column) target_idx = i;
  if (target_idx == header.size())
    throw std::runtime_error("load_csv: target column '" + target_column + "' not in header");

  std::vector<Vector> rows;
  std::vector<double> targets;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != header.size())
      throw std::runtime_error("load_csv: wrong field count at line " + std::to_string(line_no));
    Vector row;
    row.reserve(fields.size() - 1);
    for (std::size_t i = 0; i < fields.size(); ++i) {
      double value;
      try {
        std::size_t used = 0;
        value = std::stod(fields[i], &used);
        if (used != fields[i].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw std::runtime_error("load_csv: non-numeric field at line " +
                                 std::to_string(line_no) + ", column " + header[i]);
      }
      if (i == target_idx)
        targets.push_back(value);
      else
        row.push_back(value);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("load_csv: no data rows in " + path);

  Matrix inputs(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) inputs.set_row(i, rows[i]);
  Matrix target_mat;
  std::vector<int> labels;
  if (categorical_target) {
    labels.resize(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) labels[i] = static_cast<int>(targets[i]);
  } else {
    target_mat = Matrix(targets.size(), 1);
    for (std::size_t i = 0; i < targets.size(); ++i) target_mat(i, 0) = targets[i];
  }
  return detail::split_and_standardize(std::move(inputs), std::move(target_mat),
                                       std::move(labels), split);
}

namespace detail {

inline std::uint32_t read_be_u32(std::istream& in, const std::string& what) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw std::runtime_error("load_idx: truncated file while reading " + what);
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

}  // namespace detail

/// IDX image/label pair (big-endian, magics 0x00000803 / 0x00000801).
/// Pixels are scaled to [0, 1] before the optional standardization.
inline DataSplit load_idx(const std::string& images_path, const std::string& labels_path,
                          const SplitSpec& split) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("load_idx: cannot open " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("load_idx: cannot open " + labels_path);

  const std::uint32_t img_magic = detail::read_be_u32(img, "image magic");
  if (img_magic != 0x00000803u)
    throw std::runtime_error("load_idx: bad image magic (expected 0x00000803)");
  const std::uint32_t n_images = detail::read_be_u32(img, "image count");
  const std::uint32_t rows = detail::read_be_u32(img, "image rows");
  const std::uint32_t cols = detail::read_be_u32(img, "image cols");

  const std::uint32_t lab_magic = detail::read_be_u32(lab, "label magic");
  if (lab_magic != 0x00000801u)
    throw std::runtime_error("load_idx: bad label magic (expected 0x00000801)");
  const std::uint32_t n_labels = detail::read_be_u32(lab, "label count");
  if (n_images != n_labels)
    throw std::runtime_error("load_idx: image count " + std::to_string(n_images) +
                             " does not match label count " + std::to_string(n_labels));
  if (n_images == 0) throw std::runtime_error("load_idx: empty dataset");

  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  Matrix inputs(n_images, pixels);
  std::vector<unsigned char> buf(pixels);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels));
    if (!img) throw std::runtime_error("load_idx: truncated pixel data at image " +
                                       std::to_string(i));
    for (std::size_t j = 0; j < pixels; ++j)
      inputs(i, j) = static_cast<double>(buf[j]) / 255.0;
  }
  std::vector<int> labels(n_images);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    const int c = lab.get();
    if (c < 0)
      throw std::runtime_error("load_idx: truncated label data at label " + std::to_string(i));
    labels[i] = c;
  }
  return detail::split_and_standardize(std::move(inputs), Matrix(), std::move(labels), split);
}

/// Fixed partition into contiguous mini-batches (no per-epoch reshuffle;
/// any shuffling happens once at split time).
inline std::vector<Batch> make_batches(const Batch& data, std::size_t batch_size) {
  require(batch_size >= 1, "make_batches: batch size must be positive");
  std::vector<Batch> batches;
  const std::size_t n = data.size();
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    Batch b;
    b.inputs = Matrix(end - start, data.inputs.cols);
    if (data.targets.cols > 0) b.targets = Matrix(end - start, data.targets.cols);
    if (!data.labels.empty()) b.labels.resize(end - start);
    for (std::size_t i = start; i < end; ++i) {
      b.inputs.set_row(i - start, data.inputs.row(i));
      if (data.targets.cols > 0) b.targets.set_row(i - start, data.targets.row(i));
      if (!data.labels.empty()) b.labels[i - start] = data.labels[i];
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace viking
