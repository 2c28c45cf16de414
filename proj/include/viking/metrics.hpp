/// \file metrics.hpp
/// \brief Evaluation metrics: accuracy/confidence/NLL, calibration (ECE,
///        MCE), max-softmax-variance OOD scoring, AUROC, and regression
///        predictive bands.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

#include "viking/core.hpp"

namespace viking {

/// Per-sample predictive outputs: one (N x C) probability matrix (or
/// (N x out-dim) regression output) per posterior sample.
struct PredictiveBatch {
  std::vector<Matrix> per_sample;
  std::vector<int> labels;  ///< classification truth
  Matrix targets;           ///< regression truth

  std::size_t samples() const { return per_sample.size(); }
  std::size_t points() const { return per_sample.empty() ? 0 : per_sample[0].rows; }
};

/// Arithmetic mean over the sample axis; rows remain simplex points.
inline Matrix mean_predictive(const PredictiveBatch& batch) {
  require(batch.samples() >= 1, "mean_predictive: need at least one sample");
  Matrix mean = batch.per_sample[0];
  for (std::size_t s = 1; s < batch.samples(); ++s)
    for (std::size_t i = 0; i < mean.data.size(); ++i)
      mean.data[i] += batch.per_sample[s].data[i];
  const double inv = 1.0 / static_cast<double>(batch.samples());
  for (double& v : mean.data) v *= inv;
  return mean;
}

struct ClassificationMetrics {
  double accuracy = 0.0;
  double confidence = 0.0;  ///< mean max probability
  double nll = 0.0;         ///< mean -log p(true class), floored at 1e-12
};

inline ClassificationMetrics classification_metrics(const Matrix& mean_probs,
                                                    const std::vector<int>& labels) {
  require(mean_probs.rows == labels.size() && mean_probs.rows > 0,
          "classification_metrics: probability rows must match labels");
  ClassificationMetrics m;
  for (std::size_t i = 0; i < mean_probs.rows; ++i) {
    std::size_t arg = 0;
    double best = mean_probs(i, 0);
    for (std::size_t c = 1; c < mean_probs.cols; ++c)
      if (mean_probs(i, c) > best) {
        best = mean_probs(i, c);
        arg = c;
      }
    if (arg == static_cast<std::size_t>(labels[i])) m.accuracy += 1.0;
    m.confidence += best;
    m.nll -= std::log(std::max(mean_probs(i, static_cast<std::size_t>(labels[i])), 1e-12));
  }
  const double n = static_cast<double>(mean_probs.rows);
  m.accuracy /= n;
  m.confidence /= n;
  m.nll /= n;
  return m;
}

struct CalibrationMetrics {
  double ece = 0.0;
  double mce = 0.0;
};

/// Equal-width confidence bins over [0, 1] on the max probability.
/// ECE is the count-weighted mean |accuracy - confidence| per bin; MCE the
/// maximum over non-empty bins.
inline CalibrationMetrics calibration(const Matrix& mean_probs, const std::vector<int>& labels,
                                      std::size_t bins = 15) {
  require(bins >= 1, "calibration: need at least one bin");
  require(mean_probs.rows == labels.size() && mean_probs.rows > 0,
          "calibration: probability rows must match labels");
  std::vector<std::size_t> count(bins, 0);
  std::vector<double> conf_sum(bins, 0.0), acc_sum(bins, 0.0);
  for (std::size_t i = 0; i < mean_probs.rows; ++i) {
    std::size_t arg = 0;
    double best = mean_probs(i, 0);
    for (std::size_t c = 1; c < mean_probs.cols; ++c)
      if (mean_probs(i, c) > best) {
        best = mean_probs(i, c);
        arg = c;
      }
    std::size_t b = static_cast<std::size_t>(best * static_cast<double>(bins));
    if (b >= bins) b = bins - 1;  // confidence exactly 1.0
    ++count[b];
    conf_sum[b] += best;
    if (arg == static_cast<std::size_t>(labels[i])) acc_sum[b] += 1.0;
  }
  CalibrationMetrics m;
  const double n = static_cast<double>(mean_probs.rows);
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    const double cb = static_cast<double>(count[b]);
    const double gap = std::abs(acc_sum[b] / cb - conf_sum[b] / cb);
    m.ece += (cb / n) * gap;
    m.mce = std::max(m.mce, gap);
  }
  return m;
}

/// Max over classes of the population variance (divisor S) of the softmax
/// probability across posterior samples, for a single input.
/// sample_probs is S x C.
inline double ood_score(const Matrix& sample_probs) {
  require(sample_probs.rows >= 2, "ood_score: need at least two samples");
  double best = 0.0;
  const double inv_s = 1.0 / static_cast<double>(sample_probs.rows);
  for (std::size_t c = 0; c < sample_probs.cols; ++c) {
    double mean = 0.0;
    for (std::size_t s = 0; s < sample_probs.rows; ++s) mean += sample_probs(s, c);
    mean *= inv_s;
    double var = 0.0;
    for (std::size_t s = 0; s < sample_probs.rows; ++s) {
      const double d = sample_probs(s, c) - mean;
      var += d * d;
    }
    var *= inv_s;
    best = std::max(best, var);
  }
  return best;
}

/// Probability that a random OOD score exceeds a random in-distribution
/// score, ties counted one half (rank-sum formulation).
inline double auroc(const std::vector<double>& in_scores,
                    const std::vector<double>& ood_scores) {
  require(!in_scores.empty() && !ood_scores.empty(), "auroc: both score sets must be non-empty");
  struct Entry {
    double score;
    bool is_ood;
  };
  std::vector<Entry> all;
  all.reserve(in_scores.size() + ood_scores.size());
  for (double s : in_scores) all.push_back({s, false});
  for (double s : ood_scores) all.push_back({s, true});
  std::sort(all.begin(), all.end(),
            [](const Entry& a, const Entry& b) { return a.score < b.score; });

  // Average ranks within tie groups, then the Mann-Whitney statistic.
  double rank_sum_ood = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j + 1 < all.size() && all[j + 1].score == all[i].score) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k)
      if (all[k].is_ood) rank_sum_ood += avg_rank;
    i = j + 1;
  }
  const double m = static_cast<double>(ood_scores.size());
  const double n = static_cast<double>(in_scores.size());
  const double u = rank_sum_ood - m * (m + 1.0) / 2.0;
  return u / (m * n);
}

struct Bands {
  Vector mean;
  Vector stddev;  ///< sample standard deviation, divisor S-1
};

/// Pointwise mean and sample std across posterior samples; outputs is S x N.
inline Bands regression_bands(const Matrix& outputs) {
  require(outputs.rows >= 2, "regression_bands: need at least two samples");
  Bands b;
  b.mean.assign(outputs.cols, 0.0);
  b.stddev.assign(outputs.cols, 0.0);
  const double s = static_cast<double>(outputs.rows);
  for (std::size_t j = 0; j < outputs.cols; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < outputs.rows; ++i) mean += outputs(i, j);
    mean /= s;
    double var = 0.0;
    for (std::size_t i = 0; i < outputs.rows; ++i) {
      const double d = outputs(i, j) - mean;
      var += d * d;
    }
    b.mean[j] = mean;
    b.stddev[j] = std::sqrt(var / (s - 1.0));
  }
  return b;
}

}  // namespace viking
