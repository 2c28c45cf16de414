#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "viking/metrics.hpp"

using namespace viking;

namespace {

Matrix probs_from_rows(const std::vector<Vector>& rows) {
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) m.set_row(i, rows[i]);
  return m;
}

/// Random simplex rows via softmax of Gaussian logits.
Matrix random_probs(std::size_t n, std::size_t classes, Rng& rng) {
  Matrix m(n, classes);
  for (std::size_t i = 0; i < n; ++i) m.set_row(i, softmax(rng.normal_vector(classes)));
  return m;
}

/// Brute-force calibration oracle with its own binning arithmetic.
std::pair<double, double> calibration_oracle(const Matrix& probs, const std::vector<int>& labels,
                                             std::size_t bins) {
  double ece = 0.0, mce = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double lo = static_cast<double>(b) / bins;
    const double hi = static_cast<double>(b + 1) / bins;
    double conf = 0.0, acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < probs.rows; ++i) {
      std::size_t arg = 0;
      for (std::size_t c = 1; c < probs.cols; ++c)
        if (probs(i, c) > probs(i, arg)) arg = c;
      const double p = probs(i, arg);
      const bool in_bin = b + 1 == bins ? (p >= lo && p <= hi) : (p >= lo && p < hi);
      if (!in_bin) continue;
      ++count;
      conf += p;
      if (arg == static_cast<std::size_t>(labels[i])) acc += 1.0;
    }
    if (count == 0) continue;
    const double gap = std::abs(acc / count - conf / count);
    ece += gap * count / static_cast<double>(probs.rows);
    mce = std::max(mce, gap);
  }
  return {ece, mce};
}

/// O(n^2) pairwise AUROC oracle.
double auroc_oracle(const std::vector<double>& in_scores, const std::vector<double>& ood) {
  double wins = 0.0;
  for (double o : ood)
    for (double i : in_scores) {
      if (o > i)
        wins += 1.0;
      else if (o == i)
        wins += 0.5;
    }
  return wins / (static_cast<double>(ood.size()) * static_cast<double>(in_scores.size()));
}

}  // namespace

TEST_CASE("mean_predictive: identity for one sample, symmetry for two") {
  PredictiveBatch one;
  one.per_sample.push_back(probs_from_rows({{0.2, 0.8}, {0.6, 0.4}}));
  const Matrix m1 = mean_predictive(one);
  CHECK(m1.data == one.per_sample[0].data);

  PredictiveBatch two;
  two.per_sample.push_back(probs_from_rows({{1.0, 0.0}}));
  two.per_sample.push_back(probs_from_rows({{0.0, 1.0}}));
  const Matrix m2 = mean_predictive(two);
  CHECK(m2(0, 0) == doctest::Approx(0.5));
  CHECK(m2(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("mean_predictive keeps rows on the simplex") {
  Rng rng(5);
  PredictiveBatch batch;
  for (int s = 0; s < 7; ++s) batch.per_sample.push_back(random_probs(9, 4, rng));
  const Matrix mean = mean_predictive(batch);
  for (std::size_t i = 0; i < mean.rows; ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < mean.cols; ++c) {
      sum += mean(i, c);
      CHECK(mean(i, c) >= 0.0);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("classification_metrics: one-hot correct and uniform cases") {
  const Matrix onehot = probs_from_rows({{1.0, 0.0}, {0.0, 1.0}});
  const ClassificationMetrics m1 = classification_metrics(onehot, {0, 1});
  CHECK(m1.accuracy == 1.0);
  CHECK(m1.confidence == 1.0);
  CHECK(m1.nll == doctest::Approx(0.0).epsilon(1e-10));

  Matrix uniform(3, 10, 0.1);
  const ClassificationMetrics m2 = classification_metrics(uniform, {0, 5, 9});
  CHECK(m2.confidence == doctest::Approx(0.1));
  CHECK(m2.nll == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("classification_metrics: four-point hand computation") {
  const Matrix probs = probs_from_rows({{0.7, 0.2, 0.1},
                                        {0.1, 0.6, 0.3},
                                        {0.3, 0.3, 0.4},
                                        {0.25, 0.5, 0.25}});
  const std::vector<int> labels{0, 2, 2, 1};
  const ClassificationMetrics m = classification_metrics(probs, labels);
  CHECK(m.accuracy == doctest::Approx(0.75));
  CHECK(m.confidence == doctest::Approx((0.7 + 0.6 + 0.4 + 0.5) / 4.0));
  const double nll = -(std::log(0.7) + std::log(0.3) + std::log(0.4) + std::log(0.5)) / 4.0;
  CHECK(m.nll == doctest::Approx(nll).epsilon(1e-12));
}

TEST_CASE("calibration: a perfectly calibrated oracle scores zero") {
  // All predictions at confidence 0.8; exactly 8 of 10 correct.
  std::vector<Vector> rows;
  std::vector<int> labels;
  for (int i = 0; i < 10; ++i) {
    rows.push_back({0.8, 0.2});
    labels.push_back(i < 8 ? 0 : 1);
  }
  const CalibrationMetrics m = calibration(probs_from_rows(rows), labels, 15);
  CHECK(m.ece == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(m.mce == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("calibration: single-bin hand case") {
  // One bin: confidence 0.9, accuracy 0.5 -> ECE = MCE = 0.4.
  std::vector<Vector> rows;
  std::vector<int> labels;
  for (int i = 0; i < 4; ++i) {
    rows.push_back({0.9, 0.1});
    labels.push_back(i < 2 ? 0 : 1);
  }
  const CalibrationMetrics m = calibration(probs_from_rows(rows), labels, 1);
  CHECK(m.ece == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(m.mce == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("calibration matches the brute-force binning oracle") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 20 + rng.below(40);
    const std::size_t classes = 2 + rng.below(4);
    const Matrix probs = random_probs(n, classes, rng);
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(rng.below(classes));
    const std::size_t bins = 3;
    const CalibrationMetrics m = calibration(probs, labels, bins);
    const auto [ece, mce] = calibration_oracle(probs, labels, bins);
    CHECK(m.ece == doctest::Approx(ece).epsilon(1e-12));
    CHECK(m.mce == doctest::Approx(mce).epsilon(1e-12));
    CHECK(m.ece <= m.mce + 1e-15);
    CHECK(m.mce <= 1.0);
  }
}

TEST_CASE("calibration guards the degenerate inputs") {
  CHECK_THROWS_AS(calibration(Matrix(0, 2), {}, 15), std::invalid_argument);
  CHECK_THROWS_AS(calibration(Matrix(1, 2, 0.5), {0}, 0), std::invalid_argument);
}

TEST_CASE("ood_score: identical samples, two-point case, and the formula oracle") {
  Matrix same(3, 2, 0.5);
  CHECK(ood_score(same) == 0.0);

  const Matrix flip = probs_from_rows({{1.0, 0.0}, {0.0, 1.0}});
  CHECK(ood_score(flip) == doctest::Approx(0.25).epsilon(1e-12));

  Rng rng(11);
  const Matrix probs = random_probs(6, 3, rng);
  double expect = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t s = 0; s < 6; ++s) mean += probs(s, c) / 6.0;
    for (std::size_t s = 0; s < 6; ++s)
      var += (probs(s, c) - mean) * (probs(s, c) - mean) / 6.0;
    expect = std::max(expect, var);
  }
  CHECK(ood_score(probs) == doctest::Approx(expect).epsilon(1e-12));

  CHECK_THROWS_AS(ood_score(Matrix(1, 3, 0.3)), std::invalid_argument);
}

TEST_CASE("auroc: separation, exchangeability, and a tie case") {
  CHECK(auroc({0.1, 0.2, 0.3}, {0.5, 0.9}) == doctest::Approx(1.0));
  CHECK(auroc({0.4, 0.4}, {0.4, 0.4}) == doctest::Approx(0.5));

  const std::vector<double> in_s{0.1, 0.5, 0.7};
  const std::vector<double> ood{0.5, 0.8, 0.9};
  CHECK(auroc(in_s, ood) == doctest::Approx(auroc_oracle(in_s, ood)).epsilon(1e-12));
}

TEST_CASE("auroc matches the pairwise oracle on random score sets") {
  Rng rng(13);
  for (int rep = 0; rep < 25; ++rep) {
    std::vector<double> a(3 + rng.below(20)), b(3 + rng.below(20));
    for (auto& v : a) v = std::round(rng.normal() * 4.0) / 4.0;  // force ties
    for (auto& v : b) v = std::round(rng.normal() * 4.0) / 4.0;
    CHECK(auroc(a, b) == doctest::Approx(auroc_oracle(a, b)).epsilon(1e-12));
    // complement under swapped roles
    CHECK(auroc(a, b) + auroc(b, a) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("auroc is invariant under strictly increasing transforms") {
  Rng rng(17);
  std::vector<double> a(15), b(12);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal() + 0.5;
  const double base = auroc(a, b);
  auto squash = [](std::vector<double> v) {
    for (auto& x : v) x = std::tanh(x) * 3.0 + std::exp(x / 10.0);
    return v;
  };
  CHECK(auroc(squash(a), squash(b)) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("regression_bands: degenerate and two-point cases, formula oracle") {
  Matrix same(4, 3, 1.7);
  const Bands b0 = regression_bands(same);
  for (double v : b0.stddev) CHECK(v == 0.0);
  for (double v : b0.mean) CHECK(v == doctest::Approx(1.7));

  Matrix flip(2, 2);
  flip(0, 0) = 2.0;
  flip(0, 1) = -0.5;
  flip(1, 0) = -2.0;
  flip(1, 1) = 0.5;
  const Bands b1 = regression_bands(flip);
  CHECK(b1.stddev[0] == doctest::Approx(std::sqrt(2.0) * 2.0).epsilon(1e-12));
  CHECK(b1.stddev[1] == doctest::Approx(std::sqrt(2.0) * 0.5).epsilon(1e-12));

  Rng rng(19);
  Matrix outputs(6, 4);
  for (double& v : outputs.data) v = rng.normal();
  const Bands b2 = regression_bands(outputs);
  for (std::size_t j = 0; j < 4; ++j) {
    double mean = 0.0, var = 0.0;
    for (std::size_t s = 0; s < 6; ++s) mean += outputs(s, j) / 6.0;
    for (std::size_t s = 0; s < 6; ++s)
      var += (outputs(s, j) - mean) * (outputs(s, j) - mean) / 5.0;
    CHECK(b2.mean[j] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(b2.stddev[j] == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
  }
}

TEST_CASE("nll respects the elementwise lower bound from the max probability") {
  Rng rng(23);
  const Matrix probs = random_probs(30, 5, rng);
  std::vector<int> labels(30);
  for (auto& l : labels) l = static_cast<int>(rng.below(5));
  const ClassificationMetrics m = classification_metrics(probs, labels);
  double bound = 0.0;
  for (std::size_t i = 0; i < probs.rows; ++i) {
    double mx = 0.0;
    for (std::size_t c = 0; c < probs.cols; ++c) mx = std::max(mx, probs(i, c));
    bound -= std::log(mx);
  }
  bound /= probs.rows;
  CHECK(m.nll >= bound - 1e-12);
}
