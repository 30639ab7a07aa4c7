#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "dacal/error.hpp"
#include "dacal/metrics.hpp"
#include "dacal/preprocess.hpp"
#include "oracles.hpp"

using namespace dacal;

namespace {

// Two-class probability rows (p, 1 - p) with the given labels.
DenseMatrix binary_probs(const std::vector<float>& p) {
  DenseMatrix m(p.size(), 2);
  for (std::size_t i = 0; i < p.size(); ++i) {
    m(i, 0) = p[i];
    m(i, 1) = 1.0f - p[i];
  }
  return m;
}

}  // namespace

TEST(Ece, HandBinning) {
  // Confidences 0.6, 0.6, 0.9, 0.9 with correctness 1, 0, 1, 1.
  const auto p = binary_probs({0.6f, 0.6f, 0.9f, 0.9f});
  const LabelVector y({0, 1, 0, 0}, 2);
  // Equal width needs M = 10 to separate 0.6 from 0.9; equal mass splits at M = 2.
  EXPECT_NEAR(ece_equal_width(p, y, 10).ece, 0.1, 1e-7);
  EXPECT_NEAR(ece_equal_width(p, y, 2).ece, 0.0, 1e-7);
  EXPECT_NEAR(ece_equal_mass(p, y, 2).ece, 0.1, 1e-7);
}

TEST(Ece, PerfectOneHotIsZero) {
  const auto p = DenseMatrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const LabelVector y({0, 1, 2}, 3);
  EXPECT_EQ(ece_equal_width(p, y).ece, 0.0);
  EXPECT_EQ(ece_equal_mass(p, y, 3).ece, 0.0);
  EXPECT_EQ(classwise_ece(p, y).total, 0.0);
  EXPECT_EQ(brier(p, y), 0.0);
  EXPECT_EQ(nll(p, y), 0.0);
  EXPECT_EQ(accuracy(p, y), 1.0);
}

TEST(Ece, BinEdges) {
  // 0.5 sits on an edge for M = 4 and belongs to the lower bin.
  const auto p = binary_probs({0.5f});
  const auto stats = ece_equal_width(p, LabelVector({0}, 2), 4).stats;
  EXPECT_EQ(stats.bins[1].count, 1u);
  const auto zero = ece_equal_width(DenseMatrix::from_rows({{0.0f}}), LabelVector({0}, 1), 4).stats;
  EXPECT_EQ(zero.bins[0].count, 1u);
}

TEST(Ece, Errors) {
  EXPECT_THROW(ece_equal_width(DenseMatrix(0, 2), LabelVector({}, 2)), ConfigError);
  EXPECT_THROW(ece_equal_width(binary_probs({0.5f}), LabelVector({0}, 2), 0), ConfigError);
  EXPECT_THROW(ece_equal_mass(binary_probs({0.5f, 0.7f}), LabelVector({0, 1}, 2), 3), ConfigError);
}

TEST(Ece, EqualMassBinSizes) {
  std::mt19937_64 rng(41);
  const auto p = softmax_rows(oracle::random_matrix(rng, 37, 3));
  const auto stats = ece_equal_mass(p, oracle::random_labels(rng, 37, 3), 5).stats;
  std::vector<std::size_t> sizes;
  for (const auto& b : stats.bins) sizes.push_back(b.count);
  EXPECT_EQ(sizes, (std::vector<std::size_t>{8, 8, 7, 7, 7}));
}

TEST(ClasswiseEce, Examples) {
  // C = 2 perfectly calibrated: every confidence level matches its frequency.
  const auto p = binary_probs({0.5f, 0.5f});
  EXPECT_NEAR(classwise_ece(p, LabelVector({0, 1}, 2)).total, 0.0, 1e-12);
  // C = 1 is the ECE of a constant-one column.
  const DenseMatrix ones(5, 1, 1.0f);
  const LabelVector zeros({0, 0, 0, 0, 0}, 1);
  EXPECT_EQ(classwise_ece(ones, zeros).total, ece_equal_width(ones, zeros).ece);
}

TEST(Brier, UniformBinary) {
  const auto p = binary_probs({0.5f, 0.5f, 0.5f});
  EXPECT_DOUBLE_EQ(brier(p, LabelVector({0, 1, 1}, 2)), 0.5);
}

TEST(Nll, UniformAndFloor) {
  const DenseMatrix p(4, 10, 0.1f);
  EXPECT_NEAR(nll(p, LabelVector({0, 3, 5, 9}, 10)), std::log(10.0), 1e-6);
  const auto zero = DenseMatrix::from_rows({{1, 0}});
  const double v = nll(zero, LabelVector({1}, 2));
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, -std::log(1e-12), 1e-9);
}

TEST(Metrics, MatchNaiveOracles) {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> size(1, 300);
  std::uniform_int_distribution<int> classes(1, 8);
  std::uniform_int_distribution<int> bins(1, 20);
  for (int t = 0; t < 100; ++t) {
    const int c = classes(rng);
    const std::size_t n = size(rng);
    auto z = oracle::random_matrix(rng, n, c, 0.5 + t % 5);
    if (t % 4 == 0) {
      for (float& v : z.data()) v = std::round(v);  // repeated confidences
    }
    const auto p = softmax_rows(z);
    const auto y = oracle::random_labels(rng, n, c);
    const int m = std::min<int>(bins(rng), static_cast<int>(n));
    std::vector<double> conf;
    std::vector<int> hit;
    oracle::top_class(p, y, conf, hit);
    ASSERT_NEAR(ece_equal_width(p, y, m).ece, oracle::ece_equal_width(conf, hit, m), 1e-12);
    ASSERT_NEAR(ece_equal_mass(p, y, m).ece, oracle::ece_equal_mass(conf, hit, m), 1e-12);
    ASSERT_NEAR(classwise_ece(p, y, m).total, oracle::classwise_ece(p, y, m), 1e-12);
    ASSERT_NEAR(brier(p, y), oracle::brier(p, y), 1e-12);
    ASSERT_NEAR(nll(p, y), oracle::nll(p, y), 1e-12);
  }
}

TEST(Ood, HandExamples) {
  const OodScores separated{{1.0, 1.0}, {0.0, 0.0}};
  EXPECT_EQ(fpr_at_tpr(separated), 0.0);
  EXPECT_EQ(detection_error(separated), 0.0);
  EXPECT_EQ(auroc(separated), 1.0);
  EXPECT_EQ(aupr(separated, PrPositive::in), 1.0);
  EXPECT_EQ(aupr(separated, PrPositive::out), 1.0);

  const OodScores same{{0.3, 0.3, 0.3}, {0.3, 0.3, 0.3}};
  EXPECT_EQ(auroc(same), 0.5);
  EXPECT_EQ(detection_error(same), 0.5);
  EXPECT_EQ(fpr_at_tpr(same), 1.0);

  // Identical multisets: the first threshold reaching TPR 0.95 of 20 sorted
  // values keeps 19 of each, so FPR = 0.95.
  std::vector<double> v;
  for (int i = 0; i < 20; ++i) v.push_back(i);
  EXPECT_EQ(fpr_at_tpr({v, v}), 0.95);
  EXPECT_EQ(detection_error({v, v}), 0.5);

  EXPECT_THROW(auroc({{}, {1.0}}), ConfigError);
}

TEST(Ood, UninformativeAuprIsPrevalence) {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  OodScores s;
  for (int i = 0; i < 20000; ++i) s.in_scores.push_back(u(rng));
  for (int i = 0; i < 60000; ++i) s.out_scores.push_back(u(rng));
  EXPECT_NEAR(aupr(s, PrPositive::in), 0.25, 0.01);
  EXPECT_NEAR(aupr(s, PrPositive::out), 0.75, 0.01);
  EXPECT_NEAR(auroc(s), 0.5, 0.01);
}

TEST(Ood, MatchEnumerationOracles) {
  std::mt19937_64 rng(44);
  std::uniform_int_distribution<int> size(1, 150);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    OodScores s;
    const int n_in = size(rng), n_out = size(rng);
    for (int i = 0; i < n_in; ++i) s.in_scores.push_back(g(rng) + 0.7);
    for (int i = 0; i < n_out; ++i) s.out_scores.push_back(g(rng));
    if (t % 3 == 0) {
      for (double& v : s.in_scores) v = std::round(4 * v) / 4;
      for (double& v : s.out_scores) v = std::round(4 * v) / 4;
    }
    ASSERT_EQ(auroc(s), oracle::auroc(s.in_scores, s.out_scores));
    ASSERT_EQ(fpr_at_tpr(s), oracle::fpr_at_tpr(s.in_scores, s.out_scores, 0.95));
    ASSERT_EQ(detection_error(s), oracle::detection_error(s.in_scores, s.out_scores));
    ASSERT_EQ(aupr(s, PrPositive::in), oracle::aupr(s.in_scores, s.out_scores));
    ASSERT_EQ(aupr(s, PrPositive::out),
              oracle::aupr(oracle::negated(s.out_scores), oracle::negated(s.in_scores)));
  }
}

TEST(MacroAverage, Examples) {
  EXPECT_EQ(macro_average(std::vector<double>{0.7}), 0.7);
  EXPECT_EQ(macro_average(std::vector<double>{1, 3}), 2.0);
  // Averaging per-group means equals the flat mean when groups are equal-sized.
  const std::vector<double> a{0.1, 0.4}, b{0.3, 0.6}, flat{0.1, 0.4, 0.3, 0.6};
  const std::vector<double> groups{macro_average(a), macro_average(b)};
  EXPECT_NEAR(macro_average(groups), macro_average(flat), 1e-15);
  EXPECT_THROW(macro_average(std::vector<double>{}), ConfigError);
}

TEST(Reliability, MatchesEceStats) {
  std::mt19937_64 rng(45);
  const auto p = softmax_rows(oracle::random_matrix(rng, 200, 4, 2.0));
  const auto y = oracle::random_labels(rng, 200, 4);
  const auto r = reliability_data(p, y, 10, BinScheme::equal_width);
  std::size_t total = 0;
  for (const auto& b : r.bins) total += b.count;
  EXPECT_EQ(total, 200u);
  EXPECT_EQ(r.bins.size(), 10u);
  const auto e = ece_equal_width(p, y, 10);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(r.bins[i].count, e.stats.bins[i].count);
}
