#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "dacal/density_scaler.hpp"
#include "dacal/error.hpp"
#include "dacal/optim.hpp"
#include "dacal/preprocess.hpp"
#include "dacal/synth.hpp"
#include "oracles.hpp"

using namespace dacal;

namespace {

DensityMatrix densities_of(DenseMatrix values) {
  DensityMatrix d;
  for (std::size_t l = 0; l < values.cols(); ++l) d.layer_names.push_back("l" + std::to_string(l));
  d.values = std::move(values);
  return d;
}

DensityMatrix random_densities(std::mt19937_64& rng, std::size_t n, std::size_t layers) {
  std::uniform_real_distribution<double> u(0.0, 2.0);
  DenseMatrix v(n, layers);
  for (float& x : v.data()) x = static_cast<float>(u(rng));
  return densities_of(std::move(v));
}

CalibrationDataset labeled(DenseMatrix logits, LabelVector labels) {
  CalibrationDataset d;
  d.split_name = "val";
  d.logits = std::move(logits);
  d.labels = std::move(labels);
  return d;
}

}  // namespace

TEST(ScaleFactor, HandExamples) {
  const auto d = densities_of(DenseMatrix::from_rows({{1.0f, 0.25f}, {0, 0}}));
  const DacModel m(d.layer_names, {0.5, 2.0}, 0.1);
  const auto s = scale_factor(m, d);
  EXPECT_NEAR(s[0], 1.1, 1e-12);
  EXPECT_DOUBLE_EQ(s[1], 0.1);

  const DacModel unit(d.layer_names, {0.0, 0.0}, 1.0);
  for (double v : scale_factor(unit, d)) EXPECT_EQ(v, 1.0);
}

TEST(ScaleFactor, Errors) {
  const auto d = densities_of(DenseMatrix::from_rows({{1.0f, 0.25f}}));
  EXPECT_THROW(scale_factor(DacModel({"x", "l1"}, {1, 1}, 1), d), ConfigError);
  EXPECT_THROW(DacModel({"a"}, {-0.1}, 1.0), ConfigError);
  EXPECT_THROW(DacModel({"a"}, {0.1}, 0.0), ConfigError);
  EXPECT_THROW(DacModel({"a"}, {0.1, 0.2}, 1.0), ConfigError);
  auto neg = densities_of(DenseMatrix::from_rows({{-1.0f, 0.0f}}));
  EXPECT_THROW(scale_factor(DacModel(neg.layer_names, {1, 1}, 1), neg), DataError);
}

TEST(RescaleLogits, HandExample) {
  const auto d = densities_of(DenseMatrix::from_rows({{1.0f}}));
  const DacModel m(d.layer_names, {1.0}, 1.0);
  const auto z = rescale_logits(m, DenseMatrix::from_rows({{4, 0}}), d);
  EXPECT_EQ(z(0, 0), 2.0f);
  EXPECT_EQ(z(0, 1), 0.0f);
  const auto p = softmax_rows(z);
  EXPECT_NEAR(p(0, 0), 0.880797, 1e-5);

  const DacModel unit(d.layer_names, {0.0}, 1.0);
  const auto logits = DenseMatrix::from_rows({{0.3f, -1.7f, 2.2f}});
  EXPECT_TRUE(bitwise_equal(rescale_logits(unit, logits, d), logits));
}

TEST(RescaleLogits, PreservesArgmax) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> w(0.0, 5.0);
  std::uniform_real_distribution<double> logw0(-14.0, 3.0);
  for (int t = 0; t < 10000; ++t) {
    auto z = oracle::random_matrix(rng, 1, 2 + t % 20, 1 + t % 30);
    if (t % 3 == 0) z(0, 1) = std::nextafter(z(0, 0), t % 2 ? 1e9f : -1e9f);
    const auto d = random_densities(rng, 1, 3);
    const DacModel m(d.layer_names, {w(rng), w(rng), w(rng)}, std::max(kBiasFloor, std::exp(logw0(rng))));
    ASSERT_EQ(argmax(rescale_logits(m, z, d).row(0)), argmax(z.row(0))) << t;
  }
}

TEST(SquaredError, ValueMatchesOracle) {
  std::mt19937_64 rng(22);
  const auto z = oracle::random_matrix(rng, 300, 5, 3.0);
  const auto y = oracle::random_labels(rng, 300, 5);
  const auto d = random_densities(rng, 300, 2);
  const SquaredErrorObjective obj(z, y, d.values);
  for (double s : {0.2, 1.0, 4.5}) {
    const std::vector<double> params{s, 0.0, 0.0};
    EXPECT_NEAR(obj.value(params), oracle::temperature_squared_error(z, y, s), 1e-9);
  }
}

TEST(SquaredError, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.05, 2.0);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 20 + t, layers = 1 + t % 4;
    const auto z = oracle::random_matrix(rng, n, 2 + t % 9, 3.0);
    const auto y = oracle::random_labels(rng, n, static_cast<int>(z.cols()));
    const auto d = random_densities(rng, n, layers);
    const SquaredErrorObjective obj(z, y, d.values);
    std::vector<double> x(layers + 1);
    for (double& v : x) v = u(rng);
    std::vector<double> g(x.size());
    obj.value_and_gradient(x, g);
    double err = 0.0, norm = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      auto hi = x, lo = x;
      hi[j] += 1e-4;
      lo[j] -= 1e-4;
      const double fd = (obj.value(hi) - obj.value(lo)) / 2e-4;
      err = std::max(err, std::abs(fd - g[j]));
      norm = std::max(norm, std::abs(fd));
    }
    ASSERT_LE(err, 1e-4 * norm) << "instance " << t;
  }
}

TEST(FitDac, ZeroDensitiesReduceToTemperature) {
  std::mt19937_64 rng(24);
  const auto z = oracle::random_matrix(rng, 500, 6, 4.0);
  const auto y = oracle::random_labels(rng, 500, 6);
  const auto val = labeled(z, y);
  const auto d = densities_of(DenseMatrix(500, 3, 0.0f));
  const auto fit = fit_dac(val, d);
  for (double w : fit.model.weights()) EXPECT_EQ(w, 0.0);

  const double t = golden_section_minimize(
      [&](double lt) { return oracle::temperature_squared_error(z, y, std::exp(lt)); }, -5.0, 5.0,
      1e-10);
  const double best = oracle::temperature_squared_error(z, y, std::exp(t));
  EXPECT_LE(std::abs(fit.report.final_loss - best), 1e-4 * best);
  EXPECT_NEAR(fit.model.bias(), std::exp(t), 1e-3 * std::exp(t));
}

TEST(FitDac, ConstraintsAndDecrease) {
  std::mt19937_64 rng(25);
  for (int t = 0; t < 20; ++t) {
    const auto z = oracle::random_matrix(rng, 200, 4, 5.0);
    const auto y = oracle::random_labels(rng, 200, 4);
    const auto d = random_densities(rng, 200, 3);
    const auto fit = fit_dac(labeled(z, y), d);
    for (double w : fit.model.weights()) EXPECT_GE(w, 0.0);
    EXPECT_GE(fit.model.bias(), kBiasFloor);
    EXPECT_LE(fit.report.final_loss, fit.report.initial_loss);
    double share_sum = 0.0;
    for (double s : fit.report.weight_shares) {
      EXPECT_GE(s, 0.0);
      share_sum += s;
    }
    EXPECT_NEAR(share_sum, 1.0, 1e-6);
    const auto again = fit_dac(labeled(z, y), d);
    EXPECT_EQ(again.model.weights(), fit.model.weights());
    EXPECT_EQ(again.model.bias(), fit.model.bias());
  }
}

TEST(FitDac, CalibratedDataKeepsUnitScale) {
  SynthConfig c;
  c.seed = 3;
  c.val_samples = 50000;  // sampling noise in the bias-only optimum is about 0.1 at 4000
  const auto splits = generate(c);
  const auto& val = splits.at("val");
  std::mt19937_64 rng(26);
  const auto d = random_densities(rng, val.size(), 2);
  const auto fit = fit_dac(val, d);
  const SquaredErrorObjective obj(val.logits, *val.labels, d.values);
  const double at_unit = obj.value(std::vector<double>{1.0, 0.0, 0.0});
  for (double w : fit.model.weights()) EXPECT_LT(w, 0.05);
  EXPECT_NEAR(fit.model.bias(), 1.0, 0.1);
  EXPECT_LE(std::abs(fit.report.final_loss - at_unit), 1e-3 * at_unit);
}

TEST(FitDac, PicksUpTrueShiftColumn) {
  // Each sample's logits are overconfident by 1 + shift; column 0 carries
  // the shift, column 1 is noise.
  std::mt19937_64 rng(27);
  std::uniform_real_distribution<double> shift(0.0, 2.0);
  const std::size_t n = 3000;
  const int classes = 5;
  SynthConfig c;
  c.num_classes = classes;
  c.val_samples = n;
  c.train_samples = c.test_samples = c.ood_samples = 100;
  c.seed = 9;
  const auto base = generate(c).at("val");
  DenseMatrix z = base.logits;
  DenseMatrix s(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = shift(rng);
    s(i, 0) = static_cast<float>(a);
    s(i, 1) = static_cast<float>(shift(rng));
    for (auto& v : z.row(i)) v = static_cast<float>(v * (1.0 + a));
  }
  const auto fit = fit_dac(labeled(z, *base.labels), densities_of(s));
  EXPECT_GT(fit.model.weights()[0], 0.1);
  EXPECT_GT(fit.model.weights()[0], 5 * fit.model.weights()[1]);
}

TEST(FitDac, Errors) {
  const auto one = labeled(DenseMatrix::from_rows({{1, 0}}), LabelVector({0}, 2));
  EXPECT_THROW(fit_dac(one, densities_of(DenseMatrix(1, 1))), ConfigError);
  auto unlabeled = labeled(DenseMatrix::from_rows({{1, 0}, {0, 1}}), LabelVector({0, 1}, 2));
  unlabeled.labels.reset();
  EXPECT_THROW(fit_dac(unlabeled, densities_of(DenseMatrix(2, 1))), ConfigError);
  const auto two = labeled(DenseMatrix::from_rows({{1, 0}, {0, 1}}), LabelVector({0, 1}, 2));
  EXPECT_THROW(fit_dac(two, densities_of(DenseMatrix(3, 1))), ShapeError);
}

TEST(ApplyDac, EqualsRescaleOfProfile) {
  std::mt19937_64 rng(28);
  CalibrationDataset train, test;
  train.logits = oracle::random_matrix(rng, 100, 3);
  train.layers.push_back({"a", oracle::random_matrix(rng, 100, 4)});
  test.logits = oracle::random_matrix(rng, 30, 3);
  test.layers.push_back({"a", oracle::random_matrix(rng, 30, 4)});
  const std::vector<KnnIndex> indices{KnnIndex::build(train.layer("a"), "a", 5)};
  const DacModel m({"a"}, {0.7}, 0.4);
  EXPECT_TRUE(bitwise_equal(apply_dac(m, test, indices),
                            rescale_logits(m, test.logits, density_profile(test, indices))));
  EXPECT_TRUE(bitwise_equal(apply_dac(DacModel({"a"}, {0.0}, 1.0), test, indices), test.logits));
}

TEST(Optimizer, BoxConstrainedQuadratic) {
  // min (x0 + 1)^2 + (x1 - 2)^2 subject to x >= 0 has its optimum at (0, 2).
  const auto res = minimize_lower_bounded(
      [](std::span<const double> x, std::span<double> g) {
        g[0] = 2 * (x[0] + 1);
        g[1] = 2 * (x[1] - 2);
        return (x[0] + 1) * (x[0] + 1) + (x[1] - 2) * (x[1] - 2);
      },
      {3.0, 3.0}, std::vector<double>{0.0, 0.0});
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.x[0], 0.0);
  EXPECT_NEAR(res.x[1], 2.0, 1e-6);
  EXPECT_NEAR(golden_section_minimize([](double x) { return (x - 0.3) * (x - 0.3); }, -1, 1, 1e-9),
              0.3, 1e-8);
}
