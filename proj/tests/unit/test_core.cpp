#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <unistd.h>

#include "dacal/dataset.hpp"
#include "dacal/error.hpp"
#include "dacal/log.hpp"
#include "dacal/matrix.hpp"
#include "dacal/preprocess.hpp"
#include "dacal/tensor_io.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace dacal;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("dacal_core_" + name + "_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Captures warnings for the lifetime of the object.
struct WarningCapture {
  std::vector<std::string> messages;
  LogSink previous;
  WarningCapture() {
    previous = set_log_sink([this](LogLevel, std::string_view m) { messages.emplace_back(m); });
  }
  ~WarningCapture() { set_log_sink(previous); }
};

}  // namespace

TEST(TensorIo, RoundTripsSmallMatrix) {
  const auto dir = temp_dir("small");
  const auto m = DenseMatrix::from_rows({{1, 2}, {3, 4}});
  save_tensor(m, dir / "m.dact");
  const auto back = load_tensor(dir / "m.dact");
  EXPECT_EQ(back.rows(), 2u);
  EXPECT_EQ(back.cols(), 2u);
  EXPECT_TRUE(bitwise_equal(m, back));
  fs::remove_all(dir);
}

TEST(TensorIo, EmptyMatrixIsHeaderOnly) {
  const auto dir = temp_dir("empty");
  save_tensor(DenseMatrix{}, dir / "e.dact");
  EXPECT_EQ(fs::file_size(dir / "e.dact"), 16u);
  const auto back = load_tensor(dir / "e.dact");
  EXPECT_EQ(back.rows(), 0u);
  EXPECT_EQ(back.cols(), 0u);
  fs::remove_all(dir);
}

TEST(TensorIo, NegativeZeroSurvives) {
  const auto dir = temp_dir("negzero");
  const auto m = DenseMatrix::from_rows({{1.5f, -2.0f, -0.0f}});
  save_tensor(m, dir / "m.dact");
  EXPECT_TRUE(bitwise_equal(load_tensor(dir / "m.dact"), m));
  fs::remove_all(dir);
}

TEST(TensorIo, RandomRoundTripsAreByteIdentical) {
  const auto dir = temp_dir("random");
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> dim(1, 40);
  for (int t = 0; t < 1000; ++t) {
    const auto m = oracle::random_matrix(rng, dim(rng), dim(rng), 100.0);
    save_tensor(m, dir / "a.dact");
    const auto back = load_tensor(dir / "a.dact");
    ASSERT_TRUE(bitwise_equal(m, back)) << "instance " << t;
    if (t % 10 == 0) {
      save_tensor(back, dir / "b.dact");
      ASSERT_EQ(slurp(dir / "a.dact"), slurp(dir / "b.dact"));
    }
  }
  fs::remove_all(dir);
}

TEST(TensorIo, RejectsNaN) {
  const auto dir = temp_dir("nan");
  auto m = DenseMatrix::from_rows({{1, 2}});
  m(0, 1) = std::nanf("");
  save_tensor(m, dir / "m.dact");
  EXPECT_THROW(load_tensor(dir / "m.dact"), DataError);
  fs::remove_all(dir);
}

TEST(TensorIo, MalformedAndTruncatedFiles) {
  const auto dir = temp_dir("bad");
  save_tensor(DenseMatrix::from_rows({{1, 2, 3}}), dir / "m.dact");
  auto bytes = slurp(dir / "m.dact");

  auto write = [&](const std::string& data) {
    std::ofstream out(dir / "x.dact", std::ios::binary);
    out << data;
  };
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  write(bad_magic);
  EXPECT_THROW(load_tensor(dir / "x.dact"), FormatError);

  auto bad_version = bytes;
  bad_version[4] = 9;
  write(bad_version);
  EXPECT_THROW(load_tensor(dir / "x.dact"), FormatError);

  write(bytes.substr(0, bytes.size() - 2));
  EXPECT_THROW(load_tensor(dir / "x.dact"), IoError);

  EXPECT_THROW(load_tensor(dir / "missing.dact"), IoError);
  fs::remove_all(dir);
}

TEST(TensorIo, LabelsRoundTrip) {
  const auto dir = temp_dir("labels");
  const LabelVector labels({0, 3, 2, 1}, 4);
  save_labels(labels, dir / "y.dact");
  EXPECT_EQ(load_labels(dir / "y.dact", 4), labels);
  EXPECT_THROW(load_labels(dir / "y.dact", 3), DataError);
  fs::remove_all(dir);
}

TEST(Preprocess, SpatialAverage) {
  const auto in = DenseMatrix::from_rows({{1, 3, 2, 6}});
  const auto out = spatial_average(in, 2, 2);
  ASSERT_EQ(out.cols(), 2u);
  EXPECT_FLOAT_EQ(out(0, 0), 2.0f);
  EXPECT_FLOAT_EQ(out(0, 1), 4.0f);

  std::mt19937_64 rng(1);
  const auto x = oracle::random_matrix(rng, 5, 6);
  EXPECT_TRUE(bitwise_equal(spatial_average(x, 6, 1), x));

  const DenseMatrix constant(3, 12, 2.5f);
  const auto pooled = spatial_average(constant, 3, 4);
  for (float v : pooled.data()) EXPECT_FLOAT_EQ(v, 2.5f);

  EXPECT_THROW(spatial_average(x, 4, 2), ShapeError);
  EXPECT_THROW(spatial_average(x, 6, 0), ShapeError);
}

TEST(Preprocess, L2Normalize) {
  const auto out = l2_normalize_rows(DenseMatrix::from_rows({{3, 4}, {1, 0}}));
  EXPECT_NEAR(out(0, 0), 0.6, 1e-7);
  EXPECT_NEAR(out(0, 1), 0.8, 1e-7);
  EXPECT_EQ(out(1, 0), 1.0f);
  EXPECT_EQ(out(1, 1), 0.0f);
}

TEST(Preprocess, ZeroRowPassesThroughWithWarning) {
  WarningCapture capture;
  std::vector<std::size_t> zero_rows;
  const auto out = l2_normalize_rows(DenseMatrix::from_rows({{0, 0}, {0, 2}}), &zero_rows);
  EXPECT_EQ(out(0, 0), 0.0f);
  EXPECT_EQ(out(0, 1), 0.0f);
  EXPECT_EQ(zero_rows, std::vector<std::size_t>{0});
  EXPECT_FALSE(capture.messages.empty());
}

TEST(Preprocess, NormalizationIsIdempotent) {
  std::mt19937_64 rng(2);
  const auto x = oracle::random_matrix(rng, 200, 33, 10.0);
  const auto once = l2_normalize_rows(x);
  const auto twice = l2_normalize_rows(once);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    EXPECT_NEAR(std::sqrt(oracle::dot(once.row(r), once.row(r))), 1.0, 1e-6);
    for (std::size_t c = 0; c < x.cols(); ++c) EXPECT_NEAR(once(r, c), twice(r, c), 1e-6);
  }
}

TEST(Preprocess, SoftmaxExamples) {
  const auto p = softmax_rows(DenseMatrix::from_rows({{0, 0}, {2, 0}, {1000, 0}}));
  EXPECT_FLOAT_EQ(p(0, 0), 0.5f);
  EXPECT_NEAR(p(1, 0), 0.880797, 1e-5);
  EXPECT_NEAR(p(1, 1), 0.119203, 1e-5);
  EXPECT_EQ(p(2, 0), 1.0f);
  EXPECT_EQ(p(2, 1), 0.0f);
}

TEST(Preprocess, SoftmaxSumsToOneAndKeepsArgmax) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> classes(2, 30);
  std::uniform_real_distribution<double> scale(0.01, 50.0);
  for (int t = 0; t < 10000; ++t) {
    auto z = oracle::random_matrix(rng, 1, classes(rng), scale(rng));
    if (t % 4 == 0) z(0, 1) = z(0, 0);  // exact tie
    if (t % 4 == 1) z(0, 1) = std::nextafter(z(0, 0), 1e9f);
    const auto p = softmax_rows(z);
    double s = 0.0;
    for (float v : p.row(0)) {
      ASSERT_GE(v, 0.0f);
      s += v;
    }
    ASSERT_NEAR(s, 1.0, 1e-6);
    ASSERT_EQ(argmax(p.row(0)), argmax(z.row(0))) << "row " << t;
  }
}

TEST(Matrix, ConstructorsCheckShape) {
  EXPECT_THROW(DenseMatrix(2, 2, std::vector<float>{1, 2, 3}), ShapeError);
  EXPECT_THROW(LabelVector({0, 5}, 3), DataError);
  EXPECT_THROW(LabelVector({-1}, 3), DataError);
  EXPECT_EQ(argmax(std::vector<float>{1, 3, 3}), 1u);
}

TEST(Dataset, ValidateAndSubset) {
  CalibrationDataset d;
  d.split_name = "val";
  d.logits = DenseMatrix::from_rows({{1, 0}, {0, 1}, {2, 2}});
  d.labels = LabelVector({0, 1, 1}, 2);
  d.layers.push_back({"a", DenseMatrix::from_rows({{1}, {2}, {3}})});
  EXPECT_NO_THROW(d.validate());

  const std::vector<std::size_t> rows{2, 0};
  const auto s = d.subset(rows);
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(s.layer("a")(0, 0), 3.0f);
  EXPECT_EQ((*s.labels)[1], 0);
  EXPECT_THROW(d.layer("b"), ConfigError);

  auto bad = d;
  bad.layers.push_back({"a", DenseMatrix::from_rows({{1}, {2}, {3}})});
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = d;
  bad.layers[0].features = DenseMatrix::from_rows({{1}, {2}});
  EXPECT_THROW(bad.validate(), ShapeError);
  bad = d;
  bad.logits(1, 1) = INFINITY;
  EXPECT_THROW(bad.validate(), DataError);
  bad = d;
  bad.labels.reset();
  EXPECT_THROW(bad.require_labels(), ConfigError);
}
