#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace dacal {

/// Row-major matrix of 32-bit floats. Carries features, logits,
/// probabilities and distances throughout the library.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, float fill = 0.0f);
  /// Throws ShapeError when data.size() != rows * cols.
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  static DenseMatrix from_rows(std::initializer_list<std::initializer_list<float>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  /// Rows selected by index, in the given order.
  DenseMatrix select_rows(std::span<const std::size_t> indices) const;

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

/// Compares shape and raw payload bytes (distinguishes -0.0 from 0.0).
bool bitwise_equal(const DenseMatrix& a, const DenseMatrix& b);

bool all_finite(const DenseMatrix& m);

/// Index of the first maximal entry.
std::size_t argmax(std::span<const float> row);
std::size_t argmax(std::span<const double> row);

/// Class labels in [0, num_classes).
class LabelVector {
 public:
  LabelVector() = default;
  /// Throws DataError if a label is negative or >= num_classes.
  LabelVector(std::vector<std::int32_t> labels, int num_classes);

  std::size_t size() const noexcept { return labels_.size(); }
  int num_classes() const noexcept { return num_classes_; }
  std::int32_t operator[](std::size_t i) const { return labels_[i]; }
  std::span<const std::int32_t> values() const noexcept { return labels_; }

  LabelVector select(std::span<const std::size_t> indices) const;

  bool operator==(const LabelVector&) const = default;

 private:
  std::vector<std::int32_t> labels_;
  int num_classes_ = 0;
};

}  // namespace dacal
