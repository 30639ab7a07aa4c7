#include "dacal/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dacal/error.hpp"

namespace dacal {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, float fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix payload has " + std::to_string(data_.size()) +
                     " entries, expected " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

DenseMatrix DenseMatrix::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
  const std::size_t n = rows.size();
  const std::size_t d = n == 0 ? 0 : rows.begin()->size();
  std::vector<float> data;
  data.reserve(n * d);
  for (const auto& r : rows) {
    if (r.size() != d) throw ShapeError("ragged row in matrix literal");
    data.insert(data.end(), r.begin(), r.end());
  }
  return DenseMatrix(n, d, std::move(data));
}

DenseMatrix DenseMatrix::select_rows(std::span<const std::size_t> indices) const {
  DenseMatrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) throw ShapeError("row index out of range");
    std::copy_n(row(indices[i]).begin(), cols_, out.row(i).begin());
  }
  return out;
}

bool bitwise_equal(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return a.size() == 0 ||
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

bool all_finite(const DenseMatrix& m) {
  return std::all_of(m.data().begin(), m.data().end(),
                     [](float v) { return std::isfinite(v); });
}

std::size_t argmax(std::span<const float> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

std::size_t argmax(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

LabelVector::LabelVector(std::vector<std::int32_t> labels, int num_classes)
    : labels_(std::move(labels)), num_classes_(num_classes) {
  if (num_classes_ <= 0) throw DataError("num_classes must be positive");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] < 0 || labels_[i] >= num_classes_) {
      throw DataError("label " + std::to_string(labels_[i]) + " at index " +
                      std::to_string(i) + " outside [0, " + std::to_string(num_classes_) + ")");
    }
  }
}

LabelVector LabelVector::select(std::span<const std::size_t> indices) const {
  std::vector<std::int32_t> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= labels_.size()) throw ShapeError("label index out of range");
    out.push_back(labels_[i]);
  }
  return LabelVector(std::move(out), num_classes_);
}

}  // namespace dacal
