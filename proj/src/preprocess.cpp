#include "dacal/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dacal/error.hpp"
#include "dacal/log.hpp"
#include "dacal/parallel.hpp"

namespace dacal {

DenseMatrix spatial_average(const DenseMatrix& features, std::size_t channels,
                            std::size_t spatial) {
  if (spatial == 0) throw ShapeError("spatial size must be at least 1");
  if (features.cols() != channels * spatial) {
    throw ShapeError("spatial_average: " + std::to_string(features.cols()) +
                     " columns cannot be split into " + std::to_string(channels) + " x " +
                     std::to_string(spatial));
  }
  if (spatial == 1) return features;
  DenseMatrix out(features.rows(), channels);
  for (std::size_t n = 0; n < features.rows(); ++n) {
    const auto in = features.row(n);
    for (std::size_t c = 0; c < channels; ++c) {
      double sum = 0.0;
      for (std::size_t s = 0; s < spatial; ++s) sum += in[c * spatial + s];
      out(n, c) = static_cast<float>(sum / static_cast<double>(spatial));
    }
  }
  return out;
}

DenseMatrix l2_normalize_rows(const DenseMatrix& features, std::vector<std::size_t>* zero_rows) {
  DenseMatrix out = features;
  std::size_t zeros = 0;
  for (std::size_t n = 0; n < out.rows(); ++n) {
    auto row = out.row(n);
    double sq = 0.0;
    for (float v : row) sq += static_cast<double>(v) * v;
    if (sq == 0.0) {
      ++zeros;
      if (zero_rows != nullptr) zero_rows->push_back(n);
      continue;
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (float& v : row) v = static_cast<float>(v * inv);
  }
  if (zeros > 0) {
    log_warn("l2_normalize_rows: " + std::to_string(zeros) +
             " all-zero row(s) left unnormalized");
  }
  return out;
}

void softmax_inplace(std::span<double> row) {
  if (row.empty()) return;
  const double mx = *std::max_element(row.begin(), row.end());
  double sum = 0.0;
  for (double& v : row) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : row) v /= sum;
}

void round_preserving_argmax(std::span<const double> values, std::size_t winner,
                             std::span<float> out) {
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<float>(values[i]);
  if (winner >= out.size()) return;
  // Entries before the winner must be strictly smaller, entries after it at
  // most equal, for first-index argmax to select the winner.
  float needed = out[winner];
  for (std::size_t j = 0; j < out.size(); ++j) {
    if (j < winner && out[j] >= needed) {
      needed = std::nextafter(out[j], std::numeric_limits<float>::infinity());
    } else if (j > winner && out[j] > needed) {
      needed = out[j];
    }
  }
  out[winner] = needed;
}

DenseMatrix softmax_rows(const DenseMatrix& logits) {
  DenseMatrix out(logits.rows(), logits.cols());
  parallel_for(logits.rows(), [&](std::size_t begin, std::size_t end) {
    std::vector<double> buf(logits.cols());
    for (std::size_t n = begin; n < end; ++n) {
      const auto in = logits.row(n);
      std::copy(in.begin(), in.end(), buf.begin());
      softmax_inplace(buf);
      round_preserving_argmax(buf, argmax(in), out.row(n));
    }
  });
  return out;
}

}  // namespace dacal
