#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dacal/matrix.hpp"

namespace dacal {

/// Mean over the spatial axis of features laid out as [N x (channels * spatial)],
/// channel-major. Throws ShapeError if cols != channels * spatial or spatial == 0.
DenseMatrix spatial_average(const DenseMatrix& features, std::size_t channels,
                            std::size_t spatial);

/// Scales each row to unit euclidean norm (norm accumulated in double).
/// All-zero rows are returned unchanged; their indices are appended to
/// `zero_rows` when given, and a warning is logged.
DenseMatrix l2_normalize_rows(const DenseMatrix& features,
                              std::vector<std::size_t>* zero_rows = nullptr);

/// Row-wise softmax with max subtraction. Computed in double, rounded to
/// float with the argmax guard below.
DenseMatrix softmax_rows(const DenseMatrix& logits);

/// In-place softmax of one row in double precision.
void softmax_inplace(std::span<double> row);

/// Rounds `values` into `out` and makes sure the first maximal index of the
/// float row equals `winner`. Rounding to float can merge two values that
/// were distinct in double; when that happens the winning entry is raised by
/// one ulp so the predicted class never changes.
void round_preserving_argmax(std::span<const double> values, std::size_t winner,
                             std::span<float> out);

}  // namespace dacal
