#pragma once

#include <span>
#include <string>
#include <vector>

#include "dacal/dataset.hpp"
#include "dacal/knn.hpp"
#include "dacal/matrix.hpp"
#include "dacal/optim.hpp"

namespace dacal {

/// Lower bound on the bias so that the scale factor never vanishes.
inline constexpr double kBiasFloor = 1e-6;

/// Sample-wise logit divisor S(x) = sum_l w_l * s_l(x) + w_0 with w_l >= 0
/// and w_0 >= kBiasFloor.
class DacModel {
 public:
  DacModel() = default;
  /// Throws ConfigError on size mismatches or violated constraints.
  DacModel(std::vector<std::string> layer_names, std::vector<double> weights, double bias,
           std::vector<int> k_per_layer = {});

  /// Bias-only model (no layers), i.e. plain temperature `bias`.
  static DacModel bias_only(double bias);

  const std::vector<std::string>& layer_names() const noexcept { return layer_names_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  double bias() const noexcept { return bias_; }
  const std::vector<int>& k_per_layer() const noexcept { return k_per_layer_; }
  std::size_t num_layers() const noexcept { return layer_names_.size(); }

  /// Checksums of the reference sets the densities were computed against.
  const std::vector<std::string>& index_checksums() const noexcept { return index_checksums_; }
  void set_index_checksums(std::vector<std::string> checksums);

 private:
  std::vector<std::string> layer_names_;
  std::vector<double> weights_;
  double bias_ = 1.0;
  std::vector<int> k_per_layer_;
  std::vector<std::string> index_checksums_;
};

struct FitReport {
  double final_loss = 0.0;
  double initial_loss = 0.0;
  int iterations = 0;
  double initial_bias = 1.0;
  bool converged = false;
  /// w_l / (w_0 + sum w), one entry per layer followed by the bias share.
  std::vector<double> weight_shares;
};

/// Layer shares plus trailing bias share; sums to 1.
std::vector<double> weight_shares(const DacModel& model);

/// S(x_n) for each sample. Throws ConfigError if the density layers differ
/// from the model layers, DataError on negative densities.
std::vector<double> scale_factor(const DacModel& model, const DensityMatrix& densities);

/// Logits divided row-wise by the scale factor. The first-index argmax of
/// every row is preserved.
DenseMatrix rescale_logits(const DacModel& model, const DenseMatrix& logits,
                           const DensityMatrix& densities);

/// Summed squared error between softmax(z_n / S_n) and the one-hot labels,
/// with its gradient in (w_0, w_1, ..., w_L). Parameters are ordered bias
/// first.
class SquaredErrorObjective {
 public:
  SquaredErrorObjective(const DenseMatrix& logits, const LabelVector& labels,
                        const DenseMatrix& densities);

  std::size_t num_params() const noexcept { return densities_->cols() + 1; }
  double value(std::span<const double> params) const;
  double value_and_gradient(std::span<const double> params, std::span<double> grad) const;

 private:
  const DenseMatrix* logits_;
  const LabelVector* labels_;
  const DenseMatrix* densities_;
};

struct DacFitOptions {
  BoxMinimizeOptions optimizer{};
  /// Golden-section bracket for the initial bias, in log space.
  double log_bias_lo = -3.0;
  double log_bias_hi = 3.0;
};

struct DacFit {
  DacModel model;
  FitReport report;
};

/// Minimizes the squared-error objective on a labeled validation split.
/// Starts from zero layer weights and the best bias-only temperature. Throws
/// ConfigError for fewer than two samples or mismatched densities.
DacFit fit_dac(const CalibrationDataset& val, const DensityMatrix& densities,
               const DacFitOptions& options = {});

/// rescale_logits(model, dataset.logits, density profile of the model layers).
DenseMatrix apply_dac(const DacModel& model, const CalibrationDataset& dataset,
                      std::span<const KnnIndex> indices);

}  // namespace dacal
