#include "dacal/density_scaler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dacal/error.hpp"
#include "dacal/parallel.hpp"
#include "dacal/preprocess.hpp"

namespace dacal {

DacModel::DacModel(std::vector<std::string> layer_names, std::vector<double> weights,
                   double bias, std::vector<int> k_per_layer)
    : layer_names_(std::move(layer_names)),
      weights_(std::move(weights)),
      bias_(bias),
      k_per_layer_(std::move(k_per_layer)) {
  if (weights_.size() != layer_names_.size()) {
    throw ConfigError("DacModel: " + std::to_string(weights_.size()) + " weights for " +
                      std::to_string(layer_names_.size()) + " layers");
  }
  if (!k_per_layer_.empty() && k_per_layer_.size() != layer_names_.size()) {
    throw ConfigError("DacModel: k_per_layer size differs from layer count");
  }
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("DacModel: layer weights must be >= 0");
  }
  if (!(bias_ >= kBiasFloor) || !std::isfinite(bias_)) {
    throw ConfigError("DacModel: bias must be >= " + std::to_string(kBiasFloor));
  }
}

DacModel DacModel::bias_only(double bias) { return DacModel({}, {}, bias, {}); }

void DacModel::set_index_checksums(std::vector<std::string> checksums) {
  if (!checksums.empty() && checksums.size() != layer_names_.size()) {
    throw ConfigError("DacModel: index checksum count differs from layer count");
  }
  index_checksums_ = std::move(checksums);
}

std::vector<double> weight_shares(const DacModel& model) {
  double total = model.bias();
  for (double w : model.weights()) total += w;
  std::vector<double> shares;
  shares.reserve(model.num_layers() + 1);
  for (double w : model.weights()) shares.push_back(w / total);
  shares.push_back(model.bias() / total);
  return shares;
}

namespace {

void check_layers(const DacModel& model, const DensityMatrix& densities) {
  if (densities.layer_names != model.layer_names() ||
      densities.values.cols() != model.num_layers()) {
    throw ConfigError("density layers do not match the DAC model layers");
  }
}

inline double scale_of(const DacModel& model, std::span<const float> s) {
  double v = model.bias();
  for (std::size_t l = 0; l < s.size(); ++l) v += model.weights()[l] * static_cast<double>(s[l]);
  return v;
}

}  // namespace

std::vector<double> scale_factor(const DacModel& model, const DensityMatrix& densities) {
  check_layers(model, densities);
  std::vector<double> out(densities.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    const auto s = densities.values.row(n);
    for (float v : s) {
      if (v < 0.0f) throw DataError("scale_factor: negative density value");
    }
    out[n] = scale_of(model, s);
  }
  return out;
}

DenseMatrix rescale_logits(const DacModel& model, const DenseMatrix& logits,
                           const DensityMatrix& densities) {
  if (logits.rows() != densities.size()) {
    throw ShapeError("rescale_logits: " + std::to_string(logits.rows()) + " logit rows, " +
                     std::to_string(densities.size()) + " density rows");
  }
  const auto scale = scale_factor(model, densities);
  DenseMatrix out(logits.rows(), logits.cols());
  parallel_for(logits.rows(), [&](std::size_t begin, std::size_t end) {
    std::vector<double> buf(logits.cols());
    for (std::size_t n = begin; n < end; ++n) {
      const auto in = logits.row(n);
      for (std::size_t c = 0; c < in.size(); ++c) buf[c] = static_cast<double>(in[c]) / scale[n];
      round_preserving_argmax(buf, argmax(in), out.row(n));
    }
  });
  return out;
}

SquaredErrorObjective::SquaredErrorObjective(const DenseMatrix& logits, const LabelVector& labels,
                                             const DenseMatrix& densities)
    : logits_(&logits), labels_(&labels), densities_(&densities) {
  if (labels.size() != logits.rows() || densities.rows() != logits.rows()) {
    throw ShapeError("SquaredErrorObjective: row counts differ");
  }
}

double SquaredErrorObjective::value(std::span<const double> params) const {
  std::vector<double> unused(num_params());
  return value_and_gradient(params, unused);
}

double SquaredErrorObjective::value_and_gradient(std::span<const double> params,
                                                 std::span<double> grad) const {
  const std::size_t layers = densities_->cols();
  const std::size_t classes = logits_->cols();
  const std::size_t width = layers + 2;  // loss, d/dw0, d/dw1..wL
  auto totals = deterministic_sum_vector(logits_->rows(), width, [&](std::size_t n, double* acc) {
    const auto z = logits_->row(n);
    const auto s = densities_->row(n);
    double scale = params[0];
    for (std::size_t l = 0; l < layers; ++l) scale += params[l + 1] * static_cast<double>(s[l]);

    double buf[256];
    std::vector<double> heap;
    double* p = buf;
    if (classes > 256) {
      heap.resize(classes);
      p = heap.data();
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) {
      p[c] = static_cast<double>(z[c]) / scale;
      mx = std::max(mx, p[c]);
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      p[c] = std::exp(p[c] - mx);
      sum += p[c];
    }
    const auto y = static_cast<std::size_t>((*labels_)[n]);
    double loss = 0.0;
    double inner = 0.0;  // sum_c (p_c - I_c) p_c
    for (std::size_t c = 0; c < classes; ++c) {
      p[c] /= sum;
      const double r = p[c] - (c == y ? 1.0 : 0.0);
      loss += r * r;
      inner += r * p[c];
    }
    // dL/du_j = 2 p_j ((p_j - I_j) - inner), u = z / S, du_j/dS = -z_j / S^2.
    double d_scale = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double r = p[c] - (c == y ? 1.0 : 0.0);
      d_scale += 2.0 * p[c] * (r - inner) * static_cast<double>(z[c]);
    }
    d_scale *= -1.0 / (scale * scale);
    acc[0] += loss;
    acc[1] += d_scale;
    for (std::size_t l = 0; l < layers; ++l) acc[l + 2] += d_scale * static_cast<double>(s[l]);
  });
  for (std::size_t j = 0; j + 1 < width; ++j) grad[j] = totals[j + 1];
  return totals[0];
}

DacFit fit_dac(const CalibrationDataset& val, const DensityMatrix& densities,
               const DacFitOptions& options) {
  const LabelVector& labels = val.require_labels();
  if (val.size() < 2) throw ConfigError("fit_dac: need at least 2 validation samples");
  if (densities.size() != val.size()) {
    throw ShapeError("fit_dac: density rows differ from validation rows");
  }
  if (densities.values.cols() != densities.layer_names.size()) {
    throw ConfigError("fit_dac: density matrix columns differ from layer names");
  }
  const std::size_t layers = densities.num_layers();
  const SquaredErrorObjective objective(val.logits, labels, densities.values);

  // Bias-only initialization: best single temperature on the same objective.
  std::vector<double> params(layers + 1, 0.0);
  const double log_bias = golden_section_minimize(
      [&](double t) {
        params[0] = std::exp(t);
        return objective.value(params);
      },
      options.log_bias_lo, options.log_bias_hi, 1e-8);
  params.assign(layers + 1, 0.0);
  params[0] = std::max(std::exp(log_bias), kBiasFloor);

  std::vector<double> lower(layers + 1, 0.0);
  lower[0] = kBiasFloor;
  const auto result = minimize_lower_bounded(
      [&](std::span<const double> x, std::span<double> g) { return objective.value_and_gradient(x, g); },
      params, lower, options.optimizer);

  std::vector<double> weights(result.x.begin() + 1, result.x.end());
  std::vector<int> ks = densities.k_per_layer;
  if (ks.size() != layers) ks.clear();
  DacFit fit{DacModel(densities.layer_names, std::move(weights), result.x[0], std::move(ks)), {}};
  fit.report.final_loss = result.value;
  fit.report.initial_loss = result.initial_value;
  fit.report.iterations = result.iterations;
  fit.report.initial_bias = params[0];
  fit.report.converged = result.converged;
  fit.report.weight_shares = weight_shares(fit.model);
  return fit;
}

DenseMatrix apply_dac(const DacModel& model, const CalibrationDataset& dataset,
                      std::span<const KnnIndex> indices) {
  std::vector<KnnIndex> ordered;
  ordered.reserve(model.num_layers());
  for (const auto& name : model.layer_names()) {
    const auto it = std::find_if(indices.begin(), indices.end(),
                                 [&](const KnnIndex& i) { return i.layer_name() == name; });
    if (it == indices.end()) throw ConfigError("apply_dac: no index for layer '" + name + "'");
    ordered.push_back(*it);
  }
  return rescale_logits(model, dataset.logits, density_profile_for(dataset, ordered));
}

}  // namespace dacal
