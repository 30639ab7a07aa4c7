#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dacal/dataset.hpp"
#include "dacal/matrix.hpp"

namespace dacal {

/// Gaussian class-conditional benchmark with a graded covariate shift.
///
/// Class means are mu_c = feature_offset * u + m_c with |m_c| = separation
/// and m_c orthogonal to a shared unit vector u. A sample of class c with
/// latent noise scale sigma (drawn uniformly from `latent_scales`) is
///   x = mu_c + sigma * e + s * g,   e, g ~ N(0, I_D)
/// where s is the shift severity of its split. The last layer exports x; every
/// lower layer l exports P_l x / sqrt(D) + layer_noise * N(0, I), with fixed
/// random Gaussian projections P_l. Logits are the linear readout
///   T_mis * (m_c . x - |m_c|^2 / 2),
/// which is the exact class log-posterior (up to a constant) when sigma = 1,
/// s = 0 and T_mis = 1. Samples with a larger effective variance
/// sigma^2 + s^2 are overconfident by that factor, and they also lie further
/// from the training data, which is what the density scaler can pick up.
struct SynthConfig {
  int num_classes = 10;
  std::vector<std::size_t> layer_dims{16, 16, 16};  // last entry is D
  std::size_t train_samples = 5000;
  std::size_t val_samples = 2000;
  std::size_t test_samples = 5000;  // also used for every shifted split
  std::size_t ood_samples = 5000;
  double separation = 4.0;  // norm of the class-specific part of every mean
  // Norm of a mean component shared by all classes (orthogonal to the class
  // parts). It cancels in the logits but keeps L2-normalized features from
  // collapsing onto random directions, much like the large common mean of
  // post-activation network features.
  double feature_offset = 0.0;
  std::vector<double> shift_severities{0.0, 0.25, 0.5, 0.75, 1.0, 1.25};
  std::vector<double> latent_scales{1.0};
  double layer_noise = 0.1;
  double miscalibration_temperature = 1.0;
  int k_max = 10;  // every split must hold at least num_classes * k_max samples
  std::uint64_t seed = 0;

  /// Throws ConfigError.
  void validate() const;
  std::size_t dims() const { return layer_dims.back(); }
};

/// The shift benchmark used by the acceptance suite and `dacal synth
/// --preset shift`: 10 classes, three 16-d layers, overconfidence factor 3,
/// severities 0, 0.25, ..., 1.25 and latent scales {0.7, 1, 1.4}.
SynthConfig shift_benchmark_config(std::uint64_t seed = 0);

/// Split names produced by generate(): "train", "val", "test", one
/// "shift_<i>" per severity (index i into shift_severities) and "ood".
std::string shift_split_name(std::size_t severity_index);

/// Layer names "layer1" .. "layerL".
std::vector<std::string> synth_layer_names(const SynthConfig& config);

/// Fixed parameters of the generating process, derived from the seed.
struct SynthModel {
  DenseMatrix means;      // C x D
  DenseMatrix class_parts;  // C x D, means without the shared offset
  DenseMatrix ood_means;  // C x D, drawn independently of `means`
  std::vector<DenseMatrix> projections;  // one d_l x D matrix per lower layer
};

SynthModel synth_model(const SynthConfig& config);

/// All splits, keyed by name. Fully determined by the config.
std::map<std::string, CalibrationDataset> generate(const SynthConfig& config);

/// Exact posterior top-class probability of each row of `features` (the
/// last-layer x) under the in-domain mixture at shift std `severity`. The
/// latent noise scale is marginalized.
std::vector<double> bayes_confidence(const SynthConfig& config, const DenseMatrix& features,
                                     double severity);

/// Full posterior over classes for each row; same model as above.
DenseMatrix bayes_posterior(const SynthConfig& config, const DenseMatrix& features,
                            double severity);

}  // namespace dacal
