#include "dacal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "dacal/error.hpp"
#include "dacal/preprocess.hpp"

namespace dacal {
namespace {

// Independent stream per purpose so that changing one split's size leaves
// the others untouched.
enum : std::uint32_t {
  kStreamMeans = 1,
  kStreamOodMeans = 2,
  kStreamProjections = 3,
  kStreamTrain = 100,
  kStreamVal = 101,
  kStreamTest = 102,
  kStreamOod = 103,
  kStreamShift = 1000,
};

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
  return std::mt19937_64(seq);
}

// Class means: offset * u plus a class part of norm `norm` orthogonal to u.
DenseMatrix random_means(std::mt19937_64& rng, int classes, std::size_t dims, double norm,
                         double offset, const std::vector<double>& u) {
  std::normal_distribution<double> normal;
  DenseMatrix means(static_cast<std::size_t>(classes), dims);
  std::vector<double> v(dims);
  for (int c = 0; c < classes; ++c) {
    for (double& x : v) x = normal(rng);
    if (offset > 0.0) {
      double along = 0.0;
      for (std::size_t d = 0; d < dims; ++d) along += v[d] * u[d];
      for (std::size_t d = 0; d < dims; ++d) v[d] -= along * u[d];
    }
    double sq = 0.0;
    for (double x : v) sq += x * x;
    const double scale = norm / std::sqrt(sq);
    for (std::size_t d = 0; d < dims; ++d) {
      means(static_cast<std::size_t>(c), d) = static_cast<float>(v[d] * scale + offset * u[d]);
    }
  }
  return means;
}

struct SplitSpec {
  std::string name;
  std::size_t samples;
  double severity;
  bool ood;
  std::uint32_t stream_id;
};

CalibrationDataset make_split(const SynthConfig& config, const SynthModel& model,
                              const SplitSpec& spec) {
  const std::size_t dims = config.dims();
  const std::size_t classes = static_cast<std::size_t>(config.num_classes);
  const std::size_t n = spec.samples;
  const auto names = synth_layer_names(config);
  const DenseMatrix& centers = spec.ood ? model.ood_means : model.means;

  auto rng = stream(config.seed, spec.stream_id);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<std::size_t> pick_class(0, classes - 1);
  std::uniform_int_distribution<std::size_t> pick_scale(0, config.latent_scales.size() - 1);

  DenseMatrix x(n, dims);
  std::vector<std::int32_t> labels(n);
  std::vector<double> point(dims);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = pick_class(rng);
    const double sigma = config.latent_scales[pick_scale(rng)];
    labels[i] = static_cast<std::int32_t>(c);
    for (std::size_t d = 0; d < dims; ++d) point[d] = centers(c, d) + sigma * normal(rng);
    if (spec.severity > 0.0) {
      for (std::size_t d = 0; d < dims; ++d) point[d] += spec.severity * normal(rng);
    }
    for (std::size_t d = 0; d < dims; ++d) x(i, d) = static_cast<float>(point[d]);
  }

  CalibrationDataset out;
  out.split_name = spec.name;
  if (!spec.ood) out.labels = LabelVector(std::move(labels), config.num_classes);

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dims));
  for (std::size_t l = 0; l + 1 < config.layer_dims.size(); ++l) {
    const DenseMatrix& p = model.projections[l];
    DenseMatrix h(n, p.rows());
    for (std::size_t i = 0; i < n; ++i) {
      const auto xi = x.row(i);
      for (std::size_t j = 0; j < p.rows(); ++j) {
        const auto pj = p.row(j);
        double s = 0.0;
        for (std::size_t d = 0; d < dims; ++d) s += static_cast<double>(pj[d]) * xi[d];
        h(i, j) = static_cast<float>(s * inv_sqrt_d + config.layer_noise * normal(rng));
      }
    }
    out.layers.push_back({names[l], std::move(h)});
  }

  out.logits = DenseMatrix(n, classes);
  std::vector<double> half_sq(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    for (float v : model.class_parts.row(c)) half_sq[c] += 0.5 * static_cast<double>(v) * v;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = x.row(i);
    for (std::size_t c = 0; c < classes; ++c) {
      const auto mc = model.class_parts.row(c);
      double s = 0.0;
      for (std::size_t d = 0; d < dims; ++d) s += static_cast<double>(mc[d]) * xi[d];
      out.logits(i, c) = static_cast<float>(config.miscalibration_temperature * (s - half_sq[c]));
    }
  }
  out.layers.push_back({names.back(), std::move(x)});
  return out;
}

bool config_dims_too_small(const SynthConfig& config) {
  return config.feature_offset > 0.0 && config.layer_dims.back() < 2;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_classes < 2) throw ConfigError("synth: num_classes must be at least 2");
  if (layer_dims.empty()) throw ConfigError("synth: at least one layer is required");
  for (std::size_t d : layer_dims) {
    if (d == 0) throw ConfigError("synth: layer dimensions must be positive");
  }
  if (!(separation > 0.0) || !std::isfinite(separation)) {
    throw ConfigError("synth: separation must be positive");
  }
  if (shift_severities.empty() || shift_severities.front() != 0.0) {
    throw ConfigError("synth: shift severities must start at 0");
  }
  for (std::size_t i = 1; i < shift_severities.size(); ++i) {
    if (!(shift_severities[i] >= shift_severities[i - 1]) || !std::isfinite(shift_severities[i])) {
      throw ConfigError("synth: shift severities must be non-decreasing");
    }
  }
  if (latent_scales.empty()) throw ConfigError("synth: latent_scales must be nonempty");
  for (double s : latent_scales) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("synth: latent scales must be positive");
  }
  if (!(feature_offset >= 0.0) || !std::isfinite(feature_offset)) {
    throw ConfigError("synth: feature_offset must be nonnegative");
  }
  if (config_dims_too_small(*this)) {
    throw ConfigError("synth: feature_offset > 0 needs at least 2 dimensions");
  }
  if (!(layer_noise >= 0.0)) throw ConfigError("synth: layer_noise must be nonnegative");
  if (!(miscalibration_temperature > 0.0) || !std::isfinite(miscalibration_temperature)) {
    throw ConfigError("synth: miscalibration_temperature must be positive");
  }
  if (k_max < 1) throw ConfigError("synth: k_max must be positive");
  const std::size_t minimum = static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(k_max);
  for (std::size_t count : {train_samples, val_samples, test_samples, ood_samples}) {
    if (count < minimum) {
      throw ConfigError("synth: every split needs at least num_classes * k_max = " +
                        std::to_string(minimum) + " samples");
    }
  }
}

SynthConfig shift_benchmark_config(std::uint64_t seed) {
  SynthConfig config;
  config.num_classes = 10;
  config.layer_dims = {16, 16, 16};
  config.train_samples = 5000;
  config.val_samples = 2000;
  config.test_samples = 5000;
  config.ood_samples = 5000;
  config.separation = 4.0;
  config.feature_offset = 16.0;
  config.shift_severities = {0.0, 0.25, 0.5, 0.75, 1.0, 1.25};
  config.latent_scales = {0.7, 1.0, 1.4};
  config.layer_noise = 0.1;
  config.miscalibration_temperature = 3.0;
  config.k_max = 200;
  config.seed = seed;
  return config;
}

std::string shift_split_name(std::size_t severity_index) {
  return "shift_" + std::to_string(severity_index);
}

std::vector<std::string> synth_layer_names(const SynthConfig& config) {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < config.layer_dims.size(); ++l) {
    names.push_back("layer" + std::to_string(l + 1));
  }
  return names;
}

SynthModel synth_model(const SynthConfig& config) {
  config.validate();
  SynthModel model;
  auto rng_means = stream(config.seed, kStreamMeans);
  std::vector<double> u(config.dims());
  {
    std::normal_distribution<double> normal;
    double sq = 0.0;
    for (double& x : u) {
      x = normal(rng_means);
      sq += x * x;
    }
    for (double& x : u) x /= std::sqrt(sq);
  }
  model.means = random_means(rng_means, config.num_classes, config.dims(), config.separation,
                             config.feature_offset, u);
  model.class_parts = model.means;
  for (std::size_t c = 0; c < model.class_parts.rows(); ++c) {
    for (std::size_t d = 0; d < config.dims(); ++d) {
      model.class_parts(c, d) =
          static_cast<float>(model.means(c, d) - config.feature_offset * u[d]);
    }
  }
  auto rng_ood = stream(config.seed, kStreamOodMeans);
  model.ood_means = random_means(rng_ood, config.num_classes, config.dims(), config.separation,
                                 config.feature_offset, u);
  auto rng_proj = stream(config.seed, kStreamProjections);
  std::normal_distribution<float> normal;
  for (std::size_t l = 0; l + 1 < config.layer_dims.size(); ++l) {
    DenseMatrix p(config.layer_dims[l], config.dims());
    for (float& v : p.data()) v = normal(rng_proj);
    model.projections.push_back(std::move(p));
  }
  return model;
}

std::map<std::string, CalibrationDataset> generate(const SynthConfig& config) {
  const SynthModel model = synth_model(config);
  std::vector<SplitSpec> specs{
      {"train", config.train_samples, 0.0, false, kStreamTrain},
      {"val", config.val_samples, 0.0, false, kStreamVal},
      {"test", config.test_samples, 0.0, false, kStreamTest},
      {"ood", config.ood_samples, 0.0, true, kStreamOod},
  };
  for (std::size_t i = 0; i < config.shift_severities.size(); ++i) {
    specs.push_back({shift_split_name(i), config.test_samples, config.shift_severities[i], false,
                     kStreamShift + static_cast<std::uint32_t>(i)});
  }
  std::map<std::string, CalibrationDataset> out;
  for (const auto& spec : specs) out.emplace(spec.name, make_split(config, model, spec));
  return out;
}

namespace {

template <typename Visit>
void posterior_rows(const SynthConfig& config, const DenseMatrix& features, double severity,
                    Visit&& visit) {
  const SynthModel model = synth_model(config);
  const std::size_t dims = config.dims();
  if (features.cols() != dims) throw ShapeError("bayes posterior: feature width differs from D");
  if (!(severity >= 0.0)) throw ConfigError("bayes posterior: severity must be nonnegative");
  const std::size_t classes = static_cast<std::size_t>(config.num_classes);
  const double log_prior = -std::log(static_cast<double>(config.latent_scales.size()));

  std::vector<double> log_post(classes);
  std::vector<double> terms(config.latent_scales.size());
  for (std::size_t n = 0; n < features.rows(); ++n) {
    const auto x = features.row(n);
    for (std::size_t c = 0; c < classes; ++c) {
      const auto mu = model.means.row(c);
      double sq = 0.0;
      for (std::size_t d = 0; d < dims; ++d) {
        const double r = static_cast<double>(x[d]) - mu[d];
        sq += r * r;
      }
      // log sum over scales of prior * N(x; mu_c, v I), dropping the 2 pi term.
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < terms.size(); ++j) {
        const double sigma = config.latent_scales[j];
        const double v = sigma * sigma + severity * severity;
        terms[j] = log_prior - 0.5 * static_cast<double>(dims) * std::log(v) - sq / (2.0 * v);
        mx = std::max(mx, terms[j]);
      }
      double s = 0.0;
      for (double t : terms) s += std::exp(t - mx);
      log_post[c] = mx + std::log(s);
    }
    softmax_inplace(log_post);
    visit(n, std::span<const double>(log_post));
  }
}

}  // namespace

DenseMatrix bayes_posterior(const SynthConfig& config, const DenseMatrix& features,
                            double severity) {
  DenseMatrix out(features.rows(), static_cast<std::size_t>(config.num_classes));
  posterior_rows(config, features, severity, [&](std::size_t n, std::span<const double> p) {
    round_preserving_argmax(p, argmax(p), out.row(n));
  });
  return out;
}

std::vector<double> bayes_confidence(const SynthConfig& config, const DenseMatrix& features,
                                     double severity) {
  std::vector<double> out(features.rows());
  posterior_rows(config, features, severity, [&](std::size_t n, std::span<const double> p) {
    out[n] = *std::max_element(p.begin(), p.end());
  });
  return out;
}

}  // namespace dacal
