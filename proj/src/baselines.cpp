#include "dacal/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "dacal/error.hpp"
#include "dacal/optim.hpp"
#include "dacal/parallel.hpp"
#include "dacal/preprocess.hpp"

namespace dacal {
namespace {

void check_inputs(const DenseMatrix& logits, const LabelVector& labels) {
  if (labels.size() != logits.rows()) throw ShapeError("label count differs from logit rows");
  if (logits.rows() < 2) throw ConfigError("calibrator fit needs at least 2 samples");
  if (static_cast<std::size_t>(labels.num_classes()) != logits.cols()) {
    throw ShapeError("label class count differs from logit columns");
  }
  if (!all_finite(logits)) throw DataError("non-finite logits");
}

// Mean NLL and its first two derivatives with respect to beta = 1/T.
struct NllDerivatives {
  double value;
  double d1;
  double d2;
};

NllDerivatives nll_in_beta(const DenseMatrix& logits, const LabelVector& labels, double beta) {
  const std::size_t classes = logits.cols();
  auto totals = deterministic_sum_vector(logits.rows(), 3, [&](std::size_t n, double* acc) {
    const auto z = logits.row(n);
    double mx = -std::numeric_limits<double>::infinity();
    for (float v : z) mx = std::max(mx, beta * v);
    double sum = 0.0, mean = 0.0, second = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double e = std::exp(beta * z[c] - mx);
      sum += e;
      mean += e * z[c];
      second += e * static_cast<double>(z[c]) * z[c];
    }
    mean /= sum;
    second /= sum;
    const double zy = z[static_cast<std::size_t>(labels[n])];
    acc[0] += mx + std::log(sum) - beta * zy;
    acc[1] += mean - zy;
    acc[2] += second - mean * mean;
  });
  const double n = static_cast<double>(logits.rows());
  return {totals[0] / n, totals[1] / n, totals[2] / n};
}

}  // namespace

double temperature_nll(const DenseMatrix& logits, const LabelVector& labels, double temperature) {
  return nll_in_beta(logits, labels, 1.0 / temperature).value;
}

TempScaler fit_ts(const DenseMatrix& logits, const LabelVector& labels) {
  check_inputs(logits, labels);
  const double lo = std::log(kMinTemperature);
  const double hi = std::log(kMaxTemperature);
  double log_t = golden_section_minimize(
      [&](double t) { return nll_in_beta(logits, labels, std::exp(-t)).value; }, lo, hi, 1e-4);

  // The NLL is convex in beta = 1/T, so Newton steps in beta converge fast.
  double current = nll_in_beta(logits, labels, std::exp(-log_t)).value;
  for (int iter = 0; iter < 50; ++iter) {
    const double beta = std::exp(-log_t);
    const auto d = nll_in_beta(logits, labels, beta);
    if (!(d.d2 > 0.0)) break;
    const double beta_new = std::clamp(beta - d.d1 / d.d2, 1.0 / kMaxTemperature, 1.0 / kMinTemperature);
    const double log_t_new = -std::log(beta_new);
    const double value_new = nll_in_beta(logits, labels, beta_new).value;
    if (value_new > current) break;
    const double delta = std::abs(log_t_new - log_t);
    log_t = log_t_new;
    current = value_new;
    if (delta < 1e-6) break;
  }
  return TempScaler{std::clamp(std::exp(log_t), kMinTemperature, kMaxTemperature)};
}

DenseMatrix apply_ts(const TempScaler& model, const DenseMatrix& logits) {
  DenseMatrix out(logits.rows(), logits.cols());
  parallel_for(logits.rows(), [&](std::size_t begin, std::size_t end) {
    std::vector<double> buf(logits.cols());
    for (std::size_t n = begin; n < end; ++n) {
      const auto z = logits.row(n);
      for (std::size_t c = 0; c < z.size(); ++c) buf[c] = z[c] / model.temperature;
      softmax_inplace(buf);
      round_preserving_argmax(buf, argmax(z), out.row(n));
    }
  });
  return out;
}

namespace {

// Mixture components per class entry: (softmax(z/T), softmax(z), 1/C).
template <typename Visit>
void for_each_component(const DenseMatrix& logits, double temperature, std::size_t begin,
                        std::size_t end, Visit&& visit) {
  const std::size_t classes = logits.cols();
  std::vector<double> scaled(classes);
  std::vector<double> plain(classes);
  const double uniform = 1.0 / static_cast<double>(classes);
  for (std::size_t n = begin; n < end; ++n) {
    const auto z = logits.row(n);
    for (std::size_t c = 0; c < classes; ++c) {
      scaled[c] = z[c] / temperature;
      plain[c] = z[c];
    }
    softmax_inplace(scaled);
    softmax_inplace(plain);
    visit(n, scaled, plain, uniform);
  }
}

}  // namespace

double ets_squared_error(const EtsModel& model, const DenseMatrix& logits, const LabelVector& labels) {
  double total = 0.0;
  const auto& w = model.mix_weights;
  for_each_component(logits, model.temperature, 0, logits.rows(),
                     [&](std::size_t n, const std::vector<double>& a, const std::vector<double>& b,
                         double u) {
                       for (std::size_t c = 0; c < a.size(); ++c) {
                         const double p = w[0] * a[c] + w[1] * b[c] + w[2] * u;
                         const double r = p - (static_cast<std::size_t>(labels[n]) == c ? 1.0 : 0.0);
                         total += r * r;
                       }
                     });
  return total;
}

std::array<double, 3> project_to_simplex(std::array<double, 3> v) {
  std::array<double, 3> sorted = v;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    cumulative += sorted[i];
    const double t = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (sorted[i] - t > 0.0) theta = t;
  }
  for (double& x : v) x = std::max(0.0, x - theta);
  return v;
}

EtsModel fit_ets(const DenseMatrix& logits, const LabelVector& labels) {
  EtsModel model;
  model.temperature = fit_ts(logits, labels).temperature;

  // The objective is the quadratic w'Gw - 2b'w + N; accumulate G and b once.
  double gram[3][3] = {};
  double lin[3] = {};
  for_each_component(logits, model.temperature, 0, logits.rows(),
                     [&](std::size_t n, const std::vector<double>& a, const std::vector<double>& b,
                         double u) {
                       for (std::size_t c = 0; c < a.size(); ++c) {
                         const double comp[3] = {a[c], b[c], u};
                         const double target = static_cast<std::size_t>(labels[n]) == c ? 1.0 : 0.0;
                         for (int i = 0; i < 3; ++i) {
                           lin[i] += comp[i] * target;
                           for (int j = 0; j < 3; ++j) gram[i][j] += comp[i] * comp[j];
                         }
                       }
                     });
  const double constant = static_cast<double>(logits.rows());
  auto objective = [&](const std::array<double, 3>& w) {
    double v = constant;
    for (int i = 0; i < 3; ++i) {
      v -= 2.0 * lin[i] * w[i];
      for (int j = 0; j < 3; ++j) v += w[i] * gram[i][j] * w[j];
    }
    return v;
  };
  // Exact minimum over the simplex: the optimum lies in the relative interior
  // of some face, so solve the equality-constrained problem on every face and
  // keep the best feasible point. Projected gradient stalls here because the
  // T and uniform components are nearly collinear when T is large.
  std::array<double, 3> w = model.mix_weights;
  double f = objective(w);
  auto consider = [&](const std::array<double, 3>& cand) {
    for (double v : cand) {
      if (!(v >= 0.0)) return;
    }
    const double value = objective(cand);
    if (value < f) {
      f = value;
      w = cand;
    }
  };
  for (int i = 0; i < 3; ++i) {
    std::array<double, 3> vertex{};
    vertex[i] = 1.0;
    consider(vertex);
  }
  // Edge i-j: w = t e_i + (1 - t) e_j, f(t) = a t^2 + b t + const.
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      const double curv = gram[i][i] - 2.0 * gram[i][j] + gram[j][j];
      if (!(curv > 0.0)) continue;
      const double slope = 2.0 * (gram[i][j] - gram[j][j]) - 2.0 * (lin[i] - lin[j]);
      const double t = -slope / (2.0 * curv);
      if (t <= 0.0 || t >= 1.0) continue;
      std::array<double, 3> cand{};
      cand[i] = t;
      cand[j] = 1.0 - t;
      consider(cand);
    }
  }
  // Interior: G w + mu 1 = b, 1'w = 1. A singular system means a flat
  // direction, whose minimizers also reach the boundary handled above.
  double kkt[4][5] = {};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) kkt[i][j] = gram[i][j];
    kkt[i][3] = 1.0;
    kkt[i][4] = lin[i];
    kkt[3][i] = 1.0;
  }
  kkt[3][4] = 1.0;
  double scale = 0.0;
  for (int i = 0; i < 3; ++i) scale = std::max(scale, std::abs(gram[i][i]));
  bool singular = false;
  for (int col = 0; col < 4 && !singular; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 4; ++r) {
      if (std::abs(kkt[r][col]) > std::abs(kkt[pivot][col])) pivot = r;
    }
    if (!(std::abs(kkt[pivot][col]) > 1e-12 * std::max(scale, 1.0))) {
      singular = true;
      break;
    }
    std::swap(kkt[pivot], kkt[col]);
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double factor = kkt[r][col] / kkt[col][col];
      for (int c = col; c < 5; ++c) kkt[r][c] -= factor * kkt[col][c];
    }
  }
  if (!singular) {
    std::array<double, 3> cand{};
    for (int i = 0; i < 3; ++i) cand[i] = kkt[i][4] / kkt[i][i];
    const double total = cand[0] + cand[1] + cand[2];
    for (double& v : cand) v /= total;  // remove rounding drift off the plane
    consider(cand);
  }
  model.mix_weights = w;
  return model;
}

DenseMatrix apply_ets(const EtsModel& model, const DenseMatrix& logits) {
  DenseMatrix out(logits.rows(), logits.cols());
  const auto& w = model.mix_weights;
  parallel_for(logits.rows(), [&](std::size_t begin, std::size_t end) {
    std::vector<double> mixed(logits.cols());
    for_each_component(logits, model.temperature, begin, end,
                       [&](std::size_t n, const std::vector<double>& a,
                           const std::vector<double>& b, double u) {
                         for (std::size_t c = 0; c < a.size(); ++c) {
                           mixed[c] = w[0] * a[c] + w[1] * b[c] + w[2] * u;
                         }
                         round_preserving_argmax(mixed, argmax(logits.row(n)), out.row(n));
                       });
  });
  return out;
}

}  // namespace dacal
