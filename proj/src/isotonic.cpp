#include "dacal/isotonic.hpp"

#include <algorithm>
#include <numeric>

#include "dacal/error.hpp"
#include "dacal/parallel.hpp"
#include "dacal/preprocess.hpp"

namespace dacal {

std::vector<double> pav_fit(std::span<const double> y, std::span<const double> weights) {
  const std::size_t n = y.size();
  if (!weights.empty() && weights.size() != n) throw ShapeError("pav_fit: weight size mismatch");
  struct Block {
    double sum;     // weighted sum of y
    double weight;  // total weight
    std::size_t count;
  };
  std::vector<Block> blocks;
  blocks.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (!(w > 0.0)) throw ConfigError("pav_fit: weights must be positive");
    blocks.push_back({y[i] * w, w, 1});
    // Merge while the previous block mean is not below the last one.
    while (blocks.size() > 1) {
      const Block& last = blocks.back();
      const Block& prev = blocks[blocks.size() - 2];
      if (prev.sum * last.weight < last.sum * prev.weight) break;
      Block merged{prev.sum + last.sum, prev.weight + last.weight, prev.count + last.count};
      blocks.pop_back();
      blocks.back() = merged;
    }
  }
  std::vector<double> fitted;
  fitted.reserve(n);
  for (const auto& b : blocks) fitted.insert(fitted.end(), b.count, b.sum / b.weight);
  return fitted;
}

IsotonicMap::IsotonicMap(std::vector<double> breakpoints, std::vector<double> values)
    : breakpoints_(std::move(breakpoints)), values_(std::move(values)) {
  if (breakpoints_.empty() || breakpoints_.size() != values_.size()) {
    throw ConfigError("IsotonicMap: breakpoints and values must be nonempty and of equal size");
  }
  for (std::size_t i = 1; i < breakpoints_.size(); ++i) {
    if (!(breakpoints_[i] > breakpoints_[i - 1])) {
      throw ConfigError("IsotonicMap: breakpoints must be strictly increasing");
    }
    if (values_[i] < values_[i - 1]) throw ConfigError("IsotonicMap: values must be non-decreasing");
  }
}

IsotonicMap IsotonicMap::fit(std::span<const double> x, std::span<const double> y) {
  if (x.empty()) throw ConfigError("isotonic fit on empty input");
  if (x.size() != y.size()) throw ShapeError("isotonic fit: x and y sizes differ");
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });

  // Pool ties in x into one weighted observation.
  std::vector<double> ux, uy, uw;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double sum = 0.0;
    while (j < order.size() && x[order[j]] == x[order[i]]) sum += y[order[j++]];
    ux.push_back(x[order[i]]);
    uy.push_back(sum / static_cast<double>(j - i));
    uw.push_back(static_cast<double>(j - i));
    i = j;
  }
  const auto fitted = pav_fit(uy, uw);

  // Keep one breakpoint per constant block, at its lowest abscissa.
  std::vector<double> breaks, values;
  for (std::size_t i = 0; i < ux.size(); ++i) {
    if (values.empty() || fitted[i] != values.back()) {
      breaks.push_back(ux[i]);
      values.push_back(fitted[i]);
    }
  }
  return IsotonicMap(std::move(breaks), std::move(values));
}

double IsotonicMap::operator()(double x) const {
  const auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), x);
  if (it == breakpoints_.begin()) return values_.front();
  return values_[static_cast<std::size_t>(it - breakpoints_.begin()) - 1];
}

namespace {

void check_probs(const DenseMatrix& probs, const LabelVector& labels) {
  if (probs.rows() == 0) throw ConfigError("isotonic calibration on empty input");
  if (labels.size() != probs.rows()) throw ShapeError("label count differs from probability rows");
  if (static_cast<std::size_t>(labels.num_classes()) != probs.cols()) {
    throw ShapeError("label class count differs from probability columns");
  }
}

}  // namespace

IsotonicMap fit_irm(const DenseMatrix& probs, const LabelVector& labels) {
  check_probs(probs, labels);
  const std::size_t classes = probs.cols();
  std::vector<double> x(probs.size());
  std::vector<double> y(probs.size());
  for (std::size_t n = 0; n < probs.rows(); ++n) {
    for (std::size_t c = 0; c < classes; ++c) {
      x[n * classes + c] = probs(n, c);
      y[n * classes + c] = static_cast<std::size_t>(labels[n]) == c ? 1.0 : 0.0;
    }
  }
  return IsotonicMap::fit(x, y);
}

DenseMatrix apply_irm(const IsotonicMap& map, const DenseMatrix& probs) {
  DenseMatrix out(probs.rows(), probs.cols());
  parallel_for(probs.rows(), [&](std::size_t begin, std::size_t end) {
    std::vector<double> mapped(probs.cols());
    for (std::size_t n = begin; n < end; ++n) {
      const auto p = probs.row(n);
      double sum = 0.0;
      for (std::size_t c = 0; c < p.size(); ++c) {
        mapped[c] = std::clamp(map(p[c]), kIsotonicFloor, 1.0) + kIsotonicTieBreak * p[c];
        sum += mapped[c];
      }
      for (double& v : mapped) v /= sum;
      round_preserving_argmax(mapped, argmax(p), out.row(n));
    }
  });
  return out;
}

OvaIsotonic fit_ir(const DenseMatrix& probs, const LabelVector& labels) {
  check_probs(probs, labels);
  OvaIsotonic model;
  std::vector<double> x(probs.rows());
  std::vector<double> y(probs.rows());
  for (std::size_t c = 0; c < probs.cols(); ++c) {
    for (std::size_t n = 0; n < probs.rows(); ++n) {
      x[n] = probs(n, c);
      y[n] = static_cast<std::size_t>(labels[n]) == c ? 1.0 : 0.0;
    }
    model.maps.push_back(IsotonicMap::fit(x, y));
  }
  return model;
}

DenseMatrix apply_ir(const OvaIsotonic& model, const DenseMatrix& probs) {
  if (model.maps.size() != probs.cols()) throw ShapeError("apply_ir: class count mismatch");
  DenseMatrix out(probs.rows(), probs.cols());
  parallel_for(probs.rows(), [&](std::size_t begin, std::size_t end) {
    std::vector<double> mapped(probs.cols());
    for (std::size_t n = begin; n < end; ++n) {
      const auto p = probs.row(n);
      double sum = 0.0;
      for (std::size_t c = 0; c < p.size(); ++c) {
        mapped[c] = std::clamp(model.maps[c](p[c]), kIsotonicFloor, 1.0);
        sum += mapped[c];
      }
      auto row = out.row(n);
      for (std::size_t c = 0; c < p.size(); ++c) row[c] = static_cast<float>(mapped[c] / sum);
    }
  });
  return out;
}

}  // namespace dacal
