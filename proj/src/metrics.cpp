#include "dacal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dacal/error.hpp"

namespace dacal {
namespace {

void check(const DenseMatrix& probs, const LabelVector& labels) {
  if (probs.rows() == 0) throw ConfigError("metric on empty input");
  if (labels.size() != probs.rows()) throw ShapeError("label count differs from probability rows");
  if (static_cast<std::size_t>(labels.num_classes()) != probs.cols()) {
    throw ShapeError("label class count differs from probability columns");
  }
}

// Bin m (0-based) such that m/M < p <= (m+1)/M, with p <= 0 in bin 0. The
// ceil guess is corrected against the same edge expressions used for
// reporting, so assignment agrees with the half-open edge definition.
std::size_t width_bin(double p, int bins) {
  if (p <= 0.0) return 0;
  const double m_real = static_cast<double>(bins);
  int m = static_cast<int>(std::ceil(p * m_real));
  m = std::clamp(m, 1, bins);
  while (m > 1 && p <= static_cast<double>(m - 1) / m_real) --m;
  while (m < bins && p > static_cast<double>(m) / m_real) ++m;
  return static_cast<std::size_t>(m - 1);
}

// ECE over (confidence, hit) pairs.
EceResult binned_ece(std::span<const double> conf, std::span<const double> hit, int bins,
                     BinScheme scheme) {
  if (bins < 1) throw ConfigError("number of bins must be positive");
  const std::size_t n = conf.size();
  if (n == 0) throw ConfigError("ECE on empty input");
  EceResult result;
  result.stats.scheme = scheme;
  result.stats.total = n;
  auto& out = result.stats.bins;
  out.resize(static_cast<std::size_t>(bins));
  std::vector<double> conf_sum(out.size(), 0.0);
  std::vector<double> hit_sum(out.size(), 0.0);

  if (scheme == BinScheme::equal_width) {
    for (std::size_t m = 0; m < out.size(); ++m) {
      out[m].lower = static_cast<double>(m) / bins;
      out[m].upper = static_cast<double>(m + 1) / bins;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t m = width_bin(conf[i], bins);
      ++out[m].count;
      conf_sum[m] += conf[i];
      hit_sum[m] += hit[i];
    }
  } else {
    if (n < static_cast<std::size_t>(bins)) {
      throw ConfigError("equal-mass ECE needs at least as many samples as bins");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return conf[a] < conf[b]; });
    const std::size_t base = n / static_cast<std::size_t>(bins);
    const std::size_t extra = n % static_cast<std::size_t>(bins);
    std::size_t pos = 0;
    for (std::size_t m = 0; m < out.size(); ++m) {
      const std::size_t size = base + (m < extra ? 1 : 0);
      out[m].count = size;
      out[m].lower = conf[order[pos]];
      out[m].upper = conf[order[pos + size - 1]];
      for (std::size_t j = pos; j < pos + size; ++j) {
        conf_sum[m] += conf[order[j]];
        hit_sum[m] += hit[order[j]];
      }
      pos += size;
    }
  }

  double ece = 0.0;
  for (std::size_t m = 0; m < out.size(); ++m) {
    if (out[m].count == 0) continue;
    const double count = static_cast<double>(out[m].count);
    out[m].mean_confidence = conf_sum[m] / count;
    out[m].accuracy = hit_sum[m] / count;
    ece += count / static_cast<double>(n) * std::abs(out[m].accuracy - out[m].mean_confidence);
  }
  result.ece = ece;
  return result;
}

void top_class(const DenseMatrix& probs, const LabelVector& labels, std::vector<double>& conf,
               std::vector<double>& hit) {
  conf.resize(probs.rows());
  hit.resize(probs.rows());
  for (std::size_t n = 0; n < probs.rows(); ++n) {
    const auto row = probs.row(n);
    const std::size_t pred = argmax(row);
    conf[n] = row[pred];
    hit[n] = static_cast<std::int32_t>(pred) == labels[n] ? 1.0 : 0.0;
  }
}

}  // namespace

EceResult ece_equal_width(const DenseMatrix& probs, const LabelVector& labels, int bins) {
  check(probs, labels);
  std::vector<double> conf, hit;
  top_class(probs, labels, conf, hit);
  return binned_ece(conf, hit, bins, BinScheme::equal_width);
}

EceResult ece_equal_mass(const DenseMatrix& probs, const LabelVector& labels, int bins) {
  check(probs, labels);
  std::vector<double> conf, hit;
  top_class(probs, labels, conf, hit);
  return binned_ece(conf, hit, bins, BinScheme::equal_mass);
}

ClasswiseEce classwise_ece(const DenseMatrix& probs, const LabelVector& labels, int bins) {
  check(probs, labels);
  ClasswiseEce result;
  std::vector<double> conf(probs.rows());
  std::vector<double> hit(probs.rows());
  for (std::size_t c = 0; c < probs.cols(); ++c) {
    for (std::size_t n = 0; n < probs.rows(); ++n) {
      conf[n] = probs(n, c);
      hit[n] = static_cast<std::size_t>(labels[n]) == c ? 1.0 : 0.0;
    }
    const double e = binned_ece(conf, hit, bins, BinScheme::equal_width).ece;
    result.per_class.push_back(e);
    result.total += e;
  }
  return result;
}

double brier(const DenseMatrix& probs, const LabelVector& labels) {
  check(probs, labels);
  double total = 0.0;
  for (std::size_t n = 0; n < probs.rows(); ++n) {
    const auto row = probs.row(n);
    double s = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      const double r = row[c] - (static_cast<std::size_t>(labels[n]) == c ? 1.0 : 0.0);
      s += r * r;
    }
    total += s;
  }
  return total / static_cast<double>(probs.rows());
}

double nll(const DenseMatrix& probs, const LabelVector& labels) {
  check(probs, labels);
  double total = 0.0;
  for (std::size_t n = 0; n < probs.rows(); ++n) {
    const double p = probs(n, static_cast<std::size_t>(labels[n]));
    total -= std::log(std::max(p, kNllFloor));
  }
  return total / static_cast<double>(probs.rows());
}

double accuracy(const DenseMatrix& probs, const LabelVector& labels) {
  check(probs, labels);
  std::size_t correct = 0;
  for (std::size_t n = 0; n < probs.rows(); ++n) {
    if (static_cast<std::int32_t>(argmax(probs.row(n))) == labels[n]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(probs.rows());
}

BinStats reliability_data(const DenseMatrix& probs, const LabelVector& labels, int bins,
                          BinScheme scheme) {
  return scheme == BinScheme::equal_width ? ece_equal_width(probs, labels, bins).stats
                                          : ece_equal_mass(probs, labels, bins).stats;
}

double macro_average(std::span<const double> per_condition) {
  if (per_condition.empty()) throw ConfigError("macro_average of no conditions");
  double s = 0.0;
  for (double v : per_condition) s += v;
  return s / static_cast<double>(per_condition.size());
}

std::vector<double> top_confidence(const DenseMatrix& probs) {
  std::vector<double> out(probs.rows());
  for (std::size_t n = 0; n < probs.rows(); ++n) {
    const auto row = probs.row(n);
    out[n] = row.empty() ? 0.0 : *std::max_element(row.begin(), row.end());
  }
  return out;
}

namespace {

void check_ood(const OodScores& s) {
  if (s.in_scores.empty() || s.out_scores.empty()) {
    throw ConfigError("OOD metrics need nonempty in-domain and OOD score sets");
  }
}

// Distinct thresholds in descending order with the number of positive and
// negative samples at exactly that score.
struct Level {
  double score;
  std::size_t positives;
  std::size_t negatives;
};

std::vector<Level> levels(std::span<const double> pos, std::span<const double> neg) {
  std::vector<std::pair<double, bool>> all;
  all.reserve(pos.size() + neg.size());
  for (double v : pos) all.emplace_back(v, true);
  for (double v : neg) all.emplace_back(v, false);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<Level> out;
  for (const auto& [score, is_pos] : all) {
    if (out.empty() || out.back().score != score) out.push_back({score, 0, 0});
    (is_pos ? out.back().positives : out.back().negatives) += 1;
  }
  return out;
}

}  // namespace

double fpr_at_tpr(const OodScores& scores, double tpr_target) {
  check_ood(scores);
  const double n_in = static_cast<double>(scores.in_scores.size());
  const double n_out = static_cast<double>(scores.out_scores.size());
  std::size_t tp = 0, fp = 0;
  for (const auto& level : levels(scores.in_scores, scores.out_scores)) {
    tp += level.positives;
    fp += level.negatives;
    if (static_cast<double>(tp) / n_in >= tpr_target) return static_cast<double>(fp) / n_out;
  }
  return 1.0;
}

double detection_error(const OodScores& scores) {
  check_ood(scores);
  const double n_in = static_cast<double>(scores.in_scores.size());
  const double n_out = static_cast<double>(scores.out_scores.size());
  double best = 0.5;  // accept nothing: TPR = FPR = 0
  std::size_t tp = 0, fp = 0;
  for (const auto& level : levels(scores.in_scores, scores.out_scores)) {
    tp += level.positives;
    fp += level.negatives;
    const double tpr = static_cast<double>(tp) / n_in;
    const double fpr = static_cast<double>(fp) / n_out;
    best = std::min(best, 0.5 * (1.0 - tpr) + 0.5 * fpr);
  }
  return best;
}

double auroc(const OodScores& scores) {
  check_ood(scores);
  const std::size_t n_in = scores.in_scores.size();
  const std::size_t n_out = scores.out_scores.size();
  std::vector<std::pair<double, bool>> all;
  all.reserve(n_in + n_out);
  for (double v : scores.in_scores) all.emplace_back(v, true);
  for (double v : scores.out_scores) all.emplace_back(v, false);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // Twice the rank sum keeps midranks integral.
  std::size_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    std::size_t in_count = 0;
    while (j < all.size() && all[j].first == all[i].first) in_count += all[j++].second ? 1 : 0;
    // Ranks i+1 .. j share the midrank (i + 1 + j) / 2.
    twice_rank_sum += in_count * (i + 1 + j);
    i = j;
  }
  const double u2 = static_cast<double>(twice_rank_sum) - static_cast<double>(n_in * (n_in + 1));
  return u2 / (2.0 * static_cast<double>(n_in) * static_cast<double>(n_out));
}

double aupr(const OodScores& scores, PrPositive positive) {
  check_ood(scores);
  std::vector<double> pos = positive == PrPositive::in ? scores.in_scores : scores.out_scores;
  std::vector<double> neg = positive == PrPositive::in ? scores.out_scores : scores.in_scores;
  if (positive == PrPositive::out) {
    for (double& v : pos) v = -v;
    for (double& v : neg) v = -v;
  }
  const double n_pos = static_cast<double>(pos.size());
  std::size_t tp = 0, fp = 0;
  double recall_prev = 0.0;
  double area = 0.0;
  for (const auto& level : levels(pos, neg)) {
    tp += level.positives;
    fp += level.negatives;
    const double recall = static_cast<double>(tp) / n_pos;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - recall_prev) * precision;
    recall_prev = recall;
  }
  return area;
}

}  // namespace dacal
