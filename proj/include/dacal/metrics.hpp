#pragma once

#include <span>
#include <string>
#include <vector>

#include "dacal/matrix.hpp"

namespace dacal {

inline constexpr int kDefaultBins = 15;

enum class BinScheme { equal_width, equal_mass };

struct Bin {
  double lower = 0.0;  // equal-width: (m-1)/M; equal-mass: smallest confidence in the bin
  double upper = 0.0;  // equal-width: m/M; equal-mass: largest confidence in the bin
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
};

struct BinStats {
  BinScheme scheme = BinScheme::equal_width;
  std::vector<Bin> bins;
  std::size_t total = 0;
};

struct EceResult {
  double ece = 0.0;
  BinStats stats;
};

/// ECE with M equal-width bins: confidence p goes to bin m when
/// (m-1)/M < p <= m/M, and p = 0 to the first bin. Empty bins contribute 0.
/// Throws ConfigError on empty input or bins < 1.
EceResult ece_equal_width(const DenseMatrix& probs, const LabelVector& labels,
                          int bins = kDefaultBins);

/// ECE with M bins of (nearly) equal population: samples stably sorted by
/// confidence, the first N mod M bins hold ceil(N/M) samples, the rest
/// floor(N/M). Throws ConfigError when N < M.
EceResult ece_equal_mass(const DenseMatrix& probs, const LabelVector& labels,
                         int bins = kDefaultBins);

struct ClasswiseEce {
  double total = 0.0;  // sum over classes
  std::vector<double> per_class;
};

/// Equal-width ECE of each class-probability column against its indicator.
ClasswiseEce classwise_ece(const DenseMatrix& probs, const LabelVector& labels,
                           int bins = kDefaultBins);

/// Mean over samples of sum_c (p_c - I_c)^2, in [0, 2].
double brier(const DenseMatrix& probs, const LabelVector& labels);

inline constexpr double kNllFloor = 1e-12;
/// Mean of -ln max(p_true, 1e-12).
double nll(const DenseMatrix& probs, const LabelVector& labels);

double accuracy(const DenseMatrix& probs, const LabelVector& labels);

/// Per-bin (confidence, accuracy, count) for reliability diagrams.
BinStats reliability_data(const DenseMatrix& probs, const LabelVector& labels, int bins,
                          BinScheme scheme);

/// Unweighted mean across evaluation conditions. Throws ConfigError when empty.
double macro_average(std::span<const double> per_condition);

/// Top-class confidence per row.
std::vector<double> top_confidence(const DenseMatrix& probs);

// ---------------------------------------------------------------------------
// Out-of-distribution detection. In-domain samples are the positive class and
// a higher score means "more in-domain".

struct OodScores {
  std::vector<double> in_scores;
  std::vector<double> out_scores;
};

/// Sweeping thresholds t over distinct scores in descending order (a sample
/// is accepted when score >= t), takes the first t whose TPR reaches the
/// target and returns the fraction of OOD scores >= t.
/// Throws ConfigError if either set is empty.
double fpr_at_tpr(const OodScores& scores, double tpr_target = 0.95);

/// min over thresholds (including "accept nothing") of 0.5 (1 - TPR) + 0.5 FPR.
double detection_error(const OodScores& scores);

/// P(in > out) + 0.5 P(in == out), via midranks.
double auroc(const OodScores& scores);

enum class PrPositive { in, out };

/// Step-wise area under the precision-recall curve,
///   sum_k (R_k - R_{k-1}) P_k
/// over distinct thresholds in descending order. With PrPositive::out the
/// OOD samples are positive and scores are negated.
double aupr(const OodScores& scores, PrPositive positive);

}  // namespace dacal
