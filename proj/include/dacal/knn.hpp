#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dacal/dataset.hpp"
#include "dacal/matrix.hpp"

namespace dacal {

/// Exact k-th nearest neighbor index over L2-normalized reference
/// embeddings of one layer.
///
/// Distances are computed as
///   d(q, r) = sqrt(max(0, <q,q> + <r,r> - 2 <q,r>))
/// with each inner product accumulated in double over the feature index in
/// ascending order. For unit vectors this is the euclidean distance on the
/// sphere; using the actual squared norms makes a query identical to a
/// reference row come out at exactly 0.
///
/// Query rows that coincide with reference rows are not excluded, so a
/// split queried against itself with k = 1 yields zeros.
class KnnIndex {
 public:
  /// Normalizes `features`, draws a seed-deterministic uniform subsample of
  /// floor(fraction * rows) rows without replacement (kept in original row
  /// order) and drops all-zero rows. Throws ConfigError when fewer than k
  /// rows remain or fraction is outside (0, 1].
  static KnnIndex build(const DenseMatrix& features, std::string layer_name, int k,
                        double subsample_fraction = 1.0, std::uint64_t seed = 0);

  /// Adopts an already-normalized reference (used when loading from disk).
  /// Throws ConfigError if k is out of range or a row is not unit norm.
  KnnIndex(std::string layer_name, DenseMatrix reference, int k, double subsample_fraction,
           std::uint64_t seed, std::string source_checksum);

  const std::string& layer_name() const noexcept { return layer_name_; }
  const DenseMatrix& reference() const noexcept { return reference_; }
  int k() const noexcept { return k_; }
  double subsample_fraction() const noexcept { return subsample_fraction_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& source_checksum() const noexcept { return source_checksum_; }

  /// Same reference with a different k.
  KnnIndex with_k(int k) const;

  /// k-th smallest distance from each query row to the reference set.
  /// Rows that are not unit norm within 1e-4 are normalized with a warning.
  /// Throws ShapeError on a column mismatch.
  std::vector<double> kth_distance(const DenseMatrix& queries) const;

  /// One column per requested k (each in [1, M]); shares one distance pass.
  std::vector<std::vector<double>> kth_distances(const DenseMatrix& queries,
                                                 std::span<const int> ks) const;

 private:
  std::string layer_name_;
  DenseMatrix reference_;
  std::vector<double> reference_sq_norms_;
  int k_ = 1;
  double subsample_fraction_ = 1.0;
  std::uint64_t seed_ = 0;
  std::string source_checksum_;
};

inline std::vector<double> kth_distance(const KnnIndex& index, const DenseMatrix& queries) {
  return index.kth_distance(queries);
}

/// Row indices of a uniform subsample without replacement of size
/// floor(fraction * n), sorted ascending. fraction == 1 returns 0..n-1.
std::vector<std::size_t> subsample_rows(std::size_t n, double fraction, std::uint64_t seed);

/// Per-sample, per-layer density proxies s_l (k-th neighbor distances).
struct DensityMatrix {
  DenseMatrix values;  // N x L, nonnegative
  std::vector<std::string> layer_names;
  std::vector<int> k_per_layer;

  std::size_t size() const noexcept { return values.rows(); }
  std::size_t num_layers() const noexcept { return layer_names.size(); }
};

/// Column l is the k-th neighbor distance of the dataset's normalized
/// layer-l features against indices[l]. Throws ConfigError if the index
/// layer names do not match the dataset's layer names in order.
DensityMatrix density_profile(const CalibrationDataset& dataset, std::span<const KnnIndex> indices);

/// Same, restricted to the dataset layers named by the indices (in index order).
DensityMatrix density_profile_for(const CalibrationDataset& dataset,
                                  std::span<const KnnIndex> indices);

/// One profile per k in `ks` (each k applied to every layer), sharing a
/// single distance pass per layer. Equals density_profile_for with
/// index.with_k(k) for each k.
std::vector<DensityMatrix> density_profiles(const CalibrationDataset& dataset,
                                            std::span<const KnnIndex> indices,
                                            std::span<const int> ks);

/// Writes `<dir>/<layer>.dact` and `<dir>/<layer>.json`.
void save_index(const KnnIndex& index, const std::filesystem::path& dir);
KnnIndex load_index(const std::filesystem::path& dir, const std::string& layer_name);

}  // namespace dacal
