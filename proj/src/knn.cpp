#include "dacal/knn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "dacal/error.hpp"
#include "dacal/log.hpp"
#include "dacal/parallel.hpp"
#include "dacal/preprocess.hpp"
#include "dacal/tensor_io.hpp"

namespace dacal {
namespace {

constexpr double kUnitNormTolerance = 1e-4;
constexpr double kStoredUnitNormTolerance = 1e-6;

// Unbiased draw in [0, bound) by rejection; portable across standard libraries.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % bound;
}

double dot(const float* a, const float* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

std::vector<double> squared_norms(const DenseMatrix& m) {
  std::vector<double> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = dot(m.row(i).data(), m.row(i).data(), m.cols());
  return out;
}

// Distances from one query to every reference row. Four reference rows are
// processed together; each accumulator still sums in feature order.
void distances_to_all(const std::vector<double>& query, double query_sq,
                      const std::vector<double>& ref, const std::vector<double>& ref_sq,
                      std::size_t dims, std::vector<double>& out) {
  const std::size_t m = ref_sq.size();
  std::size_t r = 0;
  for (; r + 4 <= m; r += 4) {
    const double* r0 = ref.data() + r * dims;
    const double* r1 = r0 + dims;
    const double* r2 = r1 + dims;
    const double* r3 = r2 + dims;
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    for (std::size_t i = 0; i < dims; ++i) {
      const double q = query[i];
      a0 += q * r0[i];
      a1 += q * r1[i];
      a2 += q * r2[i];
      a3 += q * r3[i];
    }
    out[r] = std::sqrt(std::max(0.0, query_sq + ref_sq[r] - 2.0 * a0));
    out[r + 1] = std::sqrt(std::max(0.0, query_sq + ref_sq[r + 1] - 2.0 * a1));
    out[r + 2] = std::sqrt(std::max(0.0, query_sq + ref_sq[r + 2] - 2.0 * a2));
    out[r + 3] = std::sqrt(std::max(0.0, query_sq + ref_sq[r + 3] - 2.0 * a3));
  }
  for (; r < m; ++r) {
    const double* rr = ref.data() + r * dims;
    double a = 0.0;
    for (std::size_t i = 0; i < dims; ++i) a += query[i] * rr[i];
    out[r] = std::sqrt(std::max(0.0, query_sq + ref_sq[r] - 2.0 * a));
  }
}

DenseMatrix normalize_queries(const DenseMatrix& queries) {
  for (std::size_t n = 0; n < queries.rows(); ++n) {
    const auto row = queries.row(n);
    const double norm = std::sqrt(dot(row.data(), row.data(), row.size()));
    if (norm != 0.0 && std::abs(norm - 1.0) > kUnitNormTolerance) {
      log_warn("kth_distance: query rows are not unit norm; normalizing");
      return l2_normalize_rows(queries);
    }
  }
  return queries;
}

}  // namespace

std::vector<std::size_t> subsample_rows(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("subsample fraction must be in (0, 1], got " + std::to_string(fraction));
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (fraction == 1.0) return idx;
  // The epsilon keeps products like 0.01 * 1000 from flooring to 9.
  const auto m = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < m && i + 1 < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(bounded(rng, n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return idx;
}

KnnIndex KnnIndex::build(const DenseMatrix& features, std::string layer_name, int k,
                         double subsample_fraction, std::uint64_t seed) {
  if (features.rows() == 0) throw ConfigError("build_index: layer '" + layer_name + "' has no rows");
  if (k < 1) throw ConfigError("build_index: k must be positive");
  const auto rows = subsample_rows(features.rows(), subsample_fraction, seed);
  std::vector<std::size_t> zero_rows;
  DenseMatrix normalized = l2_normalize_rows(features.select_rows(rows), &zero_rows);
  if (!zero_rows.empty()) {
    std::vector<std::size_t> keep;
    keep.reserve(normalized.rows() - zero_rows.size());
    std::size_t z = 0;
    for (std::size_t i = 0; i < normalized.rows(); ++i) {
      if (z < zero_rows.size() && zero_rows[z] == i) {
        ++z;
      } else {
        keep.push_back(i);
      }
    }
    normalized = normalized.select_rows(keep);
  }
  if (normalized.rows() < static_cast<std::size_t>(k)) {
    throw ConfigError("build_index: layer '" + layer_name + "' keeps " +
                      std::to_string(normalized.rows()) + " reference rows, fewer than k = " +
                      std::to_string(k));
  }
  return KnnIndex(std::move(layer_name), std::move(normalized), k, subsample_fraction, seed,
                  checksum(features));
}

KnnIndex::KnnIndex(std::string layer_name, DenseMatrix reference, int k,
                   double subsample_fraction, std::uint64_t seed, std::string source_checksum)
    : layer_name_(std::move(layer_name)),
      reference_(std::move(reference)),
      k_(k),
      subsample_fraction_(subsample_fraction),
      seed_(seed),
      source_checksum_(std::move(source_checksum)) {
  if (k_ < 1 || static_cast<std::size_t>(k_) > reference_.rows()) {
    throw ConfigError("knn index '" + layer_name_ + "': k = " + std::to_string(k_) +
                      " outside [1, " + std::to_string(reference_.rows()) + "]");
  }
  reference_sq_norms_ = squared_norms(reference_);
  for (std::size_t i = 0; i < reference_sq_norms_.size(); ++i) {
    if (std::abs(std::sqrt(reference_sq_norms_[i]) - 1.0) > kStoredUnitNormTolerance) {
      throw ConfigError("knn index '" + layer_name_ + "': reference row " + std::to_string(i) +
                        " is not unit norm");
    }
  }
}

KnnIndex KnnIndex::with_k(int k) const {
  return KnnIndex(layer_name_, reference_, k, subsample_fraction_, seed_, source_checksum_);
}

std::vector<double> KnnIndex::kth_distance(const DenseMatrix& queries) const {
  const int ks[1] = {k_};
  return std::move(kth_distances(queries, ks).front());
}

std::vector<std::vector<double>> KnnIndex::kth_distances(const DenseMatrix& queries,
                                                         std::span<const int> ks) const {
  if (queries.cols() != reference_.cols()) {
    throw ShapeError("kth_distance: query has " + std::to_string(queries.cols()) +
                     " columns, index '" + layer_name_ + "' has " +
                     std::to_string(reference_.cols()));
  }
  const std::size_t m = reference_.rows();
  int k_max = 0;
  for (int k : ks) {
    if (k < 1 || static_cast<std::size_t>(k) > m) {
      throw ConfigError("kth_distance: k = " + std::to_string(k) + " outside [1, " +
                        std::to_string(m) + "]");
    }
    k_max = std::max(k_max, k);
  }
  const DenseMatrix q = normalize_queries(queries);
  const std::size_t dims = q.cols();
  const std::vector<double> ref(reference_.data().begin(), reference_.data().end());

  std::vector<std::vector<double>> result(ks.size(), std::vector<double>(q.rows()));
  parallel_for(q.rows(), [&](std::size_t begin, std::size_t end) {
    std::vector<double> dist(m);
    std::vector<double> query(dims);
    for (std::size_t n = begin; n < end; ++n) {
      const auto row = q.row(n);
      std::copy(row.begin(), row.end(), query.begin());
      const double query_sq = dot(row.data(), row.data(), dims);
      distances_to_all(query, query_sq, ref, reference_sq_norms_, dims, dist);
      const auto kth = dist.begin() + (k_max - 1);
      std::nth_element(dist.begin(), kth, dist.end());
      if (ks.size() == 1) {
        result[0][n] = *kth;
        continue;
      }
      std::sort(dist.begin(), kth);
      for (std::size_t j = 0; j < ks.size(); ++j) result[j][n] = dist[ks[j] - 1];
    }
  });
  return result;
}

namespace {

DensityMatrix profile_impl(const CalibrationDataset& dataset, std::span<const KnnIndex> indices) {
  DensityMatrix out;
  out.values = DenseMatrix(dataset.size(), indices.size());
  for (std::size_t l = 0; l < indices.size(); ++l) {
    const auto& index = indices[l];
    const DenseMatrix normalized = l2_normalize_rows(dataset.layer(index.layer_name()));
    const auto column = index.kth_distance(normalized);
    for (std::size_t n = 0; n < column.size(); ++n) out.values(n, l) = static_cast<float>(column[n]);
    out.layer_names.push_back(index.layer_name());
    out.k_per_layer.push_back(index.k());
  }
  return out;
}

}  // namespace

DensityMatrix density_profile(const CalibrationDataset& dataset, std::span<const KnnIndex> indices) {
  const auto names = dataset.layer_names();
  bool match = names.size() == indices.size();
  for (std::size_t l = 0; match && l < names.size(); ++l) match = names[l] == indices[l].layer_name();
  if (!match) {
    throw ConfigError("density_profile: index layers do not match the layers of split '" +
                      dataset.split_name + "'");
  }
  return profile_impl(dataset, indices);
}

DensityMatrix density_profile_for(const CalibrationDataset& dataset,
                                  std::span<const KnnIndex> indices) {
  return profile_impl(dataset, indices);
}

std::vector<DensityMatrix> density_profiles(const CalibrationDataset& dataset,
                                            std::span<const KnnIndex> indices,
                                            std::span<const int> ks) {
  std::vector<DensityMatrix> out(ks.size());
  for (auto& d : out) d.values = DenseMatrix(dataset.size(), indices.size());
  for (std::size_t l = 0; l < indices.size(); ++l) {
    const auto& index = indices[l];
    const DenseMatrix normalized = l2_normalize_rows(dataset.layer(index.layer_name()));
    const auto columns = index.kth_distances(normalized, ks);
    for (std::size_t j = 0; j < ks.size(); ++j) {
      for (std::size_t n = 0; n < dataset.size(); ++n) {
        out[j].values(n, l) = static_cast<float>(columns[j][n]);
      }
      out[j].layer_names.push_back(index.layer_name());
      out[j].k_per_layer.push_back(ks[j]);
    }
  }
  return out;
}

void save_index(const KnnIndex& index, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_tensor(index.reference(), dir / (index.layer_name() + ".dact"));
  nlohmann::ordered_json sidecar;
  sidecar["layer_name"] = index.layer_name();
  sidecar["k"] = index.k();
  sidecar["subsample_fraction"] = index.subsample_fraction();
  sidecar["seed"] = index.seed();
  sidecar["source_checksum"] = index.source_checksum();
  sidecar["reference_checksum"] = checksum(index.reference());
  std::ofstream out(dir / (index.layer_name() + ".json"));
  if (!out) throw IoError("cannot write index sidecar in " + dir.string());
  out << sidecar.dump(2) << '\n';
}

KnnIndex load_index(const std::filesystem::path& dir, const std::string& layer_name) {
  const auto json_path = dir / (layer_name + ".json");
  std::ifstream in(json_path);
  if (!in) throw IoError("cannot open index sidecar " + json_path.string());
  nlohmann::json sidecar;
  try {
    sidecar = nlohmann::json::parse(in);
    DenseMatrix reference = load_tensor(dir / (layer_name + ".dact"));
    return KnnIndex(sidecar.at("layer_name").get<std::string>(), std::move(reference),
                    sidecar.at("k").get<int>(), sidecar.at("subsample_fraction").get<double>(),
                    sidecar.at("seed").get<std::uint64_t>(),
                    sidecar.at("source_checksum").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(json_path.string() + ": " + e.what());
  }
}

}  // namespace dacal
