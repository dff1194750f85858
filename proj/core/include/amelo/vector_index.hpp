#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "amelo/vectorizer.hpp"

namespace amelo {

/// One nearest-neighbor result. `distance` is L2 for dense search and
/// 1 - cosine for sparse search; ranks start at 1.
struct SearchHit {
  std::string pmcid;
  double distance = 0.0;
  std::size_t rank = 0;

  friend bool operator==(const SearchHit&, const SearchHit&) = default;
};

/// Exact L2 index over a row-major float block. Rows are stored in pmcid
/// order, which makes row order the distance tie-break order.
class FlatIndex {
 public:
  FlatIndex() = default;

  /// Later duplicates of an id replace earlier ones. Throws EmptyInput or
  /// DimensionMismatch.
  static FlatIndex build(const std::vector<std::pair<std::string, DenseVector>>& vectors);
  static FlatIndex build(const std::map<std::string, DenseVector, std::less<>>& vectors);

  /// Assembles an index from already-validated parts (used by the loader).
  static FlatIndex from_parts(std::size_t dimension, std::vector<float> data, std::vector<std::string> ids);

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t count() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  std::span<const float> row(std::size_t i) const {
    return {data_.data() + i * dimension_, dimension_};
  }
  const std::vector<float>& data() const noexcept { return data_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::string& id(std::size_t i) const { return ids_.at(i); }

  /// min(k, count) hits in ascending (distance, pmcid) order.
  std::vector<SearchHit> search(std::span<const float> query, std::size_t k) const;

  friend bool operator==(const FlatIndex&, const FlatIndex&) = default;

 private:
  std::size_t dimension_ = 0;
  std::vector<float> data_;
  std::vector<std::string> ids_;
};

inline FlatIndex build_flat(const std::vector<std::pair<std::string, DenseVector>>& vectors) {
  return FlatIndex::build(vectors);
}

inline std::vector<SearchHit> search_flat(const FlatIndex& index, std::span<const float> query, std::size_t k) {
  return index.search(query, k);
}

/// Sparse document-term matrix for cosine KNN, rows in pmcid order.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  static SparseMatrix build(std::size_t dimension, std::vector<std::pair<std::string, SparseVector>> rows);

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t count() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::vector<SparseVector>& rows() const noexcept { return rows_; }

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  std::size_t dimension_ = 0;
  std::vector<std::string> ids_;
  std::vector<SparseVector> rows_;
};

/// Exact top-k by cosine distance (1 - cosine). Zero rows sit at distance 1.
/// Throws ZeroQuery, EmptyIndex or DimensionMismatch.
std::vector<SearchHit> knn_sparse(const SparseMatrix& matrix, const SparseVector& query, std::size_t k);

// ---------------------------------------------------------------------------
// Standardization and clustering

struct Standardization {
  std::vector<double> mean;
  std::vector<double> stddev;  // population; 1 for constant columns

  std::vector<double> apply(std::span<const double> row) const;
  friend bool operator==(const Standardization&, const Standardization&) = default;
};

struct StandardizedMatrix {
  std::vector<std::vector<double>> rows;
  Standardization params;
};

/// Column-wise z-scores. Throws TooFewRows for fewer than two rows.
StandardizedMatrix standardize(const std::vector<std::vector<double>>& features);

struct KMeansModel {
  std::size_t dimension = 0;
  std::vector<DenseVector> centroids;
  std::vector<std::uint32_t> assignment;  // row -> cluster
  double inertia = 0.0;
  std::size_t iterations_run = 0;
  /// Inertia after each assignment step; non-increasing.
  std::vector<double> inertia_history;
  /// Empty unless the caller standardized features before fitting.
  Standardization standardization;

  std::size_t k() const noexcept { return centroids.size(); }
  friend bool operator==(const KMeansModel&, const KMeansModel&) = default;
};

/// Lloyd iterations from k-means++ seeding until the assignment stops
/// changing or `max_iters` is reached. `data` is row-major with `dimension`
/// columns. Throws KTooLarge (k > rows) or InvalidArgument (k == 0).
KMeansModel fit_kmeans(std::span<const float> data, std::size_t dimension, std::size_t k,
                       std::size_t max_iters, std::uint64_t seed);
KMeansModel fit_kmeans(const std::vector<DenseVector>& vectors, std::size_t k, std::size_t max_iters,
                       std::uint64_t seed);

struct ElbowResult {
  std::size_t k = 0;
  /// (k, inertia) for every k that was fitted.
  std::vector<std::pair<std::size_t, double>> curve;
};

/// Fits every k around [k_min, k_max] and returns the k with the largest
/// second difference I(k-1) - 2 I(k) + I(k+1); ties go to the smaller k.
/// Throws RangeInvalid unless 1 <= k_min <= k_max <= rows.
ElbowResult elbow_select_k(std::span<const float> data, std::size_t dimension, std::size_t k_min,
                           std::size_t k_max, std::size_t max_iters = 100, std::uint64_t seed = 42);
ElbowResult elbow_select_k(const std::vector<DenseVector>& vectors, std::size_t k_min, std::size_t k_max,
                           std::size_t max_iters = 100, std::uint64_t seed = 42);

/// Flat index partitioned by a k-means model fitted over its rows.
class ClusteredIndex {
 public:
  ClusteredIndex() = default;
  /// Throws InvalidArgument if the model does not cover exactly the index rows.
  ClusteredIndex(FlatIndex index, KMeansModel model);

  const FlatIndex& index() const noexcept { return index_; }
  const KMeansModel& model() const noexcept { return model_; }
  const std::vector<std::vector<std::size_t>>& members() const noexcept { return members_; }

  /// Exact scan restricted to the members of the `probes` nearest centroids.
  std::vector<SearchHit> search(std::span<const float> query, std::size_t k, std::size_t probes = 1) const;

 private:
  FlatIndex index_;
  KMeansModel model_;
  std::vector<std::vector<std::size_t>> members_;
};

inline std::vector<SearchHit> search_clustered(const ClusteredIndex& index, std::span<const float> query,
                                               std::size_t k, std::size_t probes = 1) {
  return index.search(query, k, probes);
}

}  // namespace amelo
