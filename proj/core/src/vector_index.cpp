#include "amelo/vector_index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "amelo/error.hpp"

namespace amelo {
namespace {

struct Candidate {
  double distance;
  std::size_t row;
};

// Rows are in id order, so comparing row numbers breaks distance ties by id.
std::vector<SearchHit> top_k(std::vector<Candidate>& candidates, std::size_t k,
                             const std::vector<std::string>& ids, bool take_sqrt) {
  const std::size_t n = std::min(k, candidates.size());
  const auto less = [](const Candidate& a, const Candidate& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.row < b.row;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n), candidates.end(), less);
  std::vector<SearchHit> hits;
  hits.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = take_sqrt ? std::sqrt(candidates[i].distance) : candidates[i].distance;
    hits.push_back({ids[candidates[i].row], d, i + 1});
  }
  return hits;
}

}  // namespace

FlatIndex FlatIndex::build(const std::vector<std::pair<std::string, DenseVector>>& vectors) {
  std::map<std::string, DenseVector, std::less<>> unique;
  for (const auto& [id, v] : vectors) unique[id] = v;
  return build(unique);
}

FlatIndex FlatIndex::build(const std::map<std::string, DenseVector, std::less<>>& vectors) {
  if (vectors.empty()) throw Error(ErrorCode::EmptyInput, "cannot build an index from no vectors");
  FlatIndex index;
  index.dimension_ = vectors.begin()->second.size();
  if (index.dimension_ == 0) throw Error(ErrorCode::DimensionMismatch, "zero-dimensional vectors");
  index.data_.reserve(vectors.size() * index.dimension_);
  index.ids_.reserve(vectors.size());
  for (const auto& [id, v] : vectors) {
    if (v.size() != index.dimension_) {
      throw Error(ErrorCode::DimensionMismatch,
                  id + ": " + std::to_string(v.size()) + " vs " + std::to_string(index.dimension_));
    }
    index.data_.insert(index.data_.end(), v.begin(), v.end());
    index.ids_.push_back(id);
  }
  return index;
}

FlatIndex FlatIndex::from_parts(std::size_t dimension, std::vector<float> data, std::vector<std::string> ids) {
  if (data.size() != dimension * ids.size()) {
    throw Error(ErrorCode::DimensionMismatch, "vector block does not match count x dimension");
  }
  FlatIndex index;
  index.dimension_ = dimension;
  index.data_ = std::move(data);
  index.ids_ = std::move(ids);
  return index;
}

std::vector<SearchHit> FlatIndex::search(std::span<const float> query, std::size_t k) const {
  if (empty()) throw Error(ErrorCode::EmptyIndex, "search on an empty index");
  if (query.size() != dimension_) {
    throw Error(ErrorCode::DimensionMismatch,
                "query has " + std::to_string(query.size()) + " values, index " + std::to_string(dimension_));
  }
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  std::vector<Candidate> candidates(count());
  for (std::size_t r = 0; r < count(); ++r) {
    candidates[r] = {squared_l2(row(r), query), r};
  }
  return top_k(candidates, k, ids_, true);
}

// ---------------------------------------------------------------------------

SparseMatrix SparseMatrix::build(std::size_t dimension, std::vector<std::pair<std::string, SparseVector>> rows) {
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseMatrix m;
  m.dimension_ = dimension;
  for (auto& [id, v] : rows) {
    if (v.dimension != dimension) {
      throw Error(ErrorCode::DimensionMismatch,
                  id + ": " + std::to_string(v.dimension) + " vs " + std::to_string(dimension));
    }
    if (!m.ids_.empty() && m.ids_.back() == id) {
      m.rows_.back() = std::move(v);
      continue;
    }
    m.ids_.push_back(std::move(id));
    m.rows_.push_back(std::move(v));
  }
  return m;
}

std::vector<SearchHit> knn_sparse(const SparseMatrix& matrix, const SparseVector& query, std::size_t k) {
  if (matrix.count() == 0) throw Error(ErrorCode::EmptyIndex, "search on an empty sparse matrix");
  if (query.dimension != matrix.dimension()) {
    throw Error(ErrorCode::DimensionMismatch, std::to_string(query.dimension) + " vs " +
                                                  std::to_string(matrix.dimension()));
  }
  if (query.is_zero()) throw Error(ErrorCode::ZeroQuery, "query has no in-vocabulary terms");
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  std::vector<Candidate> candidates(matrix.count());
  for (std::size_t r = 0; r < matrix.count(); ++r) {
    const auto& row = matrix.rows()[r];
    const double cos = row.is_zero() ? 0.0 : cosine(row, query);
    candidates[r] = {1.0 - cos, r};
  }
  return top_k(candidates, k, matrix.ids(), false);
}

// ---------------------------------------------------------------------------

std::vector<double> Standardization::apply(std::span<const double> row) const {
  if (row.size() != mean.size()) {
    throw Error(ErrorCode::DimensionMismatch, std::to_string(row.size()) + " vs " + std::to_string(mean.size()));
  }
  std::vector<double> out(row.size());
  for (std::size_t c = 0; c < row.size(); ++c) out[c] = (row[c] - mean[c]) / stddev[c];
  return out;
}

StandardizedMatrix standardize(const std::vector<std::vector<double>>& features) {
  if (features.size() < 2) throw Error(ErrorCode::TooFewRows, "standardization needs at least two rows");
  const std::size_t cols = features.front().size();
  for (const auto& r : features) {
    if (r.size() != cols) throw Error(ErrorCode::DimensionMismatch, "ragged feature matrix");
  }
  const double n = static_cast<double>(features.size());
  StandardizedMatrix out;
  out.params.mean.assign(cols, 0.0);
  out.params.stddev.assign(cols, 1.0);
  for (std::size_t c = 0; c < cols; ++c) {
    double sum = 0.0;
    for (const auto& r : features) sum += r[c];
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& r : features) ss += (r[c] - mean) * (r[c] - mean);
    const double sd = std::sqrt(ss / n);
    out.params.mean[c] = mean;
    // A column whose spread is pure rounding noise is treated as constant.
    out.params.stddev[c] = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 1.0;
  }
  out.rows.reserve(features.size());
  for (const auto& r : features) {
    auto z = out.params.apply(r);
    for (std::size_t c = 0; c < cols; ++c) {
      if (out.params.stddev[c] == 1.0 && std::abs(z[c]) < 1e-12 * std::max(1.0, std::abs(out.params.mean[c]))) {
        z[c] = 0.0;
      }
    }
    out.rows.push_back(std::move(z));
  }
  return out;
}

// ---------------------------------------------------------------------------

ClusteredIndex::ClusteredIndex(FlatIndex index, KMeansModel model)
    : index_(std::move(index)), model_(std::move(model)) {
  if (model_.assignment.size() != index_.count()) {
    throw Error(ErrorCode::InvalidArgument, "model assignment covers " + std::to_string(model_.assignment.size()) +
                                                " rows, index has " + std::to_string(index_.count()));
  }
  if (model_.dimension != index_.dimension()) {
    throw Error(ErrorCode::DimensionMismatch, "model and index dimensions differ");
  }
  members_.assign(model_.k(), {});
  for (std::size_t r = 0; r < model_.assignment.size(); ++r) {
    const auto c = model_.assignment[r];
    if (c >= model_.k()) throw Error(ErrorCode::InvalidArgument, "assignment out of range");
    members_[c].push_back(r);
  }
}

std::vector<SearchHit> ClusteredIndex::search(std::span<const float> query, std::size_t k, std::size_t probes) const {
  if (index_.empty()) throw Error(ErrorCode::EmptyIndex, "search on an empty index");
  if (query.size() != index_.dimension()) {
    throw Error(ErrorCode::DimensionMismatch,
                "query has " + std::to_string(query.size()) + " values, index " + std::to_string(index_.dimension()));
  }
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  probes = std::clamp<std::size_t>(probes, 1, model_.k());

  std::vector<Candidate> centroid_order(model_.k());
  for (std::size_t c = 0; c < model_.k(); ++c) {
    centroid_order[c] = {squared_l2(std::span<const float>(model_.centroids[c]), query), c};
  }
  std::partial_sort(centroid_order.begin(), centroid_order.begin() + static_cast<std::ptrdiff_t>(probes),
                    centroid_order.end(), [](const Candidate& a, const Candidate& b) {
                      return a.distance != b.distance ? a.distance < b.distance : a.row < b.row;
                    });

  std::vector<Candidate> candidates;
  for (std::size_t p = 0; p < probes; ++p) {
    for (std::size_t r : members_[centroid_order[p].row]) {
      candidates.push_back({squared_l2(index_.row(r), query), r});
    }
  }
  return top_k(candidates, k, index_.ids(), true);
}

}  // namespace amelo
