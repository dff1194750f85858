#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "amelo/error.hpp"
#include "amelo/vector_index.hpp"

namespace amelo {
namespace {

// Platform-independent uniform draw in [0, 1); std distributions are not.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double sq_dist(const float* row, const double* centroid, std::size_t dim) {
  double s = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    const double d = static_cast<double>(row[j]) - centroid[j];
    s += d * d;
  }
  return s;
}

std::vector<double> seed_plus_plus(std::span<const float> data, std::size_t dim, std::size_t rows,
                                   std::size_t k, std::mt19937_64& rng) {
  std::vector<double> centroids(k * dim);
  const auto take = [&](std::size_t c, std::size_t r) {
    for (std::size_t j = 0; j < dim; ++j) centroids[c * dim + j] = data[r * dim + j];
  };
  take(0, std::min(rows - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(rows))));
  std::vector<double> d2(rows, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      d2[r] = std::min(d2[r], sq_dist(&data[r * dim], &centroids[(c - 1) * dim], dim));
      total += d2[r];
    }
    std::size_t pick = rows - 1;
    if (total > 0.0) {
      double target = uniform01(rng) * total;
      for (std::size_t r = 0; r < rows; ++r) {
        if (d2[r] <= 0.0) continue;
        target -= d2[r];
        if (target < 0.0) {
          pick = r;
          break;
        }
      }
    } else {
      pick = std::min(rows - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(rows)));
    }
    take(c, pick);
  }
  return centroids;
}

}  // namespace

KMeansModel fit_kmeans(std::span<const float> data, std::size_t dim, std::size_t k, std::size_t max_iters,
                       std::uint64_t seed) {
  if (dim == 0 || data.size() % dim != 0) {
    throw Error(ErrorCode::DimensionMismatch, "data size is not a multiple of the dimension");
  }
  const std::size_t rows = data.size() / dim;
  if (rows == 0) throw Error(ErrorCode::EmptyInput, "k-means on no rows");
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (k > rows) {
    throw Error(ErrorCode::KTooLarge, "k = " + std::to_string(k) + " exceeds " + std::to_string(rows) + " rows");
  }
  for (float v : data) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "non-finite value in k-means input");
  }

  std::mt19937_64 rng(seed);
  std::vector<double> centroids = seed_plus_plus(data, dim, rows, k, rng);
  std::vector<std::uint32_t> assignment(rows, std::numeric_limits<std::uint32_t>::max());
  std::vector<double> row_d2(rows, 0.0);

  KMeansModel model;
  model.dimension = dim;
  const std::size_t iterations = std::max<std::size_t>(max_iters, 1);
  for (std::size_t it = 0; it < iterations; ++it) {
    // Assignment: a row only moves when another centroid is strictly closer.
    bool changed = false;
    double inertia = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const float* row = &data[r * dim];
      std::uint32_t best = assignment[r];
      double best_d = best < k ? sq_dist(row, &centroids[best * dim], dim) : std::numeric_limits<double>::infinity();
      for (std::uint32_t c = 0; c < k; ++c) {
        if (c == assignment[r]) continue;
        const double d = sq_dist(row, &centroids[c * dim], dim);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (best != assignment[r]) changed = true;
      assignment[r] = best;
      row_d2[r] = best_d;
      inertia += best_d;
    }
    model.inertia_history.push_back(inertia);
    model.iterations_run = it + 1;
    if (!changed) break;

    // Update: means of members; an empty cluster takes the worst-fit row.
    std::vector<double> sums(k * dim, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto c = assignment[r];
      ++counts[c];
      for (std::size_t j = 0; j < dim; ++j) sums[c * dim + j] += data[r * dim + j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        const auto worst = static_cast<std::size_t>(std::max_element(row_d2.begin(), row_d2.end()) - row_d2.begin());
        for (std::size_t j = 0; j < dim; ++j) centroids[c * dim + j] = data[worst * dim + j];
        row_d2[worst] = 0.0;
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j) {
        centroids[c * dim + j] = sums[c * dim + j] / static_cast<double>(counts[c]);
      }
    }
  }

  model.inertia = model.inertia_history.back();
  model.assignment = std::move(assignment);
  model.centroids.assign(k, DenseVector(dim));
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < dim; ++j) model.centroids[c][j] = static_cast<float>(centroids[c * dim + j]);
  }
  return model;
}

namespace {
std::vector<float> flatten(const std::vector<DenseVector>& vectors, std::size_t& dim) {
  if (vectors.empty()) throw Error(ErrorCode::EmptyInput, "no vectors");
  dim = vectors.front().size();
  std::vector<float> data;
  data.reserve(vectors.size() * dim);
  for (const auto& v : vectors) {
    if (v.size() != dim) throw Error(ErrorCode::DimensionMismatch, "ragged vectors");
    data.insert(data.end(), v.begin(), v.end());
  }
  return data;
}
}  // namespace

KMeansModel fit_kmeans(const std::vector<DenseVector>& vectors, std::size_t k, std::size_t max_iters,
                       std::uint64_t seed) {
  std::size_t dim = 0;
  const auto data = flatten(vectors, dim);
  return fit_kmeans(data, dim, k, max_iters, seed);
}

ElbowResult elbow_select_k(std::span<const float> data, std::size_t dim, std::size_t k_min, std::size_t k_max,
                           std::size_t max_iters, std::uint64_t seed) {
  if (dim == 0 || data.size() % dim != 0) {
    throw Error(ErrorCode::DimensionMismatch, "data size is not a multiple of the dimension");
  }
  const std::size_t rows = data.size() / dim;
  if (k_min < 1 || k_min > k_max || k_max > rows) {
    throw Error(ErrorCode::RangeInvalid, "k range [" + std::to_string(k_min) + ", " + std::to_string(k_max) +
                                             "] invalid for " + std::to_string(rows) + " rows");
  }
  ElbowResult result;
  if (k_min == k_max) {
    result.k = k_min;
    result.curve.emplace_back(k_min, fit_kmeans(data, dim, k_min, max_iters, seed).inertia);
    return result;
  }
  const std::size_t lo = std::max<std::size_t>(1, k_min - 1);
  const std::size_t hi = std::min(rows, k_max + 1);
  for (std::size_t k = lo; k <= hi; ++k) {
    result.curve.emplace_back(k, fit_kmeans(data, dim, k, max_iters, seed).inertia);
  }
  const auto inertia_of = [&](std::size_t k) { return result.curve[k - lo].second; };
  result.k = k_min;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = k_min; k <= k_max; ++k) {
    if (k - 1 < lo || k + 1 > hi) continue;
    const double second = inertia_of(k - 1) - 2.0 * inertia_of(k) + inertia_of(k + 1);
    if (second > best) {
      best = second;
      result.k = k;
    }
  }
  return result;
}

ElbowResult elbow_select_k(const std::vector<DenseVector>& vectors, std::size_t k_min, std::size_t k_max,
                           std::size_t max_iters, std::uint64_t seed) {
  std::size_t dim = 0;
  const auto data = flatten(vectors, dim);
  return elbow_select_k(data, dim, k_min, k_max, max_iters, seed);
}

}  // namespace amelo
