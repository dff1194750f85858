#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "amelo/error.hpp"
#include "amelo/vector_index.hpp"
#include "support.hpp"

namespace amelo {
namespace {

using Pairs = std::vector<std::pair<std::string, DenseVector>>;

Pairs basis() { return {{"e1", {1, 0, 0}}, {"e2", {0, 1, 0}}, {"e3", {0, 0, 1}}}; }

std::string id_of(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "PMC%06d", i);
  return buf;
}

TEST(FlatIndex, BuildCounts) {
  const auto idx = build_flat(basis());
  EXPECT_EQ(idx.count(), 3u);
  EXPECT_EQ(idx.dimension(), 3u);
  const auto dup = build_flat({{"a", {1, 0}}, {"a", {0, 1}}});
  EXPECT_EQ(dup.count(), 1u);
  EXPECT_EQ(dup.row(0)[1], 1.0f);
}

TEST(FlatIndex, BuildErrors) {
  EXPECT_THROW(build_flat({}), Error);
  try {
    build_flat({{"a", {1, 0}}, {"b", {1, 0, 0}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(FlatIndex, BasisSearchWithTieBreak) {
  const auto idx = build_flat(basis());
  const std::vector<float> q = {1, 0, 0};
  const auto hits = search_flat(idx, q, 2);
  ASSERT_EQ(hits.size(), 2u);
  EXPECT_EQ(hits[0], (SearchHit{"e1", 0.0, 1}));
  EXPECT_EQ(hits[1].pmcid, "e2");
  EXPECT_NEAR(hits[1].distance, std::sqrt(2.0), 1e-12);
  EXPECT_EQ(hits[1].rank, 2u);
  EXPECT_EQ(search_flat(idx, q, 10).size(), 3u);
}

TEST(FlatIndex, SearchErrors) {
  const auto idx = build_flat(basis());
  const std::vector<float> bad = {1, 0};
  EXPECT_THROW(search_flat(idx, bad, 1), Error);
  const std::vector<float> q = {1, 0, 0};
  EXPECT_THROW(search_flat(FlatIndex{}, q, 1), Error);
}

// Independent scan: full sort of (distance, id) with distances computed in long double.
std::vector<std::pair<long double, std::string>> brute_force(const Pairs& rows, const DenseVector& q, std::size_t k) {
  std::map<std::string, DenseVector> latest;
  for (const auto& [id, v] : rows) latest[id] = v;
  std::vector<std::pair<long double, std::string>> all;
  for (const auto& [id, v] : latest) {
    long double s = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const long double d = static_cast<long double>(v[i]) - q[i];
      s += d * d;
    }
    all.emplace_back(std::sqrt(s), id);
  }
  std::sort(all.begin(), all.end());
  all.resize(std::min(k, all.size()));
  return all;
}

TEST(FlatIndex, MatchesBruteForce) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    const std::size_t dim = 1 + rng() % 8;
    const std::size_t k = 1 + rng() % 12;
    Pairs rows;
    for (std::size_t i = 0; i < n; ++i) {
      // Small integer grid so exact ties are common.
      DenseVector v(dim);
      for (auto& x : v) x = static_cast<float>(static_cast<int>(rng() % 5) - 2);
      rows.emplace_back(id_of(static_cast<int>(rng() % (n + 5))), v);
    }
    DenseVector q(dim);
    for (auto& x : q) x = static_cast<float>(static_cast<int>(rng() % 5) - 2);
    const auto got = build_flat(rows).search(q, k);
    const auto want = brute_force(rows, q, k);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].pmcid, want[i].second) << "trial " << trial;
      EXPECT_NEAR(got[i].distance, static_cast<double>(want[i].first), 1e-9);
      EXPECT_EQ(got[i].rank, i + 1);
    }
  }
}

SparseVector sv(std::size_t dim, std::vector<std::pair<std::uint32_t, float>> e) { return {dim, std::move(e)}; }

TEST(Sparse, HandRanking) {
  // Unit query along column 0; each doc's first coordinate is its cosine.
  auto doc = [](double c) {
    return sv(2, {{0, static_cast<float>(c)}, {1, static_cast<float>(std::sqrt(1 - c * c))}});
  };
  const auto m = SparseMatrix::build(2, {{"low", doc(0.1)}, {"high", doc(0.9)}, {"mid", doc(0.5)}});
  const auto hits = knn_sparse(m, sv(2, {{0, 1.0f}}), 3);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].pmcid, "high");
  EXPECT_EQ(hits[1].pmcid, "mid");
  EXPECT_EQ(hits[2].pmcid, "low");
  EXPECT_NEAR(hits[0].distance, 0.1, 1e-6);
}

TEST(Sparse, SelfOrthogonalAndZero) {
  const auto m = SparseMatrix::build(3, {{"a", sv(3, {{0, 1.0f}})}, {"b", sv(3, {{2, 1.0f}})}});
  const auto hits = knn_sparse(m, sv(3, {{0, 1.0f}}), 2);
  EXPECT_EQ(hits[0].pmcid, "a");
  EXPECT_NEAR(hits[0].distance, 0.0, 1e-12);
  EXPECT_NEAR(hits[1].distance, 1.0, 1e-12);
  try {
    knn_sparse(m, sv(3, {}), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroQuery);
  }
}

TEST(Standardize, HandValues) {
  const auto s = standardize({{0.0, 7.0}, {10.0, 7.0}});
  EXPECT_DOUBLE_EQ(s.rows[0][0], -1.0);
  EXPECT_DOUBLE_EQ(s.rows[1][0], 1.0);
  EXPECT_DOUBLE_EQ(s.params.stddev[0], 5.0);
  EXPECT_DOUBLE_EQ(s.rows[0][1], 0.0);
  EXPECT_DOUBLE_EQ(s.params.stddev[1], 1.0);
  EXPECT_THROW(standardize({{1.0}}), Error);
}

TEST(Standardize, ConstantColumnOfThree) {
  const auto s = standardize({{7.0}, {7.0}, {7.0}});
  for (const auto& r : s.rows) EXPECT_EQ(r[0], 0.0);
}

TEST(Standardize, MomentsAndIdempotence) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(3.0, 4.0);
  std::vector<std::vector<double>> m(50, std::vector<double>(4));
  for (auto& r : m)
    for (auto& x : r) x = g(rng);
  const auto s = standardize(m);
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0, var = 0;
    for (const auto& r : s.rows) mean += r[c];
    mean /= 50;
    for (const auto& r : s.rows) var += (r[c] - mean) * (r[c] - mean);
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt(var / 50), 1.0, 1e-9);
  }
  const auto twice = standardize(s.rows);
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(twice.rows[i][c], s.rows[i][c], 1e-9);
}

std::vector<DenseVector> scalars(std::initializer_list<float> xs) {
  std::vector<DenseVector> out;
  for (float x : xs) out.push_back({x});
  return out;
}

TEST(KMeans, HandExamples) {
  const auto m = fit_kmeans(scalars({0, 10}), 2, 100, 1);
  EXPECT_EQ(m.inertia, 0.0);
  const auto m2 = fit_kmeans(scalars({0, 1, 9, 10}), 2, 100, 1);
  EXPECT_EQ(m2.inertia, 1.0);
  std::vector<float> c = {m2.centroids[0][0], m2.centroids[1][0]};
  std::sort(c.begin(), c.end());
  EXPECT_EQ(c, (std::vector<float>{0.5f, 9.5f}));
  EXPECT_EQ(fit_kmeans(scalars({3, 1, 4, 1.5f, 9}), 5, 100, 1).inertia, 0.0);
}

TEST(KMeans, Errors) {
  try {
    fit_kmeans(scalars({1, 2}), 3, 10, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::KTooLarge);
  }
  EXPECT_THROW(fit_kmeans(scalars({1, 2}), 0, 10, 1), Error);
}

TEST(KMeans, MonotoneInertiaAndPartition) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<DenseVector> data;
    for (int i = 0; i < 60; ++i) data.push_back(testing::random_unit(rng, 5));
    const auto m = fit_kmeans(data, 2 + trial % 6, 50, trial);
    for (std::size_t i = 1; i < m.inertia_history.size(); ++i) {
      EXPECT_LE(m.inertia_history[i], m.inertia_history[i - 1]);
    }
    ASSERT_EQ(m.assignment.size(), data.size());
    for (auto a : m.assignment) EXPECT_LT(a, m.k());
  }
}

TEST(KMeans, SeedDeterminism) {
  std::mt19937_64 rng(4);
  std::vector<DenseVector> data;
  for (int i = 0; i < 40; ++i) data.push_back(testing::random_unit(rng, 3));
  EXPECT_EQ(fit_kmeans(data, 4, 50, 7), fit_kmeans(data, 4, 50, 7));
}

std::vector<DenseVector> two_blobs(std::mt19937_64& rng, int per_blob) {
  std::normal_distribution<double> g(0.0, 0.3);
  std::vector<DenseVector> out;
  for (int b = 0; b < 2; ++b)
    for (int i = 0; i < per_blob; ++i)
      out.push_back({static_cast<float>(b * 10 + g(rng)), static_cast<float>(g(rng))});
  return out;
}

TEST(Elbow, TwoBlobs) {
  std::mt19937_64 rng(8);
  EXPECT_EQ(elbow_select_k(two_blobs(rng, 20), 2, 6).k, 2u);
}

TEST(Elbow, ForcedAndRange) {
  std::mt19937_64 rng(8);
  const auto data = two_blobs(rng, 5);
  EXPECT_EQ(elbow_select_k(data, 3, 3).k, 3u);
  EXPECT_THROW(elbow_select_k(data, 0, 3), Error);
  EXPECT_THROW(elbow_select_k(data, 4, 3), Error);
  EXPECT_THROW(elbow_select_k(data, 2, 11), Error);
  std::vector<DenseVector> uniform;
  for (int i = 0; i < 30; ++i) uniform.push_back(testing::random_unit(rng, 4));
  const auto k = elbow_select_k(uniform, 2, 8).k;
  EXPECT_GE(k, 2u);
  EXPECT_LE(k, 8u);
}

TEST(Clustered, AllProbesEqualsFlat) {
  std::mt19937_64 rng(12);
  Pairs rows;
  std::vector<DenseVector> vecs;
  for (int i = 0; i < 200; ++i) {
    rows.emplace_back(id_of(i), testing::random_unit(rng, 16));
    vecs.push_back(rows.back().second);
  }
  const auto flat = build_flat(rows);
  // Rows are already in id order, so the model lines up with the index rows.
  const ClusteredIndex ci(flat, fit_kmeans(vecs, 8, 30, 3));
  for (int t = 0; t < 20; ++t) {
    const auto q = testing::random_unit(rng, 16);
    EXPECT_EQ(search_clustered(ci, q, 10, 8), search_flat(flat, q, 10));
    EXPECT_GE(search_clustered(ci, q, 10, 1).size(), 1u);
  }
  std::size_t members = 0;
  for (const auto& m : ci.members()) members += m.size();
  EXPECT_EQ(members, 200u);
}

TEST(Clustered, BlobCentroidQueryMatchesFlat) {
  std::mt19937_64 rng(21);
  const auto data = two_blobs(rng, 15);
  Pairs rows;
  for (std::size_t i = 0; i < data.size(); ++i) rows.emplace_back(id_of(static_cast<int>(i)), data[i]);
  const auto flat = build_flat(rows);
  const ClusteredIndex ci(flat, fit_kmeans(data, 2, 50, 1));
  for (const auto& c : ci.model().centroids) {
    EXPECT_EQ(search_clustered(ci, c, 5), search_flat(flat, c, 5));
  }
}

TEST(Clustered, ModelMustCoverRows) {
  const auto flat = build_flat(basis());
  EXPECT_THROW(ClusteredIndex(flat, fit_kmeans(scalars({1, 2}), 1, 5, 1)), Error);
}

}  // namespace
}  // namespace amelo
