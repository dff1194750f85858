#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "amelo/error.hpp"

namespace amelo {

/// Fixed-dimension embedding, stored as 32-bit floats.
using DenseVector = std::vector<float>;

inline constexpr std::size_t kDefaultDenseDimension = 384;
inline constexpr std::size_t kDefaultMaxFeatures = 500;
inline constexpr std::string_view kDefaultStopwordList = "stopwords_en_v1.txt";

// ---------------------------------------------------------------------------
// Text preprocessing

/// Case-fold, split on non-alphanumerics, drop stopwords, Porter-stem.
class TextPreprocessor {
 public:
  /// Uses the built-in stopword list and stemming.
  TextPreprocessor();
  TextPreprocessor(std::string stopword_list_id, std::set<std::string> stopwords, bool stemming);

  /// Parses a stopword file: one token per line, '#' comments.
  static std::set<std::string> parse_stopwords(std::string_view text);

  std::vector<std::string> operator()(std::string_view raw) const;

  const std::string& stopword_list_id() const noexcept { return list_id_; }
  bool stemming() const noexcept { return stemming_; }

 private:
  std::string list_id_;
  std::set<std::string> stopwords_;
  bool stemming_ = true;
};

const TextPreprocessor& default_preprocessor();

std::vector<std::string> preprocess_text(std::string_view raw);

/// Lower-cased alphanumeric runs, no stopword removal or stemming.
std::vector<std::string> simple_tokens(std::string_view raw);

// ---------------------------------------------------------------------------
// TF-IDF

struct SparseVector {
  std::size_t dimension = 0;
  /// (column, weight) with strictly increasing columns.
  std::vector<std::pair<std::uint32_t, float>> entries;

  bool is_zero() const noexcept { return entries.empty(); }
  double norm() const noexcept;
  friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

double dot(const SparseVector& a, const SparseVector& b);

/// Throws Error{ZeroVector} if either side is zero, Error{DimensionMismatch}
/// on differing dimensions.
double cosine(const SparseVector& a, const SparseVector& b);

class TfidfModel {
 public:
  /// Vocabulary = the `max_features` most frequent terms by collection count,
  /// ties broken lexicographically; columns are assigned in lexicographic term
  /// order. idf(t) = ln((1 + N) / (1 + df(t))) + 1.
  static TfidfModel fit(const std::vector<std::vector<std::string>>& corpus,
                        std::size_t max_features = kDefaultMaxFeatures,
                        std::string stopword_list_id = std::string(kDefaultStopwordList),
                        bool stemming = true);

  /// Raw term counts times idf, L2-normalized; OOV tokens are ignored and an
  /// all-OOV document maps to the zero vector.
  SparseVector embed(const std::vector<std::string>& tokens) const;

  std::size_t dimension() const noexcept { return terms_.size(); }
  std::size_t max_features() const noexcept { return max_features_; }
  const std::vector<std::string>& terms() const noexcept { return terms_; }
  const std::vector<double>& idf() const noexcept { return idf_; }
  std::optional<std::uint32_t> column(std::string_view term) const;
  std::optional<double> idf_of(std::string_view term) const;
  const std::string& stopword_list_id() const noexcept { return stopword_list_id_; }
  bool stemming() const noexcept { return stemming_; }
  std::size_t document_count() const noexcept { return document_count_; }

  nlohmann::json to_json() const;
  static TfidfModel from_json(const nlohmann::json& j);

  friend bool operator==(const TfidfModel&, const TfidfModel&) = default;

 private:
  std::vector<std::string> terms_;
  std::map<std::string, std::uint32_t, std::less<>> vocabulary_;
  std::vector<double> idf_;
  std::size_t max_features_ = kDefaultMaxFeatures;
  std::size_t document_count_ = 0;
  std::string stopword_list_id_;
  bool stemming_ = true;
};

inline TfidfModel fit_tfidf(const std::vector<std::vector<std::string>>& corpus,
                            std::size_t max_features = kDefaultMaxFeatures) {
  return TfidfModel::fit(corpus, max_features);
}

inline SparseVector embed_tfidf(const TfidfModel& model, const std::vector<std::string>& tokens) {
  return model.embed(tokens);
}

// ---------------------------------------------------------------------------
// Dense vector arithmetic. Accumulation is always in double; the element type
// of the result follows the input.

template <typename T>
double squared_norm(std::span<const T> v) {
  double s = 0.0;
  for (T x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return s;
}

template <typename T>
double dot(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

template <typename T>
std::vector<T> l2_normalize(std::span<const T> v) {
  const double n = std::sqrt(squared_norm(v));
  if (n == 0.0 || !std::isfinite(n)) throw Error(ErrorCode::ZeroVector, "cannot normalize a zero vector");
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<T>(static_cast<double>(v[i]) / n);
  return out;
}

template <typename T>
std::vector<T> l2_normalize(const std::vector<T>& v) {
  return l2_normalize(std::span<const T>(v));
}

template <typename T>
double cosine(std::span<const T> a, std::span<const T> b) {
  const double d = dot(a, b);
  const double na = std::sqrt(squared_norm(a));
  const double nb = std::sqrt(squared_norm(b));
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
  const double c = d / (na * nb);
  return c > 1.0 ? 1.0 : (c < -1.0 ? -1.0 : c);
}

template <typename T>
double cosine(const std::vector<T>& a, const std::vector<T>& b) {
  return cosine(std::span<const T>(a), std::span<const T>(b));
}

template <typename T>
std::vector<T> centroid(const std::vector<std::vector<T>>& vectors) {
  if (vectors.empty()) throw Error(ErrorCode::EmptySet, "centroid of no vectors");
  const std::size_t d = vectors.front().size();
  std::vector<double> acc(d, 0.0);
  for (const auto& v : vectors) {
    if (v.size() != d) {
      throw Error(ErrorCode::DimensionMismatch, std::to_string(v.size()) + " vs " + std::to_string(d));
    }
    for (std::size_t i = 0; i < d; ++i) acc[i] += static_cast<double>(v[i]);
  }
  std::vector<T> out(d);
  const double n = static_cast<double>(vectors.size());
  for (std::size_t i = 0; i < d; ++i) out[i] = static_cast<T>(acc[i] / n);
  return out;
}

template <typename T>
double squared_l2(std::span<const T> a, std::span<const T> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += diff * diff;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Dense embedding store

/// Externally computed embeddings keyed by pmcid. The first ingestion fixes
/// the dimension. Readers may share a const store; writers must be serialized
/// by the owner.
class DenseStore {
 public:
  DenseStore() = default;
  explicit DenseStore(std::size_t dimension) : dimension_(dimension) {}

  /// In strict mode ids must satisfy `is_known` or ingestion throws
  /// Error{UnknownCase}.
  void set_strict(std::function<bool(std::string_view)> is_known) { is_known_ = std::move(is_known); }

  void ingest(const std::string& id, std::span<const float> values);
  void ingest(const std::string& id, const std::vector<double>& values);

  /// One {"pmcid": "...", "vector": [...]} object per line; blank lines are
  /// skipped. Errors carry "line N" as their path. Returns rows ingested.
  std::size_t ingest_jsonl(std::string_view text);

  std::optional<std::size_t> dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return vectors_.size(); }
  bool contains(std::string_view id) const;
  const DenseVector* find(std::string_view id) const;
  const std::map<std::string, DenseVector, std::less<>>& vectors() const noexcept { return vectors_; }

  /// Serializes back to the JSONL ingestion format, ordered by id.
  std::string to_jsonl() const;

 private:
  std::optional<std::size_t> dimension_;
  std::map<std::string, DenseVector, std::less<>> vectors_;
  std::function<bool(std::string_view)> is_known_;
};

inline void ingest_dense(const std::string& id, std::span<const float> values, DenseStore& store) {
  store.ingest(id, values);
}

}  // namespace amelo
