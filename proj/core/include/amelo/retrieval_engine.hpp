#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "amelo/case_model.hpp"
#include "amelo/vector_index.hpp"
#include "amelo/vectorizer.hpp"

namespace amelo {

/// Byte range [begin, end) of one "Label: value." segment of a CaseText.
struct FieldSpan {
  std::string field;
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const FieldSpan&, const FieldSpan&) = default;
};

/// Canonical text of a case; segments are joined by single spaces.
struct CaseText {
  std::string pmcid;
  std::string text;
  std::vector<FieldSpan> spans;
};

/// "Presenting complaint: ... Patient gender: ..." with empty slots rendered
/// as "unknown".
CaseText build_case_text(const CaseRecord& record);

enum class RetrievalMethod { Dense, Sparse, Keyword };
std::string_view to_string(RetrievalMethod m) noexcept;

struct RetrievalConfig {
  std::size_t k_default = 5;
  std::size_t short_query_tokens = 5;
  double underperform_threshold = 0.3;
  std::size_t probes = 1;
  std::size_t max_features = kDefaultMaxFeatures;

  static RetrievalConfig from_json(const nlohmann::json& j);
};

enum class QueryMode { FreeText, StructuredForm };

struct Query {
  QueryMode mode = QueryMode::FreeText;
  std::string text;
  std::optional<CaseRecord> form;
  std::size_t k = 5;
  /// Externally computed query embedding; dense search needs one.
  std::optional<DenseVector> vector;

  /// {"mode": "free_text"|"structured_form", "text"|"form", "k", "vector"}.
  /// Throws SchemaViolation with a field path.
  static Query from_json(const nlohmann::json& j, std::size_t k_default = 5);
  nlohmann::json to_json() const;
};

struct CaseSummary {
  std::string diagnosis;
  std::string variant;
  std::string treatment;
  std::vector<double> tumor_size_mm;
  std::optional<double> patient_age;
  std::optional<Gender> patient_gender;
  std::string reference_id;
};

struct RankedResult {
  std::string pmcid;
  double similarity = 0.0;
  double distance = 0.0;
  std::size_t rank = 0;
  RetrievalMethod method = RetrievalMethod::Keyword;
  CaseSummary summary;

  nlohmann::json to_json() const;
};

struct QueryOutcome {
  RetrievalMethod method = RetrievalMethod::Keyword;
  std::vector<RankedResult> results;

  nlohmann::json to_json() const;
};

/// Immutable snapshot of an indexed repository. Share it through
/// shared_ptr<const RetrievalState>; rebuilds produce a new one.
class RetrievalState {
 public:
  const RetrievalConfig& config() const noexcept { return config_; }
  std::size_t size() const noexcept { return cases_.size(); }
  const std::map<std::string, CaseRecord, std::less<>>& cases() const noexcept { return cases_; }
  const std::map<std::string, CaseText, std::less<>>& case_texts() const noexcept { return texts_; }
  const TfidfModel& tfidf() const noexcept { return tfidf_; }
  const SparseMatrix& sparse() const noexcept { return sparse_; }
  /// Null when no case has a usable dense vector.
  const FlatIndex* dense() const noexcept { return dense_ ? &*dense_ : nullptr; }
  const std::set<std::string>& terms_of(const std::string& pmcid) const { return terms_.at(pmcid); }
  const TextPreprocessor& preprocessor() const noexcept { return preprocessor_; }

 private:
  friend std::shared_ptr<const RetrievalState> index_repository(const std::vector<CaseRecord>&,
                                                                const DenseStore&, const RetrievalConfig&);
  RetrievalConfig config_;
  std::map<std::string, CaseRecord, std::less<>> cases_;
  std::map<std::string, CaseText, std::less<>> texts_;
  std::map<std::string, std::set<std::string>, std::less<>> terms_;
  TfidfModel tfidf_;
  SparseMatrix sparse_;
  std::optional<FlatIndex> dense_;
  TextPreprocessor preprocessor_;
};

/// Builds case texts, fits TF-IDF over them and indexes every case with a
/// non-zero dense vector (L2-normalized). Cases without one are sparse-only.
std::shared_ptr<const RetrievalState> index_repository(const std::vector<CaseRecord>& cases,
                                                      const DenseStore& dense,
                                                      const RetrievalConfig& config = {});

/// clamp(1 - d^2 / 2, 0, 1). Throws OutOfRangeDistance outside [0, 2].
double distance_to_similarity(double d);

/// A query after text preparation, ready for routing.
struct PreparedQuery {
  std::vector<std::string> tokens;
  SparseVector tfidf;
  std::optional<DenseVector> vector;  // normalized; absent if not supplied or zero
  std::size_t k = 5;
};

PreparedQuery prepare_query(const RetrievalState& state, const Query& q);

/// Runs the cascade and returns the method that produced the final list.
RetrievalMethod cascade_route(const RetrievalState& state, const PreparedQuery& q);

/// score = |query terms & case terms| / |query terms|; zero scores are
/// dropped. Throws EmptyQuery when `query_terms` is empty.
std::vector<RankedResult> keyword_search(const RetrievalState& state, const std::vector<std::string>& query_terms,
                                         std::size_t k);

/// Throws EmptyQuery (blank text or empty form) or EmptyRepository.
QueryOutcome query(const RetrievalState& state, const Query& q);

}  // namespace amelo
