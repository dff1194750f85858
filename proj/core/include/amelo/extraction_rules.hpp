#pragma once

#include <map>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "amelo/case_model.hpp"
#include "amelo/vectorizer.hpp"

namespace amelo {

inline constexpr double kCentroidThreshold = 0.65;

struct RegexRule {
  std::string pattern;
  std::string field;
  std::regex compiled;
};

/// Keyword lists per CaseRecord text field, regex rules, and the abbreviation
/// guard list used by sentence segmentation.
///
/// File format: {"<field>": [keywords...], "patterns": [{"regex", "field"}...],
/// "abbreviations": [...]}.
class RulePack {
 public:
  /// Throws Error{InvalidRulePack} naming the offending key.
  static RulePack from_json(const nlohmann::json& j);
  static RulePack load(const std::string& path);
  static const RulePack& builtin();

  const std::map<std::string, std::vector<std::string>>& keywords() const noexcept { return keywords_; }
  const std::vector<RegexRule>& patterns() const noexcept { return patterns_; }
  const std::vector<std::string>& abbreviations() const noexcept { return abbreviations_; }

 private:
  std::map<std::string, std::vector<std::string>> keywords_;
  std::vector<RegexRule> patterns_;
  std::vector<std::string> abbreviations_;
};

enum class ExtractionMethod { Keyword, Regex, Centroid, Llm, None };

std::string_view to_string(ExtractionMethod m) noexcept;

struct FieldExtraction {
  std::string text;
  ExtractionMethod method = ExtractionMethod::None;
  double confidence = 0.0;

  friend bool operator==(const FieldExtraction&, const FieldExtraction&) = default;
};

/// Per-field output of extraction. Every CaseRecord text field is present;
/// method None holds exactly when the text is empty. A field fed by several
/// sentences reports the method of its first contribution and the lowest
/// confidence among its contributions.
struct ExtractionResult {
  std::string pmcid;
  std::map<std::string, FieldExtraction> fields;
  std::vector<double> tumor_size_mm;

  const FieldExtraction& field(std::string_view name) const;

  /// Builds a CaseRecord with labels normalized from the raw diagnosis and
  /// variant text.
  CaseRecord to_case_record() const;
  nlohmann::json to_json() const;

  friend bool operator==(const ExtractionResult&, const ExtractionResult&) = default;
};

/// Token -> embedding table, loaded from "token v1 v2 ... vd" lines. A leading
/// word2vec-style "<count> <dim>" header line is accepted and skipped.
class WordLexicon {
 public:
  static WordLexicon parse(std::string_view text);
  static WordLexicon load(const std::string& path);

  void add(std::string token, DenseVector v);
  const DenseVector* find(std::string_view token) const;
  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return vectors_.size(); }

 private:
  std::size_t dimension_ = 0;
  std::map<std::string, DenseVector, std::less<>> vectors_;
};

struct CategoryCentroids {
  std::size_t dimension = 0;
  std::map<std::string, DenseVector> centroids;

  /// Centroid per rule-pack field over the in-lexicon tokens of its keyword
  /// list. Fields with no in-lexicon keyword get no centroid.
  static CategoryCentroids from_rules(const RulePack& rules, const WordLexicon& lexicon);
};

struct CentroidMatch {
  std::string category;
  double cosine = 0.0;
};

std::vector<std::string> segment_sentences(std::string_view text);
std::vector<std::string> segment_sentences(std::string_view text,
                                           const std::vector<std::string>& abbreviations);

/// Keyword and regex pass. A sentence containing any trigger term of a field is
/// appended to that field (several fields may claim one sentence); regex rules
/// add their captured span to fields the sentence did not already feed.
ExtractionResult extract_fields(std::string_view text, const RulePack& rules,
                                std::string pmcid = {});

/// Argmax-cosine category if it reaches `threshold`; ties go to the
/// lexicographically smaller category. Zero query vectors never match.
std::optional<CentroidMatch> categorize_by_centroid(std::span<const float> sentence_vec,
                                                    const CategoryCentroids& centroids,
                                                    double threshold = kCentroidThreshold);

/// Mean of the in-lexicon token vectors; nullopt when every token is OOV.
std::optional<DenseVector> sentence_embedding(const std::vector<std::string>& tokens,
                                              const WordLexicon& lexicon);

/// All magnitude+unit groups in appearance order, in millimetres. A unit
/// written once after a chain ("4.5 x 3.2 cm") applies to each magnitude in it.
std::vector<double> normalize_dimensions(std::string_view text);

/// "A mm x B mm" rendering that normalize_dimensions reads back unchanged.
std::string render_dimensions_mm(const std::vector<double>& mm);

/// Per sentence: centroid categorization first, keyword/regex matching when it
/// yields nothing (low similarity or all tokens out of vocabulary).
ExtractionResult extract_cascade(std::string_view text, const RulePack& rules,
                                 const CategoryCentroids& centroids, const WordLexicon& lexicon,
                                 double threshold = kCentroidThreshold, std::string pmcid = {});

}  // namespace amelo
