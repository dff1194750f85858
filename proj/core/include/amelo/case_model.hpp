#pragma once

#include <cctype>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace amelo {

enum class Gender { Male, Female, Other, Unknown };

enum class VariantLabel { SolidMulticystic, Unicystic, Peripheral, Desmoplastic, Other, Unknown };

enum class DiagnosisLabel {
  Follicular,
  Plexiform,
  Acanthomatous,
  GranularCell,
  BasalCell,
  Adenoid,
  Other,
  Unknown
};

enum class Modality { Radiology, Pathology, MedicalPhotograph, Chart };

std::string_view to_string(Gender g) noexcept;
std::string_view to_string(VariantLabel v) noexcept;
std::string_view to_string(DiagnosisLabel d) noexcept;
std::string_view to_string(Modality m) noexcept;

std::optional<Gender> parse_gender(std::string_view s);
std::optional<VariantLabel> parse_variant_label(std::string_view s);
std::optional<DiagnosisLabel> parse_diagnosis_label(std::string_view s);
std::optional<Modality> parse_modality(std::string_view s);

/// One structured case report, keyed by its PubMed Central id.
struct CaseRecord {
  std::string pmcid;
  std::optional<double> patient_age;
  std::optional<Gender> patient_gender;
  std::string presenting_complaint;
  std::string clinical_features;
  std::string radiological_features;
  std::string histopathological_features;
  std::string tumor_location;
  std::string diagnosis_raw;
  DiagnosisLabel diagnosis_label = DiagnosisLabel::Unknown;
  std::string variant_raw;
  VariantLabel variant_label = VariantLabel::Unknown;
  std::vector<double> tumor_size_mm;
  std::string treatment;
  std::optional<std::string> outcome;

  friend bool operator==(const CaseRecord&, const CaseRecord&) = default;
};

/// Names of the free-text fields of CaseRecord that extraction may populate.
const std::vector<std::string>& case_text_fields();
bool is_case_text_field(std::string_view field);

/// Mutable access to a text field by name; `outcome` is materialized on write.
std::string* text_field(CaseRecord& record, std::string_view field);
std::string text_field_value(const CaseRecord& record, std::string_view field);

struct ImageRecord {
  std::string image_id;
  std::string pmcid;
  Modality modality = Modality::Radiology;
  std::set<std::string> sub_labels;
  std::string caption;
  std::optional<std::string> split_lineage;
  std::string file_path;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

/// Sub-category labels of the image taxonomy, lower-cased.
const std::set<std::string>& image_label_taxonomy();

struct Violation {
  std::string path;
  std::string message;

  std::string to_string() const { return path + ": " + message; }
  friend bool operator==(const Violation&, const Violation&) = default;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const noexcept { return violations.empty(); }
  std::vector<std::string> messages() const;
};

bool is_valid_pmcid(std::string_view pmcid);

inline constexpr double kMaxPatientAge = 130.0;
inline constexpr double kMaxTumorSizeMm = 1000.0;

ValidationReport validate_case(const CaseRecord& record);

/// Checks the image invariants; `case_exists` resolves the foreign key.
template <typename CaseLookup>
ValidationReport validate_image(const ImageRecord& image, CaseLookup&& case_exists);

/// Checks per-record invariants plus pmcid uniqueness across the set.
ValidationReport validate_repository(const std::vector<CaseRecord>& records);

/// Maps a synonym phrase to a label, consulted before fuzzy matching.
template <typename Label>
struct SynonymTable {
  std::map<std::string, Label> phrases;

  /// Parses "phrase<TAB>Label" lines; '#' starts a comment line.
  static SynonymTable parse(std::string_view tsv);
};

using VariantSynonyms = SynonymTable<VariantLabel>;
using DiagnosisSynonyms = SynonymTable<DiagnosisLabel>;

const VariantSynonyms& default_variant_synonyms();
const DiagnosisSynonyms& default_diagnosis_synonyms();

inline constexpr double kFuzzyAcceptThreshold = 0.85;

/// Case-folds, trims, drops the word "ameloblastoma" and collapses spaces.
std::string canonicalize_label_text(std::string_view raw);

/// Exact synonym, then the longest synonym phrase contained as whole words,
/// then the closest phrase by normalized Levenshtein similarity if it reaches
/// kFuzzyAcceptThreshold. Anything else is Other; blank input is Unknown.
VariantLabel normalize_variant(std::string_view raw,
                               const VariantSynonyms& table = default_variant_synonyms());
DiagnosisLabel normalize_diagnosis(std::string_view raw,
                                   const DiagnosisSynonyms& table = default_diagnosis_synonyms());

/// Label encoder with classes in lexicographic order.
class LabelCodec {
 public:
  /// Throws Error{EmptyLabelSet} when `labels` is empty.
  static LabelCodec build(const std::vector<std::string>& labels);

  const std::vector<std::string>& classes() const noexcept { return classes_; }
  std::size_t size() const noexcept { return classes_.size(); }

  /// Throws Error{NotFound} for a label outside the codec.
  int encode(std::string_view label) const;
  const std::string& decode(int code) const;

  friend bool operator==(const LabelCodec&, const LabelCodec&) = default;

 private:
  std::vector<std::string> classes_;
  std::map<std::string, int, std::less<>> code_of_;
};

inline LabelCodec build_codec(const std::vector<std::string>& labels) {
  return LabelCodec::build(labels);
}

// JSON: snake_case field names, enums as canonical strings. Parsing is strict
// about unknown keys and types and throws Error{SchemaViolation} with a path.
void to_json(nlohmann::json& j, const CaseRecord& r);
void from_json(const nlohmann::json& j, CaseRecord& r);
void to_json(nlohmann::json& j, const ImageRecord& r);
void from_json(const nlohmann::json& j, ImageRecord& r);

CaseRecord case_from_json(const nlohmann::json& j);
ImageRecord image_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------

template <typename CaseLookup>
ValidationReport validate_image(const ImageRecord& image, CaseLookup&& case_exists) {
  ValidationReport report;
  if (image.image_id.empty()) report.violations.push_back({"image_id", "empty"});
  if (!is_valid_pmcid(image.pmcid)) {
    report.violations.push_back({"pmcid", "not a PMC identifier"});
  } else if (!case_exists(image.pmcid)) {
    report.violations.push_back({"pmcid", "references unknown case"});
  }
  const auto& taxonomy = image_label_taxonomy();
  std::size_t i = 0;
  for (const auto& label : image.sub_labels) {
    std::string lowered;
    for (char c : label) lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (!taxonomy.contains(lowered)) {
      report.violations.push_back({"sub_labels[" + std::to_string(i) + "]", "not in taxonomy: " + label});
    }
    ++i;
  }
  return report;
}

}  // namespace amelo
