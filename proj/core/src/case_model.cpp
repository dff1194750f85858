#include "amelo/case_model.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

#include "amelo/error.hpp"
#include "amelo/resources.hpp"
#include "amelo/text_util.hpp"

namespace amelo {

using nlohmann::json;

std::string_view to_string(Gender g) noexcept {
  switch (g) {
    case Gender::Male: return "male";
    case Gender::Female: return "female";
    case Gender::Other: return "other";
    case Gender::Unknown: return "unknown";
  }
  return "unknown";
}

std::string_view to_string(VariantLabel v) noexcept {
  switch (v) {
    case VariantLabel::SolidMulticystic: return "SolidMulticystic";
    case VariantLabel::Unicystic: return "Unicystic";
    case VariantLabel::Peripheral: return "Peripheral";
    case VariantLabel::Desmoplastic: return "Desmoplastic";
    case VariantLabel::Other: return "Other";
    case VariantLabel::Unknown: return "Unknown";
  }
  return "Unknown";
}

std::string_view to_string(DiagnosisLabel d) noexcept {
  switch (d) {
    case DiagnosisLabel::Follicular: return "Follicular";
    case DiagnosisLabel::Plexiform: return "Plexiform";
    case DiagnosisLabel::Acanthomatous: return "Acanthomatous";
    case DiagnosisLabel::GranularCell: return "GranularCell";
    case DiagnosisLabel::BasalCell: return "BasalCell";
    case DiagnosisLabel::Adenoid: return "Adenoid";
    case DiagnosisLabel::Other: return "Other";
    case DiagnosisLabel::Unknown: return "Unknown";
  }
  return "Unknown";
}

std::string_view to_string(Modality m) noexcept {
  switch (m) {
    case Modality::Radiology: return "radiology";
    case Modality::Pathology: return "pathology";
    case Modality::MedicalPhotograph: return "medical_photograph";
    case Modality::Chart: return "chart";
  }
  return "radiology";
}

namespace {

template <typename Enum, std::size_t N>
std::optional<Enum> parse_enum(std::string_view s, const Enum (&values)[N]) {
  for (Enum v : values) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

constexpr Gender kGenders[] = {Gender::Male, Gender::Female, Gender::Other, Gender::Unknown};
constexpr VariantLabel kVariants[] = {VariantLabel::SolidMulticystic, VariantLabel::Unicystic,
                                      VariantLabel::Peripheral,       VariantLabel::Desmoplastic,
                                      VariantLabel::Other,            VariantLabel::Unknown};
constexpr DiagnosisLabel kDiagnoses[] = {
    DiagnosisLabel::Follicular, DiagnosisLabel::Plexiform, DiagnosisLabel::Acanthomatous,
    DiagnosisLabel::GranularCell, DiagnosisLabel::BasalCell, DiagnosisLabel::Adenoid,
    DiagnosisLabel::Other, DiagnosisLabel::Unknown};
constexpr Modality kModalities[] = {Modality::Radiology, Modality::Pathology,
                                    Modality::MedicalPhotograph, Modality::Chart};

}  // namespace

std::optional<Gender> parse_gender(std::string_view s) { return parse_enum(s, kGenders); }
std::optional<VariantLabel> parse_variant_label(std::string_view s) { return parse_enum(s, kVariants); }
std::optional<DiagnosisLabel> parse_diagnosis_label(std::string_view s) {
  return parse_enum(s, kDiagnoses);
}
std::optional<Modality> parse_modality(std::string_view s) { return parse_enum(s, kModalities); }

const std::vector<std::string>& case_text_fields() {
  static const std::vector<std::string> fields = {
      "presenting_complaint", "clinical_features", "radiological_features",
      "histopathological_features", "tumor_location", "diagnosis_raw",
      "variant_raw", "treatment", "outcome"};
  return fields;
}

bool is_case_text_field(std::string_view field) {
  const auto& fields = case_text_fields();
  return std::find(fields.begin(), fields.end(), field) != fields.end();
}

std::string* text_field(CaseRecord& r, std::string_view field) {
  if (field == "presenting_complaint") return &r.presenting_complaint;
  if (field == "clinical_features") return &r.clinical_features;
  if (field == "radiological_features") return &r.radiological_features;
  if (field == "histopathological_features") return &r.histopathological_features;
  if (field == "tumor_location") return &r.tumor_location;
  if (field == "diagnosis_raw") return &r.diagnosis_raw;
  if (field == "variant_raw") return &r.variant_raw;
  if (field == "treatment") return &r.treatment;
  if (field == "outcome") {
    if (!r.outcome) r.outcome.emplace();
    return &*r.outcome;
  }
  return nullptr;
}

std::string text_field_value(const CaseRecord& r, std::string_view field) {
  if (field == "outcome") return r.outcome.value_or("");
  auto& mutable_record = const_cast<CaseRecord&>(r);
  const std::string* p = text_field(mutable_record, field);
  return p ? *p : std::string{};
}

const std::set<std::string>& image_label_taxonomy() {
  static const std::set<std::string> labels = {
      // core modalities
      "radiology", "pathology", "medical photograph",
      // radiology scans
      "ct", "x ray", "panoramic", "mri", "opg", "cone beam", "angiography", "ultrasound", "pet",
      "cta",
      // radiology views
      "axial", "dental view", "sagittal", "frontal", "occlusal", "periapical", "oblique",
      "ultrasound view", "bone window", "posteroanterior",
      // pathology stains
      "h&e", "immunostaining", "pas", "ihc", "congo red", "gram", "masson trichrome",
      "van gieson", "papanicolaou", "alcian blue", "fish", "giemsa",
      // clinical descriptors
      "head", "mass", "thorax", "abdomen", "pelvis", "neck", "contrast", "spin echo", "ankle",
      "lower limb", "t2", "malignant", "t1",
      // image types
      "other medical photograph", "oral photograph", "3d", "skin photograph", "chart",
      // other
      "axial region", "body part", "region specific view"};
  return labels;
}

std::vector<std::string> ValidationReport::messages() const {
  std::vector<std::string> out;
  out.reserve(violations.size());
  for (const auto& v : violations) out.push_back(v.to_string());
  return out;
}

bool is_valid_pmcid(std::string_view pmcid) {
  if (pmcid.size() < 4 || pmcid.substr(0, 3) != "PMC") return false;
  return std::all_of(pmcid.begin() + 3, pmcid.end(),
                     [](char c) { return c >= '0' && c <= '9'; });
}

ValidationReport validate_case(const CaseRecord& r) {
  ValidationReport report;
  auto add = [&](std::string path, std::string msg) {
    report.violations.push_back({std::move(path), std::move(msg)});
  };

  if (r.pmcid.empty()) {
    add("pmcid", "empty");
  } else if (r.pmcid.rfind("PMC", 0) != 0) {
    add("pmcid", "missing PMC prefix");
  } else if (!is_valid_pmcid(r.pmcid)) {
    add("pmcid", "expected digits after PMC prefix");
  }

  if (r.patient_age) {
    const double age = *r.patient_age;
    if (!std::isfinite(age) || age < 0.0 || age > kMaxPatientAge) {
      add("patient_age", "out of range [0, 130]");
    }
  }

  for (std::size_t i = 0; i < r.tumor_size_mm.size(); ++i) {
    const double v = r.tumor_size_mm[i];
    const std::string path = "tumor_size_mm[" + std::to_string(i) + "]";
    if (!std::isfinite(v)) {
      add(path, "non-finite");
    } else if (v <= 0.0) {
      add(path, "non-positive");
    } else if (v >= kMaxTumorSizeMm) {
      add(path, "not below 1000 mm");
    }
  }
  return report;
}

ValidationReport validate_repository(const std::vector<CaseRecord>& records) {
  ValidationReport report;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string prefix = "[" + std::to_string(i) + "].";
    for (auto& v : validate_case(records[i]).violations) {
      report.violations.push_back({prefix + v.path, v.message});
    }
    if (!seen.insert(records[i].pmcid).second) {
      report.violations.push_back({prefix + "pmcid", "duplicate " + records[i].pmcid});
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Label normalization

std::string canonicalize_label_text(std::string_view raw) {
  std::string lowered = text::to_lower(raw);
  static const std::regex kAmelo(R"(\bameloblastomas?\b)");
  lowered = std::regex_replace(lowered, kAmelo, " ");
  std::string collapsed = text::collapse_whitespace(lowered);
  const auto strip = [](char c) { return c == '.' || c == ',' || c == ';' || c == ':'; };
  while (!collapsed.empty() && strip(collapsed.back())) collapsed.pop_back();
  while (!collapsed.empty() && strip(collapsed.front())) collapsed.erase(collapsed.begin());
  return std::string(text::trim(collapsed));
}

namespace {

template <typename Label>
std::optional<Label> parse_label(std::string_view s);

template <>
std::optional<VariantLabel> parse_label<VariantLabel>(std::string_view s) {
  return parse_variant_label(s);
}
template <>
std::optional<DiagnosisLabel> parse_label<DiagnosisLabel>(std::string_view s) {
  return parse_diagnosis_label(s);
}

// Position of `phrase` in `text` as a run of whole words, or npos.
std::size_t find_phrase(std::string_view text, std::string_view phrase) {
  for (std::size_t pos = text.find(phrase); pos != std::string_view::npos; pos = text.find(phrase, pos + 1)) {
    const std::size_t end = pos + phrase.size();
    const bool left = pos == 0 || !text::is_word_char(text[pos - 1]);
    const bool right = end == text.size() || !text::is_word_char(text[end]);
    if (left && right) return pos;
  }
  return std::string_view::npos;
}

template <typename Label>
Label normalize_label(std::string_view raw, const SynonymTable<Label>& table) {
  const std::string key = canonicalize_label_text(raw);
  if (key.empty()) return Label::Unknown;
  if (auto it = table.phrases.find(key); it != table.phrases.end()) return it->second;

  // A known phrase inside longer text ("consistent with follicular pattern"):
  // the longest phrase wins, then the earliest.
  std::optional<Label> contained;
  std::size_t contained_len = 0;
  std::size_t contained_pos = 0;
  for (const auto& [phrase, label] : table.phrases) {
    if (label == Label::Other || label == Label::Unknown) continue;
    const auto pos = find_phrase(key, phrase);
    if (pos == std::string::npos) continue;
    if (!contained || phrase.size() > contained_len || (phrase.size() == contained_len && pos < contained_pos)) {
      contained = label;
      contained_len = phrase.size();
      contained_pos = pos;
    }
  }
  if (contained) return *contained;

  double best = -1.0;
  std::optional<Label> best_label;
  for (const auto& [phrase, label] : table.phrases) {
    if (label == Label::Other || label == Label::Unknown) continue;
    const double sim = text::normalized_similarity(key, phrase);
    const bool better =
        sim > best || (sim == best && best_label && to_string(label) < to_string(*best_label));
    if (better) {
      best = sim;
      best_label = label;
    }
  }
  if (best_label && best >= kFuzzyAcceptThreshold) return *best_label;
  return Label::Other;
}

}  // namespace

template <typename Label>
SynonymTable<Label> SynonymTable<Label>::parse(std::string_view tsv) {
  SynonymTable table;
  std::size_t line_no = 0;
  for (const auto& line : text::split(tsv, '\n')) {
    ++line_no;
    const auto trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const auto cols = text::split(trimmed, '\t');
    if (cols.size() != 2) {
      throw Error(ErrorCode::SchemaViolation, "expected 'phrase<TAB>label'",
                  "line " + std::to_string(line_no));
    }
    const auto label = parse_label<Label>(text::trim(cols[1]));
    if (!label) {
      throw Error(ErrorCode::SchemaViolation, "unknown label " + cols[1],
                  "line " + std::to_string(line_no));
    }
    table.phrases[canonicalize_label_text(cols[0])] = *label;
  }
  return table;
}

template struct SynonymTable<VariantLabel>;
template struct SynonymTable<DiagnosisLabel>;

const VariantSynonyms& default_variant_synonyms() {
  static const VariantSynonyms table = VariantSynonyms::parse(builtin_resource("variant_synonyms.tsv"));
  return table;
}

const DiagnosisSynonyms& default_diagnosis_synonyms() {
  static const DiagnosisSynonyms table =
      DiagnosisSynonyms::parse(builtin_resource("diagnosis_synonyms.tsv"));
  return table;
}

VariantLabel normalize_variant(std::string_view raw, const VariantSynonyms& table) {
  return normalize_label(raw, table);
}

DiagnosisLabel normalize_diagnosis(std::string_view raw, const DiagnosisSynonyms& table) {
  return normalize_label(raw, table);
}

// ---------------------------------------------------------------------------
// LabelCodec

LabelCodec LabelCodec::build(const std::vector<std::string>& labels) {
  if (labels.empty()) throw Error(ErrorCode::EmptyLabelSet, "cannot build a codec from no labels");
  LabelCodec codec;
  codec.classes_ = labels;
  std::sort(codec.classes_.begin(), codec.classes_.end());
  codec.classes_.erase(std::unique(codec.classes_.begin(), codec.classes_.end()),
                       codec.classes_.end());
  for (std::size_t i = 0; i < codec.classes_.size(); ++i) {
    codec.code_of_.emplace(codec.classes_[i], static_cast<int>(i));
  }
  return codec;
}

int LabelCodec::encode(std::string_view label) const {
  const auto it = code_of_.find(label);
  if (it == code_of_.end()) throw Error(ErrorCode::NotFound, "label not in codec: " + std::string(label));
  return it->second;
}

const std::string& LabelCodec::decode(int code) const {
  if (code < 0 || static_cast<std::size_t>(code) >= classes_.size()) {
    throw Error(ErrorCode::NotFound, "code out of range: " + std::to_string(code));
  }
  return classes_[static_cast<std::size_t>(code)];
}

// ---------------------------------------------------------------------------
// JSON

namespace {

[[noreturn]] void schema_error(const std::string& path, const std::string& msg) {
  throw Error(ErrorCode::SchemaViolation, path + ": " + msg, path);
}

void require_object(const json& j, const std::string& what) {
  if (!j.is_object()) schema_error(what, "expected object");
}

void reject_unknown(const json& j, std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      schema_error(key, "unknown field");
    }
  }
}

std::string get_string(const json& j, const char* key, bool required = false) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    if (required) schema_error(key, "required");
    return {};
  }
  if (!it->is_string()) schema_error(key, "expected string");
  return it->get<std::string>();
}

}  // namespace

void to_json(json& j, const CaseRecord& r) {
  j = json::object();
  j["pmcid"] = r.pmcid;
  j["patient_age"] = r.patient_age ? json(*r.patient_age) : json(nullptr);
  j["patient_gender"] = r.patient_gender ? json(std::string(to_string(*r.patient_gender))) : json(nullptr);
  j["presenting_complaint"] = r.presenting_complaint;
  j["clinical_features"] = r.clinical_features;
  j["radiological_features"] = r.radiological_features;
  j["histopathological_features"] = r.histopathological_features;
  j["tumor_location"] = r.tumor_location;
  j["diagnosis_raw"] = r.diagnosis_raw;
  j["diagnosis_label"] = std::string(to_string(r.diagnosis_label));
  j["variant_raw"] = r.variant_raw;
  j["variant_label"] = std::string(to_string(r.variant_label));
  j["tumor_size_mm"] = r.tumor_size_mm;
  j["treatment"] = r.treatment;
  j["outcome"] = r.outcome ? json(*r.outcome) : json(nullptr);
}

void from_json(const json& j, CaseRecord& r) {
  require_object(j, "$");
  reject_unknown(j, {"pmcid", "patient_age", "patient_gender", "presenting_complaint",
                     "clinical_features", "radiological_features", "histopathological_features",
                     "tumor_location", "diagnosis_raw", "diagnosis_label", "variant_raw",
                     "variant_label", "tumor_size_mm", "treatment", "outcome"});
  CaseRecord out;
  out.pmcid = get_string(j, "pmcid", true);
  if (auto it = j.find("patient_age"); it != j.end() && !it->is_null()) {
    if (!it->is_number()) schema_error("patient_age", "expected number");
    out.patient_age = it->get<double>();
  }
  if (auto it = j.find("patient_gender"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) schema_error("patient_gender", "expected string");
    const auto g = parse_gender(it->get<std::string>());
    if (!g) schema_error("patient_gender", "unknown value " + it->get<std::string>());
    out.patient_gender = g;
  }
  out.presenting_complaint = get_string(j, "presenting_complaint");
  out.clinical_features = get_string(j, "clinical_features");
  out.radiological_features = get_string(j, "radiological_features");
  out.histopathological_features = get_string(j, "histopathological_features");
  out.tumor_location = get_string(j, "tumor_location");
  out.diagnosis_raw = get_string(j, "diagnosis_raw");
  if (auto s = get_string(j, "diagnosis_label"); !s.empty()) {
    const auto d = parse_diagnosis_label(s);
    if (!d) schema_error("diagnosis_label", "unknown value " + s);
    out.diagnosis_label = *d;
  }
  out.variant_raw = get_string(j, "variant_raw");
  if (auto s = get_string(j, "variant_label"); !s.empty()) {
    const auto v = parse_variant_label(s);
    if (!v) schema_error("variant_label", "unknown value " + s);
    out.variant_label = *v;
  }
  if (auto it = j.find("tumor_size_mm"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) schema_error("tumor_size_mm", "expected array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      if (!(*it)[i].is_number()) schema_error("tumor_size_mm[" + std::to_string(i) + "]", "expected number");
      out.tumor_size_mm.push_back((*it)[i].get<double>());
    }
  }
  out.treatment = get_string(j, "treatment");
  if (auto it = j.find("outcome"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) schema_error("outcome", "expected string");
    out.outcome = it->get<std::string>();
  }
  r = std::move(out);
}

void to_json(json& j, const ImageRecord& r) {
  j = json::object();
  j["image_id"] = r.image_id;
  j["pmcid"] = r.pmcid;
  j["modality"] = std::string(to_string(r.modality));
  j["sub_labels"] = r.sub_labels;
  j["caption"] = r.caption;
  j["split_lineage"] = r.split_lineage ? json(*r.split_lineage) : json(nullptr);
  j["file_path"] = r.file_path;
}

void from_json(const json& j, ImageRecord& r) {
  require_object(j, "$");
  reject_unknown(j, {"image_id", "pmcid", "modality", "sub_labels", "caption", "split_lineage",
                     "file_path"});
  ImageRecord out;
  out.image_id = get_string(j, "image_id", true);
  out.pmcid = get_string(j, "pmcid", true);
  const auto m = get_string(j, "modality", true);
  const auto modality = parse_modality(m);
  if (!modality) schema_error("modality", "unknown value " + m);
  out.modality = *modality;
  if (auto it = j.find("sub_labels"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) schema_error("sub_labels", "expected array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      if (!(*it)[i].is_string()) schema_error("sub_labels[" + std::to_string(i) + "]", "expected string");
      out.sub_labels.insert((*it)[i].get<std::string>());
    }
  }
  out.caption = get_string(j, "caption");
  if (auto s = get_string(j, "split_lineage"); !s.empty()) out.split_lineage = s;
  out.file_path = get_string(j, "file_path");
  r = std::move(out);
}

CaseRecord case_from_json(const json& j) {
  CaseRecord r;
  from_json(j, r);
  return r;
}

ImageRecord image_from_json(const json& j) {
  ImageRecord r;
  from_json(j, r);
  return r;
}

}  // namespace amelo
