#include "amelo/retrieval_engine.hpp"

#include <algorithm>
#include <cmath>

#include "amelo/error.hpp"
#include "amelo/extraction_rules.hpp"
#include "amelo/text_util.hpp"

namespace amelo {
namespace {

std::string slot(std::string_view value) {
  std::string v = text::collapse_whitespace(text::trim(value));
  while (!v.empty() && (v.back() == '.' || v.back() == ' ')) v.pop_back();
  return v.empty() ? "unknown" : v;
}

std::string label_or_raw(const std::string& raw, std::string_view label, bool known) {
  if (!text::trim(raw).empty()) return raw;
  return known ? std::string(label) : std::string();
}

CaseSummary summarize(const CaseRecord& r) {
  CaseSummary s;
  s.diagnosis = label_or_raw(r.diagnosis_raw, to_string(r.diagnosis_label), r.diagnosis_label != DiagnosisLabel::Unknown);
  s.variant = label_or_raw(r.variant_raw, to_string(r.variant_label), r.variant_label != VariantLabel::Unknown);
  s.treatment = r.treatment;
  s.tumor_size_mm = r.tumor_size_mm;
  s.patient_age = r.patient_age;
  s.patient_gender = r.patient_gender;
  s.reference_id = r.pmcid;
  return s;
}

bool form_is_empty(const CaseRecord& r) {
  for (const auto& f : case_text_fields()) {
    if (!text::trim(text_field_value(r, f)).empty()) return false;
  }
  return !r.patient_age && (!r.patient_gender || *r.patient_gender == Gender::Unknown) && r.tumor_size_mm.empty() &&
         r.diagnosis_label == DiagnosisLabel::Unknown && r.variant_label == VariantLabel::Unknown;
}

std::optional<DenseVector> normalized_or_none(const DenseVector& v) {
  if (squared_norm(std::span<const float>(v)) == 0.0) return std::nullopt;
  return l2_normalize(v);
}

struct Routed {
  RetrievalMethod method;
  std::vector<RankedResult> results;
};

std::vector<RankedResult> to_results(const RetrievalState& state, const std::vector<SearchHit>& hits,
                                     RetrievalMethod method) {
  std::vector<RankedResult> out;
  out.reserve(hits.size());
  for (const auto& h : hits) {
    RankedResult r;
    r.pmcid = h.pmcid;
    r.distance = h.distance;
    r.rank = h.rank;
    r.method = method;
    r.similarity = method == RetrievalMethod::Dense ? distance_to_similarity(std::min(h.distance, 2.0))
                                                    : std::clamp(1.0 - h.distance, 0.0, 1.0);
    r.summary = summarize(state.cases().find(h.pmcid)->second);
    out.push_back(std::move(r));
  }
  return out;
}

Routed run_cascade(const RetrievalState& state, const PreparedQuery& q) {
  const auto& cfg = state.config();
  if (state.dense() && q.vector && q.tokens.size() >= cfg.short_query_tokens) {
    auto results = to_results(state, state.dense()->search(*q.vector, q.k), RetrievalMethod::Dense);
    if (!results.empty() && results.front().similarity >= cfg.underperform_threshold) {
      return {RetrievalMethod::Dense, std::move(results)};
    }
  }
  if (!q.tfidf.is_zero() && state.sparse().count() > 0) {
    auto results = to_results(state, knn_sparse(state.sparse(), q.tfidf, q.k), RetrievalMethod::Sparse);
    if (!results.empty() && results.front().similarity > 0.0) return {RetrievalMethod::Sparse, std::move(results)};
  }
  if (q.tokens.empty()) return {RetrievalMethod::Keyword, {}};
  return {RetrievalMethod::Keyword, keyword_search(state, q.tokens, q.k)};
}

}  // namespace

std::string_view to_string(RetrievalMethod m) noexcept {
  switch (m) {
    case RetrievalMethod::Dense: return "dense";
    case RetrievalMethod::Sparse: return "sparse";
    case RetrievalMethod::Keyword: return "keyword";
  }
  return "keyword";
}

CaseText build_case_text(const CaseRecord& r) {
  const std::string age = r.patient_age ? text::format_number(*r.patient_age) : std::string();
  const std::string gender =
      r.patient_gender && *r.patient_gender != Gender::Unknown ? std::string(to_string(*r.patient_gender)) : "";
  const std::string size = r.tumor_size_mm.empty() ? std::string() : render_dimensions_mm(r.tumor_size_mm);
  const std::pair<const char*, std::string> slots[] = {
      {"presenting_complaint", r.presenting_complaint},
      {"clinical_features", r.clinical_features},
      {"radiological_features", r.radiological_features},
      {"histopathological_features", r.histopathological_features},
      {"tumor_location", r.tumor_location},
      {"diagnosis", label_or_raw(r.diagnosis_raw, to_string(r.diagnosis_label),
                                 r.diagnosis_label != DiagnosisLabel::Unknown)},
      {"tumor_size", size},
      {"variant", label_or_raw(r.variant_raw, to_string(r.variant_label), r.variant_label != VariantLabel::Unknown)},
      {"patient_age", age},
      {"patient_gender", gender},
  };
  static constexpr const char* kLabels[] = {"Presenting complaint", "Clinical features", "Radiological features",
                                            "Histopathological features", "Tumor location", "Diagnosis",
                                            "Tumor size", "Tumor variant", "Patient age", "Patient gender"};
  CaseText out;
  out.pmcid = r.pmcid;
  for (std::size_t i = 0; i < std::size(slots); ++i) {
    if (i > 0) out.text.push_back(' ');
    const std::size_t begin = out.text.size();
    out.text += kLabels[i];
    out.text += ": ";
    out.text += slot(slots[i].second);
    out.text.push_back('.');
    out.spans.push_back({slots[i].first, begin, out.text.size()});
  }
  return out;
}

RetrievalConfig RetrievalConfig::from_json(const nlohmann::json& j) {
  RetrievalConfig c;
  const auto read_count = [&](const char* key, std::size_t& dst) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_unsigned() || j[key].get<std::size_t>() == 0) {
      throw Error(ErrorCode::InvalidArgument, "must be a positive integer", key);
    }
    dst = j[key].get<std::size_t>();
  };
  read_count("k_default", c.k_default);
  read_count("short_query_tokens", c.short_query_tokens);
  read_count("probes", c.probes);
  read_count("max_features", c.max_features);
  if (j.contains("underperform_threshold")) {
    if (!j["underperform_threshold"].is_number()) {
      throw Error(ErrorCode::InvalidArgument, "must be a number", "underperform_threshold");
    }
    c.underperform_threshold = j["underperform_threshold"].get<double>();
  }
  return c;
}

Query Query::from_json(const nlohmann::json& j, std::size_t k_default) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaViolation, "query must be an object", "");
  for (const auto& [key, _] : j.items()) {
    if (key != "mode" && key != "text" && key != "form" && key != "k" && key != "vector") {
      throw Error(ErrorCode::SchemaViolation, "unknown field", key);
    }
  }
  Query q;
  q.k = k_default;
  const std::string mode = j.value("mode", std::string("free_text"));
  if (mode == "free_text") {
    q.mode = QueryMode::FreeText;
    if (!j.contains("text") || !j["text"].is_string()) {
      throw Error(ErrorCode::SchemaViolation, "free_text mode requires a string", "text");
    }
    if (j.contains("form")) throw Error(ErrorCode::SchemaViolation, "not allowed in free_text mode", "form");
    q.text = j["text"].get<std::string>();
  } else if (mode == "structured_form") {
    q.mode = QueryMode::StructuredForm;
    if (!j.contains("form") || !j["form"].is_object()) {
      throw Error(ErrorCode::SchemaViolation, "structured_form mode requires an object", "form");
    }
    if (j.contains("text")) throw Error(ErrorCode::SchemaViolation, "not allowed in structured_form mode", "text");
    nlohmann::json form = j["form"];
    if (!form.contains("pmcid")) form["pmcid"] = "";
    try {
      q.form = case_from_json(form);
    } catch (const Error& e) {
      throw Error(e.code(), e.message(), "form." + e.path());
    }
  } else {
    throw Error(ErrorCode::SchemaViolation, "expected free_text or structured_form", "mode");
  }
  if (j.contains("k")) {
    if (!j["k"].is_number_unsigned() || j["k"].get<std::size_t>() == 0) {
      throw Error(ErrorCode::SchemaViolation, "must be an integer >= 1", "k");
    }
    q.k = j["k"].get<std::size_t>();
  }
  if (j.contains("vector") && !j["vector"].is_null()) {
    if (!j["vector"].is_array()) throw Error(ErrorCode::SchemaViolation, "must be an array", "vector");
    DenseVector v;
    for (std::size_t i = 0; i < j["vector"].size(); ++i) {
      const auto& x = j["vector"][i];
      if (!x.is_number()) {
        throw Error(ErrorCode::SchemaViolation, "must be a number", "vector[" + std::to_string(i) + "]");
      }
      v.push_back(x.get<float>());
    }
    q.vector = std::move(v);
  }
  return q;
}

nlohmann::json Query::to_json() const {
  nlohmann::json j;
  j["mode"] = mode == QueryMode::FreeText ? "free_text" : "structured_form";
  if (mode == QueryMode::FreeText) {
    j["text"] = text;
  } else {
    j["form"] = form ? nlohmann::json(*form) : nlohmann::json::object();
  }
  j["k"] = k;
  if (vector) j["vector"] = *vector;
  return j;
}

nlohmann::json RankedResult::to_json() const {
  nlohmann::json s;
  s["diagnosis"] = summary.diagnosis;
  s["variant"] = summary.variant;
  s["treatment"] = summary.treatment;
  s["tumor_size_mm"] = summary.tumor_size_mm;
  s["tumor_size"] = summary.tumor_size_mm.empty() ? "" : render_dimensions_mm(summary.tumor_size_mm);
  s["patient_age"] = summary.patient_age ? nlohmann::json(*summary.patient_age) : nlohmann::json(nullptr);
  s["patient_gender"] = summary.patient_gender ? nlohmann::json(std::string(to_string(*summary.patient_gender)))
                                               : nlohmann::json(nullptr);
  s["reference_id"] = summary.reference_id;
  return {{"pmcid", pmcid}, {"similarity", similarity}, {"distance", distance},
          {"rank", rank},   {"method", to_string(method)}, {"summary", std::move(s)}};
}

nlohmann::json QueryOutcome::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& r : results) list.push_back(r.to_json());
  return {{"schema", "amelo.query/1"}, {"method", to_string(method)}, {"results", std::move(list)}};
}

std::shared_ptr<const RetrievalState> index_repository(const std::vector<CaseRecord>& cases, const DenseStore& dense,
                                                      const RetrievalConfig& config) {
  auto state = std::make_shared<RetrievalState>();
  state->config_ = config;
  for (const auto& c : cases) state->cases_[c.pmcid] = c;

  std::vector<std::vector<std::string>> corpus;
  std::vector<std::string> ids;
  for (const auto& [id, record] : state->cases_) {
    auto ct = build_case_text(record);
    auto tokens = state->preprocessor_(ct.text);
    state->terms_[id] = std::set<std::string>(tokens.begin(), tokens.end());
    state->texts_.emplace(id, std::move(ct));
    corpus.push_back(std::move(tokens));
    ids.push_back(id);
  }
  if (corpus.empty()) return state;

  state->tfidf_ = TfidfModel::fit(corpus, config.max_features);
  std::vector<std::pair<std::string, SparseVector>> rows;
  rows.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) rows.emplace_back(ids[i], state->tfidf_.embed(corpus[i]));
  state->sparse_ = SparseMatrix::build(state->tfidf_.dimension(), std::move(rows));

  std::map<std::string, DenseVector, std::less<>> vectors;
  for (const auto& [id, v] : dense.vectors()) {
    if (!state->cases_.contains(id)) continue;
    if (auto n = normalized_or_none(v)) vectors.emplace(id, std::move(*n));
  }
  if (!vectors.empty()) state->dense_ = FlatIndex::build(vectors);
  return state;
}

double distance_to_similarity(double d) {
  if (!(d >= 0.0 && d <= 2.0)) {
    throw Error(ErrorCode::OutOfRangeDistance, "distance " + text::format_number(d) + " outside [0, 2]");
  }
  return std::clamp(1.0 - d * d / 2.0, 0.0, 1.0);
}

PreparedQuery prepare_query(const RetrievalState& state, const Query& q) {
  PreparedQuery p;
  p.k = q.k;
  if (q.k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1", "k");
  if (q.mode == QueryMode::FreeText) {
    if (text::trim(q.text).empty()) throw Error(ErrorCode::EmptyQuery, "query text is blank", "text");
    p.tokens = state.preprocessor()(q.text);
  } else {
    if (!q.form || form_is_empty(*q.form)) throw Error(ErrorCode::EmptyQuery, "query form is empty", "form");
    p.tokens = state.preprocessor()(build_case_text(*q.form).text);
  }
  if (state.tfidf().dimension() > 0) p.tfidf = state.tfidf().embed(p.tokens);
  if (q.vector) p.vector = normalized_or_none(*q.vector);
  return p;
}

RetrievalMethod cascade_route(const RetrievalState& state, const PreparedQuery& q) {
  return run_cascade(state, q).method;
}

std::vector<RankedResult> keyword_search(const RetrievalState& state, const std::vector<std::string>& query_terms,
                                         std::size_t k) {
  const std::set<std::string> terms(query_terms.begin(), query_terms.end());
  if (terms.empty()) throw Error(ErrorCode::EmptyQuery, "no query terms");
  struct Scored {
    double score;
    const std::string* pmcid;
  };
  std::vector<Scored> scored;
  for (const auto& [id, case_terms] : state.cases()) {
    std::size_t overlap = 0;
    const auto& ct = state.terms_of(id);
    for (const auto& t : terms) overlap += ct.contains(t) ? 1 : 0;
    if (overlap > 0) scored.push_back({static_cast<double>(overlap) / static_cast<double>(terms.size()), &id});
  }
  // Cases iterate in pmcid order, so a stable sort keeps the tie-break.
  std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  if (scored.size() > k) scored.resize(k);
  std::vector<RankedResult> out;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    RankedResult r;
    r.pmcid = *scored[i].pmcid;
    r.similarity = scored[i].score;
    r.distance = 1.0 - scored[i].score;
    r.rank = i + 1;
    r.method = RetrievalMethod::Keyword;
    r.summary = summarize(state.cases().find(r.pmcid)->second);
    out.push_back(std::move(r));
  }
  return out;
}

QueryOutcome query(const RetrievalState& state, const Query& q) {
  if (state.size() == 0) throw Error(ErrorCode::EmptyRepository, "no cases indexed");
  const auto prepared = prepare_query(state, q);
  auto routed = run_cascade(state, prepared);
  return {routed.method, std::move(routed.results)};
}

}  // namespace amelo
