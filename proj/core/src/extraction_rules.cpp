#include "amelo/extraction_rules.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include "amelo/error.hpp"
#include "amelo/resources.hpp"
#include "amelo/text_util.hpp"

namespace amelo {

using nlohmann::json;

std::string_view to_string(ExtractionMethod m) noexcept {
  switch (m) {
    case ExtractionMethod::Keyword: return "keyword";
    case ExtractionMethod::Regex: return "regex";
    case ExtractionMethod::Centroid: return "centroid";
    case ExtractionMethod::Llm: return "llm";
    case ExtractionMethod::None: return "none";
  }
  return "none";
}

// ---------------------------------------------------------------------------
// RulePack

RulePack RulePack::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidRulePack, "rule pack must be a JSON object");
  RulePack pack;
  for (const auto& [key, value] : j.items()) {
    if (key == "patterns") {
      if (!value.is_array()) throw Error(ErrorCode::InvalidRulePack, "patterns must be an array", key);
      for (std::size_t i = 0; i < value.size(); ++i) {
        const auto& p = value[i];
        const std::string path = "patterns[" + std::to_string(i) + "]";
        if (!p.is_object() || !p.contains("regex") || !p.contains("field") || !p["regex"].is_string() ||
            !p["field"].is_string()) {
          throw Error(ErrorCode::InvalidRulePack, "expected {regex, field}", path);
        }
        RegexRule rule{p["regex"].get<std::string>(), p["field"].get<std::string>(), {}};
        if (!is_case_text_field(rule.field)) {
          throw Error(ErrorCode::InvalidRulePack, "unknown target field " + rule.field, path + ".field");
        }
        try {
          rule.compiled = std::regex(rule.pattern, std::regex::ECMAScript | std::regex::icase);
        } catch (const std::regex_error& e) {
          throw Error(ErrorCode::InvalidRulePack, std::string("regex does not compile: ") + e.what(),
                      path + ".regex");
        }
        pack.patterns_.push_back(std::move(rule));
      }
    } else if (key == "abbreviations") {
      if (!value.is_array()) throw Error(ErrorCode::InvalidRulePack, "abbreviations must be an array", key);
      for (const auto& a : value) {
        if (!a.is_string()) throw Error(ErrorCode::InvalidRulePack, "abbreviations must be strings", key);
        pack.abbreviations_.push_back(text::to_lower(a.get<std::string>()));
      }
    } else {
      if (!is_case_text_field(key)) throw Error(ErrorCode::InvalidRulePack, "unknown field " + key, key);
      if (!value.is_array()) throw Error(ErrorCode::InvalidRulePack, "keyword list must be an array", key);
      auto& list = pack.keywords_[key];
      for (const auto& kw : value) {
        if (!kw.is_string() || text::trim(kw.get<std::string>()).empty()) {
          throw Error(ErrorCode::InvalidRulePack, "keywords must be non-empty strings", key);
        }
        list.push_back(kw.get<std::string>());
      }
    }
  }
  return pack;
}

RulePack RulePack::load(const std::string& path) {
  try {
    return from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidRulePack, e.what(), path);
  }
}

const RulePack& RulePack::builtin() {
  static const RulePack pack = from_json(json::parse(builtin_resource("default_rulepack.json")));
  return pack;
}

// ---------------------------------------------------------------------------
// ExtractionResult

namespace {

ExtractionResult empty_result(std::string pmcid) {
  ExtractionResult r;
  r.pmcid = std::move(pmcid);
  for (const auto& f : case_text_fields()) r.fields.emplace(f, FieldExtraction{});
  return r;
}

void contribute(FieldExtraction& f, std::string_view span, ExtractionMethod method, double confidence) {
  const auto t = text::trim(span);
  if (t.empty()) return;
  if (f.method == ExtractionMethod::None) {
    f.method = method;
    f.confidence = confidence;
    f.text = std::string(t);
    return;
  }
  f.text.push_back(' ');
  f.text.append(t);
  f.confidence = std::min(f.confidence, confidence);
}

}  // namespace

const FieldExtraction& ExtractionResult::field(std::string_view name) const {
  const auto it = fields.find(std::string(name));
  if (it == fields.end()) throw Error(ErrorCode::NotFound, "no extraction field " + std::string(name));
  return it->second;
}

CaseRecord ExtractionResult::to_case_record() const {
  CaseRecord r;
  r.pmcid = pmcid;
  for (const auto& [name, f] : fields) {
    if (f.method == ExtractionMethod::None) continue;
    if (std::string* slot = text_field(r, name)) *slot = f.text;
  }
  r.tumor_size_mm = tumor_size_mm;
  r.diagnosis_label = normalize_diagnosis(r.diagnosis_raw);
  r.variant_label = normalize_variant(r.variant_raw);
  return r;
}

json ExtractionResult::to_json() const {
  json fj = json::object();
  for (const auto& [name, f] : fields) {
    fj[name] = json{{"text", f.text}, {"method", std::string(amelo::to_string(f.method))},
                    {"confidence", f.confidence}};
  }
  return json{{"pmcid", pmcid}, {"fields", fj}, {"tumor_size_mm", tumor_size_mm}};
}

// ---------------------------------------------------------------------------
// Lexicon and centroids

WordLexicon WordLexicon::parse(std::string_view text) {
  WordLexicon lex;
  std::size_t line_no = 0;
  for (const auto& raw_line : text::split(text, '\n')) {
    ++line_no;
    const auto line = text::trim(raw_line);
    if (line.empty()) continue;
    std::vector<std::string> cols;
    for (auto& c : text::split(text::collapse_whitespace(line), ' ')) cols.push_back(std::move(c));
    const auto all_int = [](const std::string& s) {
      return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
    };
    if (line_no == 1 && cols.size() == 2 && all_int(cols[0]) && all_int(cols[1])) continue;
    if (cols.size() < 2) {
      throw Error(ErrorCode::SchemaViolation, "expected a token followed by values",
                  "line " + std::to_string(line_no));
    }
    DenseVector v;
    v.reserve(cols.size() - 1);
    for (std::size_t i = 1; i < cols.size(); ++i) {
      float x = 0.0f;
      const auto* first = cols[i].data();
      const auto* last = first + cols[i].size();
      const auto res = std::from_chars(first, last, x);
      if (res.ec != std::errc{} || res.ptr != last || !std::isfinite(x)) {
        throw Error(ErrorCode::SchemaViolation, "bad value '" + cols[i] + "'", "line " + std::to_string(line_no));
      }
      v.push_back(x);
    }
    try {
      lex.add(text::to_lower(cols[0]), std::move(v));
    } catch (const Error& e) {
      throw Error(e.code(), e.message(), "line " + std::to_string(line_no));
    }
  }
  return lex;
}

WordLexicon WordLexicon::load(const std::string& path) { return parse(read_file(path)); }

void WordLexicon::add(std::string token, DenseVector v) {
  if (v.empty()) throw Error(ErrorCode::EmptyInput, "empty vector for " + token);
  if (dimension_ == 0) dimension_ = v.size();
  if (v.size() != dimension_) {
    throw Error(ErrorCode::DimensionMismatch,
                token + ": " + std::to_string(v.size()) + " vs " + std::to_string(dimension_));
  }
  vectors_[std::move(token)] = std::move(v);
}

const DenseVector* WordLexicon::find(std::string_view token) const {
  const auto it = vectors_.find(token);
  return it == vectors_.end() ? nullptr : &it->second;
}

CategoryCentroids CategoryCentroids::from_rules(const RulePack& rules, const WordLexicon& lexicon) {
  CategoryCentroids out;
  out.dimension = lexicon.dimension();
  for (const auto& [field, keywords] : rules.keywords()) {
    std::vector<std::string> tokens;
    for (const auto& kw : keywords) {
      for (auto& t : simple_tokens(kw)) tokens.push_back(std::move(t));
    }
    if (auto c = sentence_embedding(tokens, lexicon)) out.centroids.emplace(field, std::move(*c));
  }
  return out;
}

std::optional<DenseVector> sentence_embedding(const std::vector<std::string>& tokens,
                                              const WordLexicon& lexicon) {
  std::vector<DenseVector> hits;
  for (const auto& t : tokens) {
    if (const DenseVector* v = lexicon.find(t)) hits.push_back(*v);
  }
  if (hits.empty()) return std::nullopt;
  return centroid(hits);
}

std::optional<CentroidMatch> categorize_by_centroid(std::span<const float> sentence_vec,
                                                    const CategoryCentroids& centroids,
                                                    double threshold) {
  if (sentence_vec.size() != centroids.dimension) {
    throw Error(ErrorCode::DimensionMismatch, std::to_string(sentence_vec.size()) + " vs " +
                                                  std::to_string(centroids.dimension));
  }
  if (squared_norm(sentence_vec) == 0.0) return std::nullopt;

  std::optional<CentroidMatch> best;
  for (const auto& [category, c] : centroids.centroids) {
    if (c.size() != sentence_vec.size()) {
      throw Error(ErrorCode::DimensionMismatch, category + ": centroid dimension " + std::to_string(c.size()));
    }
    if (squared_norm(std::span<const float>(c)) == 0.0) continue;
    const double cos = cosine(sentence_vec, std::span<const float>(c));
    if (!best || cos > best->cosine) best = CentroidMatch{category, cos};
  }
  if (best && best->cosine >= threshold) return best;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Segmentation

namespace {

bool is_guarded(std::string_view text, std::size_t punct, const std::vector<std::string>& abbreviations) {
  std::size_t start = punct;
  while (start > 0 && !std::isspace(static_cast<unsigned char>(text[start - 1]))) --start;
  std::string word = text::to_lower(text.substr(start, punct - start + 1));
  while (!word.empty() && !text::is_word_char(word.front()) && word.front() != '.') word.erase(word.begin());
  return std::find(abbreviations.begin(), abbreviations.end(), word) != abbreviations.end();
}

}  // namespace

std::vector<std::string> segment_sentences(std::string_view text) {
  return segment_sentences(text, RulePack::builtin().abbreviations());
}

std::vector<std::string> segment_sentences(std::string_view text,
                                           const std::vector<std::string>& abbreviations) {
  std::vector<std::string> out;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    const auto s = text::trim(text.substr(start, end - start));
    if (!s.empty()) out.emplace_back(s);
    start = end;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    std::size_t j = i + 1;
    if (j >= text.size() || !std::isspace(static_cast<unsigned char>(text[j]))) continue;
    while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j >= text.size()) break;
    const auto next = static_cast<unsigned char>(text[j]);
    if (!std::isupper(next) && !std::isdigit(next)) continue;
    if (c == '.' && is_guarded(text, i, abbreviations)) continue;
    emit(i + 1);
  }
  emit(text.size());
  return out;
}

// ---------------------------------------------------------------------------
// Keyword / regex pass

namespace {

void keyword_regex_sentence(std::string_view sentence, const RulePack& rules, ExtractionResult& result) {
  std::set<std::string> claimed;
  for (const auto& [field, keywords] : rules.keywords()) {
    for (const auto& kw : keywords) {
      if (text::find_word_prefix(sentence, kw) != std::string_view::npos) {
        contribute(result.fields[field], sentence, ExtractionMethod::Keyword, 1.0);
        claimed.insert(field);
        break;
      }
    }
  }
  const std::string s(sentence);
  for (const auto& rule : rules.patterns()) {
    if (claimed.contains(rule.field)) continue;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), rule.compiled); it != std::sregex_iterator(); ++it) {
      const auto& m = *it;
      const std::string span = (m.size() > 1 && m[1].matched) ? m[1].str() : m[0].str();
      contribute(result.fields[rule.field], span, ExtractionMethod::Regex, 1.0);
    }
  }
}

}  // namespace

ExtractionResult extract_fields(std::string_view text, const RulePack& rules, std::string pmcid) {
  ExtractionResult result = empty_result(std::move(pmcid));
  for (const auto& sentence : segment_sentences(text, rules.abbreviations())) {
    keyword_regex_sentence(sentence, rules, result);
  }
  result.tumor_size_mm = normalize_dimensions(text);
  return result;
}

ExtractionResult extract_cascade(std::string_view text, const RulePack& rules,
                                 const CategoryCentroids& centroids, const WordLexicon& lexicon,
                                 double threshold, std::string pmcid) {
  ExtractionResult result = empty_result(std::move(pmcid));
  for (const auto& sentence : segment_sentences(text, rules.abbreviations())) {
    if (const auto emb = sentence_embedding(simple_tokens(sentence), lexicon)) {
      if (const auto match = categorize_by_centroid(*emb, centroids, threshold)) {
        if (is_case_text_field(match->category)) {
          contribute(result.fields[match->category], sentence, ExtractionMethod::Centroid, match->cosine);
          continue;
        }
      }
    }
    keyword_regex_sentence(sentence, rules, result);
  }
  result.tumor_size_mm = normalize_dimensions(text);
  return result;
}

// ---------------------------------------------------------------------------
// Measurements

namespace {

struct Cursor {
  std::string_view s;
  std::size_t pos = 0;

  bool done() const { return pos >= s.size(); }
  void skip_spaces() {
    while (!done() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }
};

std::optional<double> read_number(Cursor& c) {
  const std::size_t begin = c.pos;
  if (begin > 0) {
    const char prev = c.s[begin - 1];
    if (std::isalnum(static_cast<unsigned char>(prev)) || prev == '.') return std::nullopt;
  }
  std::size_t i = begin;
  while (i < c.s.size() && std::isdigit(static_cast<unsigned char>(c.s[i]))) ++i;
  if (i == begin) return std::nullopt;
  if (i + 1 < c.s.size() && c.s[i] == '.' && std::isdigit(static_cast<unsigned char>(c.s[i + 1]))) {
    ++i;
    while (i < c.s.size() && std::isdigit(static_cast<unsigned char>(c.s[i]))) ++i;
  }
  double v = 0.0;
  const auto res = std::from_chars(c.s.data() + begin, c.s.data() + i, v);
  if (res.ec != std::errc{}) return std::nullopt;
  c.pos = i;
  return v;
}

// Returns the mm-per-unit factor of a unit at the cursor.
std::optional<double> read_unit(Cursor& c) {
  static const std::pair<std::string_view, double> kUnits[] = {
      {"millimeters", 1.0}, {"millimetres", 1.0}, {"millimeter", 1.0}, {"millimetre", 1.0},
      {"centimeters", 10.0}, {"centimetres", 10.0}, {"centimeter", 10.0}, {"centimetre", 10.0},
      {"mm", 1.0}, {"cm", 10.0}};
  Cursor probe = c;
  probe.skip_spaces();
  for (const auto& [name, factor] : kUnits) {
    if (probe.s.size() - probe.pos < name.size()) continue;
    const auto candidate = text::to_lower(probe.s.substr(probe.pos, name.size()));
    if (candidate != name) continue;
    const std::size_t end = probe.pos + name.size();
    if (end < probe.s.size() && std::isalpha(static_cast<unsigned char>(probe.s[end]))) continue;
    c.pos = end;
    return factor;
  }
  return std::nullopt;
}

bool read_separator(Cursor& c) {
  Cursor probe = c;
  probe.skip_spaces();
  if (probe.done()) return false;
  const auto rest = probe.s.substr(probe.pos);
  std::size_t len = 0;
  if (rest.starts_with("\xC3\x97")) {  // U+00D7 multiplication sign
    len = 2;
  } else if (rest.front() == 'x' || rest.front() == 'X' || rest.front() == '*') {
    len = 1;
  } else if (rest.size() >= 2 && text::to_lower(rest.substr(0, 2)) == "by" &&
             (rest.size() == 2 || !std::isalpha(static_cast<unsigned char>(rest[2])))) {
    len = 2;
  } else {
    return false;
  }
  probe.pos += len;
  probe.skip_spaces();
  if (probe.done() || !std::isdigit(static_cast<unsigned char>(probe.s[probe.pos]))) return false;
  c = probe;
  return true;
}

}  // namespace

std::vector<double> normalize_dimensions(std::string_view text) {
  std::vector<double> out;
  Cursor c{text, 0};
  while (!c.done()) {
    if (!std::isdigit(static_cast<unsigned char>(text[c.pos]))) {
      ++c.pos;
      continue;
    }
    Cursor start = c;
    auto first = read_number(c);
    if (!first) {
      c.pos = start.pos + 1;
      while (!c.done() && (std::isdigit(static_cast<unsigned char>(text[c.pos])) || text[c.pos] == '.')) ++c.pos;
      continue;
    }
    std::vector<std::pair<double, std::optional<double>>> chain;
    chain.emplace_back(*first, read_unit(c));
    while (read_separator(c)) {
      const auto v = read_number(c);
      if (!v) break;
      chain.emplace_back(*v, read_unit(c));
    }
    // A unit applies to the magnitudes before it that carry none.
    std::optional<double> trailing;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      if (it->second) {
        trailing = it->second;
      } else {
        it->second = trailing;
      }
    }
    for (const auto& [value, factor] : chain) {
      if (factor && value > 0.0) out.push_back(value * *factor);
    }
  }
  return out;
}

std::string render_dimensions_mm(const std::vector<double>& mm) {
  std::vector<std::string> parts;
  parts.reserve(mm.size());
  for (double v : mm) parts.push_back(text::format_number(v) + " mm");
  return text::join(parts, " x ");
}

}  // namespace amelo
