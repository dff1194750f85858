#include "amelo/vectorizer.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>

#include "amelo/porter_stemmer.hpp"
#include "amelo/resources.hpp"
#include "amelo/text_util.hpp"

namespace amelo {

using nlohmann::json;

TextPreprocessor::TextPreprocessor()
    : TextPreprocessor(std::string(kDefaultStopwordList),
                       parse_stopwords(builtin_resource(kDefaultStopwordList)), true) {}

TextPreprocessor::TextPreprocessor(std::string stopword_list_id, std::set<std::string> stopwords,
                                   bool stemming)
    : list_id_(std::move(stopword_list_id)), stopwords_(std::move(stopwords)), stemming_(stemming) {}

std::set<std::string> TextPreprocessor::parse_stopwords(std::string_view text) {
  std::set<std::string> words;
  for (const auto& line : text::split(text, '\n')) {
    const auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    words.insert(text::to_lower(t));
  }
  return words;
}

std::vector<std::string> simple_tokens(std::string_view raw) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : raw) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x80 && std::isalnum(u)) {
      current.push_back(static_cast<char>(std::tolower(u)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<std::string> TextPreprocessor::operator()(std::string_view raw) const {
  std::vector<std::string> out;
  for (auto& tok : simple_tokens(raw)) {
    if (stopwords_.contains(tok)) continue;
    std::string stemmed = stemming_ ? stem_to_fixpoint(tok) : std::move(tok);
    if (stemmed.empty() || stopwords_.contains(stemmed)) continue;
    out.push_back(std::move(stemmed));
  }
  return out;
}

const TextPreprocessor& default_preprocessor() {
  static const TextPreprocessor pre;
  return pre;
}

std::vector<std::string> preprocess_text(std::string_view raw) { return default_preprocessor()(raw); }

// ---------------------------------------------------------------------------

double SparseVector::norm() const noexcept {
  double s = 0.0;
  for (const auto& [idx, w] : entries) s += static_cast<double>(w) * static_cast<double>(w);
  return std::sqrt(s);
}

double dot(const SparseVector& a, const SparseVector& b) {
  if (a.dimension != b.dimension) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(a.dimension) + " vs " + std::to_string(b.dimension));
  }
  double s = 0.0;
  auto ia = a.entries.begin();
  auto ib = b.entries.begin();
  while (ia != a.entries.end() && ib != b.entries.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      s += static_cast<double>(ia->second) * static_cast<double>(ib->second);
      ++ia;
      ++ib;
    }
  }
  return s;
}

double cosine(const SparseVector& a, const SparseVector& b) {
  const double d = dot(a, b);
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero sparse vector");
  return std::clamp(d / (na * nb), -1.0, 1.0);
}

TfidfModel TfidfModel::fit(const std::vector<std::vector<std::string>>& corpus,
                           std::size_t max_features, std::string stopword_list_id, bool stemming) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot fit TF-IDF on an empty corpus");
  if (max_features == 0) throw Error(ErrorCode::InvalidArgument, "max_features must be positive");

  std::unordered_map<std::string, std::size_t> collection_freq;
  std::unordered_map<std::string, std::size_t> doc_freq;
  for (const auto& doc : corpus) {
    std::set<std::string_view> seen;
    for (const auto& tok : doc) {
      ++collection_freq[tok];
      if (seen.insert(tok).second) ++doc_freq[tok];
    }
  }

  std::vector<std::pair<std::string, std::size_t>> ranked(collection_freq.begin(), collection_freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > max_features) ranked.resize(max_features);

  TfidfModel model;
  model.max_features_ = max_features;
  model.document_count_ = corpus.size();
  model.stopword_list_id_ = std::move(stopword_list_id);
  model.stemming_ = stemming;
  for (auto& [term, count] : ranked) model.terms_.push_back(term);
  std::sort(model.terms_.begin(), model.terms_.end());

  const double n = static_cast<double>(corpus.size());
  model.idf_.reserve(model.terms_.size());
  for (std::size_t i = 0; i < model.terms_.size(); ++i) {
    const auto& term = model.terms_[i];
    model.vocabulary_.emplace(term, static_cast<std::uint32_t>(i));
    const double df = static_cast<double>(doc_freq.at(term));
    model.idf_.push_back(std::log((1.0 + n) / (1.0 + df)) + 1.0);
  }
  return model;
}

std::optional<std::uint32_t> TfidfModel::column(std::string_view term) const {
  const auto it = vocabulary_.find(term);
  if (it == vocabulary_.end()) return std::nullopt;
  return it->second;
}

std::optional<double> TfidfModel::idf_of(std::string_view term) const {
  const auto col = column(term);
  if (!col) return std::nullopt;
  return idf_[*col];
}

SparseVector TfidfModel::embed(const std::vector<std::string>& tokens) const {
  std::map<std::uint32_t, double> counts;
  for (const auto& tok : tokens) {
    if (const auto col = column(tok)) counts[*col] += 1.0;
  }
  SparseVector out;
  out.dimension = terms_.size();
  if (counts.empty()) return out;

  double norm = 0.0;
  for (auto& [col, w] : counts) {
    w *= idf_[col];
    norm += w * w;
  }
  norm = std::sqrt(norm);
  out.entries.reserve(counts.size());
  for (const auto& [col, w] : counts) out.entries.emplace_back(col, static_cast<float>(w / norm));
  return out;
}

json TfidfModel::to_json() const {
  return json{{"format", "amelo.tfidf/1"},
              {"max_features", max_features_},
              {"document_count", document_count_},
              {"stopword_list", stopword_list_id_},
              {"stemming", stemming_},
              {"terms", terms_},
              {"idf", idf_}};
}

TfidfModel TfidfModel::from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "amelo.tfidf/1") {
      throw Error(ErrorCode::FormatVersionMismatch,
                  "expected amelo.tfidf/1, found " + j.at("format").get<std::string>());
    }
    TfidfModel m;
    m.max_features_ = j.at("max_features").get<std::size_t>();
    m.document_count_ = j.at("document_count").get<std::size_t>();
    m.stopword_list_id_ = j.at("stopword_list").get<std::string>();
    m.stemming_ = j.at("stemming").get<bool>();
    m.terms_ = j.at("terms").get<std::vector<std::string>>();
    m.idf_ = j.at("idf").get<std::vector<double>>();
    if (m.terms_.size() != m.idf_.size() || m.terms_.size() > m.max_features_) {
      throw Error(ErrorCode::SchemaViolation, "terms/idf size mismatch");
    }
    for (std::size_t i = 0; i < m.terms_.size(); ++i) {
      if (!(m.idf_[i] > 0.0) || !std::isfinite(m.idf_[i])) {
        throw Error(ErrorCode::SchemaViolation, "idf must be finite and positive", "idf[" + std::to_string(i) + "]");
      }
      m.vocabulary_.emplace(m.terms_[i], static_cast<std::uint32_t>(i));
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, e.what());
  }
}

// ---------------------------------------------------------------------------

void DenseStore::ingest(const std::string& id, std::span<const float> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "empty embedding for " + id);
  if (dimension_ && *dimension_ != values.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                id + ": expected " + std::to_string(*dimension_) + " values, got " +
                    std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw Error(ErrorCode::NonFiniteValue, id + ": non-finite value", "vector[" + std::to_string(i) + "]");
    }
  }
  if (is_known_ && !is_known_(id)) throw Error(ErrorCode::UnknownCase, "no case " + id);
  if (!dimension_) dimension_ = values.size();
  vectors_[id] = DenseVector(values.begin(), values.end());
}

void DenseStore::ingest(const std::string& id, const std::vector<double>& values) {
  DenseVector f(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw Error(ErrorCode::NonFiniteValue, id + ": non-finite value", "vector[" + std::to_string(i) + "]");
    }
    f[i] = static_cast<float>(values[i]);
  }
  ingest(id, std::span<const float>(f));
}

std::size_t DenseStore::ingest_jsonl(std::string_view text) {
  std::size_t line_no = 0;
  std::size_t rows = 0;
  for (const auto& line : text::split(text, '\n')) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::MalformedJson, e.what(), where);
    }
    if (!row.is_object() || !row.contains("pmcid") || !row["pmcid"].is_string() ||
        !row.contains("vector") || !row["vector"].is_array()) {
      throw Error(ErrorCode::SchemaViolation, "expected {\"pmcid\": string, \"vector\": [numbers]}", where);
    }
    std::vector<double> values;
    values.reserve(row["vector"].size());
    for (const auto& v : row["vector"]) {
      if (!v.is_number()) throw Error(ErrorCode::SchemaViolation, "vector entries must be numbers", where);
      values.push_back(v.get<double>());
    }
    try {
      ingest(row["pmcid"].get<std::string>(), values);
    } catch (const Error& e) {
      throw Error(e.code(), e.message(), where);
    }
    ++rows;
  }
  return rows;
}

bool DenseStore::contains(std::string_view id) const { return vectors_.find(id) != vectors_.end(); }

const DenseVector* DenseStore::find(std::string_view id) const {
  const auto it = vectors_.find(id);
  return it == vectors_.end() ? nullptr : &it->second;
}

std::string DenseStore::to_jsonl() const {
  std::string out;
  for (const auto& [id, vec] : vectors_) {
    out += json{{"pmcid", id}, {"vector", vec}}.dump();
    out.push_back('\n');
  }
  return out;
}

}  // namespace amelo
