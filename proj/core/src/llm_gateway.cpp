#include "amelo/llm_gateway.hpp"

#include <cstdlib>
#include <regex>
#include <thread>

#include <httplib.h>

#include "amelo/error.hpp"
#include "amelo/extraction_rules.hpp"
#include "amelo/text_util.hpp"

namespace amelo {

using nlohmann::json;

void GatewayConfig::validate() const {
  if (!(timeout_seconds > 0.0)) throw Error(ErrorCode::InvalidArgument, "timeout must be positive", "timeout_seconds");
  if (max_retries < 0) throw Error(ErrorCode::InvalidArgument, "retries must be >= 0", "max_retries");
  if (backoff_base_ms < 0) throw Error(ErrorCode::InvalidArgument, "backoff must be >= 0", "backoff_base_ms");
  if (endpoint.empty()) throw Error(ErrorCode::InvalidArgument, "endpoint is required", "endpoint");
}

GatewayConfig GatewayConfig::from_json(const json& j) {
  GatewayConfig c;
  try {
    c.endpoint = j.value("endpoint", c.endpoint);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.model = j.value("model", c.model);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.backoff_base_ms = j.value("backoff_base_ms", c.backoff_base_ms);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, e.what());
  }
  return c;
}

const std::vector<std::string>& llm_response_fields() {
  static const std::vector<std::string> fields = {
      "presenting_complaint", "clinical_features", "radiological_features",
      "histopathological_features", "treatment", "diagnosis", "variant", "tumor_location",
      "tumor_size", "patient_age", "patient_gender"};
  return fields;
}

std::string build_prompt(std::string_view case_text, std::string_view pmcid) {
  if (text::trim(case_text).empty()) throw Error(ErrorCode::EmptyInput, "case text is empty");

  std::string schema;
  for (const auto& f : llm_response_fields()) schema += "    \"" + f + "\": string or null,\n";
  schema.resize(schema.size() - 2);
  schema += "\n";

  std::string p;
  p += "You extract structured data from an ameloblastoma case report.\n\n";
  p += "Return ONLY a single JSON object and nothing else: no prose, no comments.\n";
  p += "The object must have exactly one key, the case identifier \"" + std::string(pmcid) + "\", ";
  p += "whose value is an object with exactly these eleven fields:\n";
  p += "{\n  \"" + std::string(pmcid) + "\": {\n" + schema + "  }\n}\n\n";
  p += "Rules:\n";
  p += "1. Copy information only from the report. If the report does not state a field, use null. "
       "Never guess, infer or invent values.\n";
  p += "2. \"variant\" must be one of the standard diagnostic categories: Solid/Multicystic, Unicystic, "
       "Peripheral, Desmoplastic Ameloblastoma; use null if the report does not state one.\n";
  p += "3. \"diagnosis\" is the histological diagnosis as written in the report (for example the "
       "histological pattern).\n";
  p += "4. \"tumor_size\" keeps the measurements with their units exactly as written.\n";
  p += "5. \"patient_age\" is the age in years as a string; \"patient_gender\" is male, female or other.\n";
  p += "6. Do not add fields beyond the eleven listed.\n\n";
  p += "Case report " + std::string(pmcid) + ":\n";
  p += "<<<\n";
  p += std::string(text::trim(case_text));
  p += "\n>>>\n";
  return p;
}

// ---------------------------------------------------------------------------

namespace {

std::string_view strip_code_fence(std::string_view raw, std::size_t& offset) {
  std::string_view s = text::trim(raw);
  offset = static_cast<std::size_t>(s.data() - raw.data());
  if (!s.starts_with("```")) return s;
  const auto nl = s.find('\n');
  if (nl == std::string_view::npos) return s;
  std::string_view body = s.substr(nl + 1);
  offset += nl + 1;
  const auto end = body.rfind("```");
  if (end != std::string_view::npos) body = body.substr(0, end);
  return body;
}

}  // namespace

json LlmCaseResponse::to_json() const {
  json out = json::object();
  for (const auto& [pmcid, fields] : cases) {
    json obj = json::object();
    for (const auto& [k, v] : fields) obj[k] = v ? json(*v) : json(nullptr);
    out[pmcid] = obj;
  }
  return out;
}

LlmCaseResponse parse_llm_response(std::string_view raw) {
  std::size_t offset = 0;
  const std::string_view body = strip_code_fence(raw, offset);
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    const std::size_t at = offset + (e.byte > 0 ? e.byte - 1 : 0);
    throw Error(ErrorCode::MalformedJson, e.what(), "byte " + std::to_string(at));
  }
  if (!doc.is_object()) throw Error(ErrorCode::SchemaViolation, "expected a JSON object", "$");

  const auto& allowed = llm_response_fields();
  LlmCaseResponse out;
  for (const auto& [pmcid, fields] : doc.items()) {
    if (!is_valid_pmcid(pmcid)) throw Error(ErrorCode::SchemaViolation, "key is not a PMC id", pmcid);
    if (!fields.is_object()) throw Error(ErrorCode::SchemaViolation, "expected an object", pmcid);
    LlmCaseFields parsed;
    for (const auto& f : allowed) parsed[f] = std::nullopt;
    for (const auto& [name, value] : fields.items()) {
      const std::string path = pmcid + "." + name;
      if (std::find(allowed.begin(), allowed.end(), name) == allowed.end()) {
        throw Error(ErrorCode::SchemaViolation, "unknown field", path);
      }
      if (value.is_null()) continue;
      if (!value.is_string()) throw Error(ErrorCode::SchemaViolation, "expected string or null", path);
      parsed[name] = value.get<std::string>();
    }
    out.cases.emplace(pmcid, std::move(parsed));
  }
  return out;
}

namespace {

std::optional<double> parse_age(std::string_view s) {
  static const std::regex kNumber(R"((\d+(?:\.\d+)?))");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(s.begin(), s.end(), m, kNumber)) return std::nullopt;
  const double v = std::stod(m[1].str());
  if (v < 0.0 || v > kMaxPatientAge) return std::nullopt;
  return v;
}

std::optional<Gender> parse_free_gender(std::string_view s) {
  const std::string g = text::to_lower(text::trim(s));
  if (g == "male" || g == "m" || g == "man" || g == "boy") return Gender::Male;
  if (g == "female" || g == "f" || g == "woman" || g == "girl") return Gender::Female;
  if (g == "other") return Gender::Other;
  if (g == "unknown") return Gender::Unknown;
  return std::nullopt;
}

}  // namespace

CaseRecord case_from_llm_fields(const std::string& pmcid, const LlmCaseFields& fields) {
  CaseRecord r;
  r.pmcid = pmcid;
  const auto get = [&](const char* name) -> std::optional<std::string> {
    const auto it = fields.find(name);
    return it == fields.end() ? std::nullopt : it->second;
  };
  r.presenting_complaint = get("presenting_complaint").value_or("");
  r.clinical_features = get("clinical_features").value_or("");
  r.radiological_features = get("radiological_features").value_or("");
  r.histopathological_features = get("histopathological_features").value_or("");
  r.treatment = get("treatment").value_or("");
  r.tumor_location = get("tumor_location").value_or("");
  r.diagnosis_raw = get("diagnosis").value_or("");
  r.variant_raw = get("variant").value_or("");
  r.diagnosis_label = normalize_diagnosis(r.diagnosis_raw);
  r.variant_label = normalize_variant(r.variant_raw);
  if (auto size = get("tumor_size")) r.tumor_size_mm = normalize_dimensions(*size);
  if (auto age = get("patient_age")) r.patient_age = parse_age(*age);
  if (auto gender = get("patient_gender")) r.patient_gender = parse_free_gender(*gender);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

struct SplitUrl {
  std::string origin;
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidArgument, "endpoint needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttplibTransport final : public HttpTransport {
 public:
  HttpResponse post(const std::string& url, const std::map<std::string, std::string>& headers,
                    const std::string& body, std::chrono::milliseconds timeout) override {
    const SplitUrl parts = split_url(url);
    if (parts.origin.starts_with("https://")) {
      throw Error(ErrorCode::Transport, "https endpoints are not supported by this build; use an http proxy");
    }
    httplib::Client client(parts.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client.set_connection_timeout(secs.count(), static_cast<time_t>(usecs.count()));
    client.set_read_timeout(secs.count(), static_cast<time_t>(usecs.count()));
    client.set_write_timeout(secs.count(), static_cast<time_t>(usecs.count()));
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(parts.path, h, body, "application/json");
    if (!res) throw Error(ErrorCode::Transport, "request failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
  }
};

}  // namespace

std::unique_ptr<HttpTransport> make_default_transport() { return std::make_unique<HttplibTransport>(); }

LlmGateway::LlmGateway(GatewayConfig config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }),
      env_([](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        if (!v || !*v) return std::nullopt;
        return std::string(v);
      }) {
  config_.validate();
}

json LlmGateway::request_body(std::string_view prompt) const {
  return json{{"model", config_.model},
              {"temperature", 0},
              {"messages", json::array({json{{"role", "user"}, {"content", std::string(prompt)}}})}};
}

CaseRecord LlmGateway::extract(std::string_view case_text, const std::string& pmcid) const {
  const auto key = env_(config_.api_key_env);
  if (!key) throw Error(ErrorCode::AuthFailure, "environment variable " + config_.api_key_env + " is not set");
  if (!is_valid_pmcid(pmcid)) throw Error(ErrorCode::InvalidArgument, "not a PMC id: " + pmcid, "pmcid");

  const std::string body = request_body(build_prompt(case_text, pmcid)).dump();
  const std::map<std::string, std::string> headers = {{"Authorization", "Bearer " + *key}};
  const auto timeout = std::chrono::milliseconds(static_cast<long long>(config_.timeout_seconds * 1000.0));

  std::string last_failure;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) sleeper_(std::chrono::milliseconds(static_cast<long long>(config_.backoff_base_ms) << (attempt - 1)));
    HttpResponse res;
    try {
      res = transport_->post(config_.endpoint, headers, body, timeout);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Transport) throw;
      last_failure = e.message();
      continue;
    }
    if (res.status == 401 || res.status == 403) {
      throw Error(ErrorCode::AuthFailure, "provider rejected the API key (HTTP " + std::to_string(res.status) + ")");
    }
    if (res.status >= 500) {
      last_failure = "HTTP " + std::to_string(res.status);
      continue;
    }
    if (res.status < 200 || res.status >= 300) {
      throw Error(ErrorCode::Transport, "HTTP " + std::to_string(res.status) + ": " + res.body);
    }

    json envelope;
    try {
      envelope = json::parse(res.body);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::MalformedJson, std::string("provider envelope: ") + e.what(),
                  "byte " + std::to_string(e.byte));
    }
    const json* content = nullptr;
    if (envelope.contains("choices") && envelope["choices"].is_array() && !envelope["choices"].empty()) {
      const auto& msg = envelope["choices"][0];
      if (msg.contains("message") && msg["message"].contains("content") && msg["message"]["content"].is_string()) {
        content = &msg["message"]["content"];
      }
    }
    if (!content) throw Error(ErrorCode::SchemaViolation, "missing choices[0].message.content", "choices");

    const LlmCaseResponse parsed = parse_llm_response(content->get<std::string>());
    const auto it = parsed.cases.find(pmcid);
    if (it == parsed.cases.end()) throw Error(ErrorCode::SchemaViolation, "response lacks key " + pmcid, pmcid);
    return case_from_llm_fields(pmcid, it->second);
  }
  throw Error(ErrorCode::ExhaustedRetries,
              std::to_string(config_.max_retries + 1) + " attempts failed; last: " + last_failure);
}

}  // namespace amelo
