#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "amelo/case_model.hpp"

namespace amelo {

struct GatewayConfig {
  std::string endpoint;  // e.g. http://localhost:8080/v1/chat/completions
  std::string api_key_env = "AMELO_LLM_API_KEY";
  std::string model = "default";
  double timeout_seconds = 60.0;
  int max_retries = 3;
  int backoff_base_ms = 500;

  /// Throws Error{InvalidArgument} for a non-positive timeout or negative retries.
  void validate() const;
  static GatewayConfig from_json(const nlohmann::json& j);
};

/// The eleven fields requested for each case, in prompt order.
const std::vector<std::string>& llm_response_fields();

/// Fields of one case as returned by the model; nullopt is an explicit null.
using LlmCaseFields = std::map<std::string, std::optional<std::string>>;

struct LlmCaseResponse {
  std::map<std::string, LlmCaseFields> cases;  // keyed by pmcid

  nlohmann::json to_json() const;
  std::string serialize() const { return to_json().dump(); }
  friend bool operator==(const LlmCaseResponse&, const LlmCaseResponse&) = default;
};

/// Deterministic extraction prompt. Throws Error{EmptyInput} on blank text.
std::string build_prompt(std::string_view case_text, std::string_view pmcid);

/// Accepts exactly one JSON object keyed by PMC ids, optionally wrapped in a
/// Markdown code fence. Throws Error{MalformedJson} (path = byte offset) or
/// Error{SchemaViolation} (path = field path).
LlmCaseResponse parse_llm_response(std::string_view raw);

/// Maps one parsed case onto a CaseRecord. Null or missing fields stay empty
/// (labels become Unknown); nothing is filled in that the response lacks.
CaseRecord case_from_llm_fields(const std::string& pmcid, const LlmCaseFields& fields);

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Minimal POST abstraction so the gateway can run against any HTTP stack.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  /// Throws Error{Transport} when no response could be obtained.
  virtual HttpResponse post(const std::string& url, const std::map<std::string, std::string>& headers,
                            const std::string& body, std::chrono::milliseconds timeout) = 0;
};

/// cpp-httplib backed transport (http:// and, when built with TLS, https://).
std::unique_ptr<HttpTransport> make_default_transport();

class LlmGateway {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;
  using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

  LlmGateway(GatewayConfig config, std::shared_ptr<HttpTransport> transport);

  /// Test seams: sleeping between attempts and environment lookup.
  void set_sleeper(Sleeper s) { sleeper_ = std::move(s); }
  void set_env_lookup(EnvLookup e) { env_ = std::move(e); }

  /// Chat-completion request body: model, temperature 0, one user message.
  nlohmann::json request_body(std::string_view prompt) const;

  /// Submits the prompt, retrying transport failures and 5xx answers with
  /// exponential backoff (base * 2^attempt), then parses and normalizes.
  /// Errors: AuthFailure (missing key, 401/403), Transport (other 4xx),
  /// ExhaustedRetries, and the parse errors of parse_llm_response.
  CaseRecord extract(std::string_view case_text, const std::string& pmcid) const;

  const GatewayConfig& config() const noexcept { return config_; }

 private:
  GatewayConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  Sleeper sleeper_;
  EnvLookup env_;
};

inline CaseRecord extract_via_llm(const GatewayConfig& config, std::string_view case_text,
                                  const std::string& pmcid) {
  return LlmGateway(config, std::shared_ptr<HttpTransport>(make_default_transport()))
      .extract(case_text, pmcid);
}

}  // namespace amelo
