#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "amelo/error.hpp"
#include "amelo/retrieval_engine.hpp"

namespace amelo {

struct ServiceConfig {
  std::filesystem::path store_dir = "amelo-store";
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  RetrievalConfig retrieval;
  /// When set, /index/rebuild runs inline and queries get 503 meanwhile.
  bool blocking_rebuild = false;

  /// AMELO_STORE_DIR and AMELO_PORT override the defaults.
  static ServiceConfig from_env();
};

/// HTTP status for an error code (400, 404, 409, 503 or 500).
int http_status(ErrorCode code) noexcept;

/// {"code", "message", "path"}.
nlohmann::json error_body(const Error& e);

/// HTTP+JSON front end over a CaseStore and a swappable retrieval snapshot.
///   GET  /health
///   GET  /cases?offset&limit          POST /cases
///   GET|PUT|DELETE /cases/{pmcid}     GET  /cases/{pmcid}/images
///   POST /images                      PUT|DELETE /images/{image_id}
///   POST /query                       POST /index/rebuild
///   POST /embeddings/ingest           GET  /bench/latest
class CaseService {
 public:
  /// Opens the store (CorruptLog, Io) and builds the initial index.
  explicit CaseService(ServiceConfig config);
  ~CaseService();
  CaseService(const CaseService&) = delete;
  CaseService& operator=(const CaseService&) = delete;

  /// Binds the listening socket and returns the bound port. Throws PortInUse.
  int bind();
  /// Serves until stop(); bind() must have succeeded.
  void run();
  void stop();

  /// Current snapshot; never null.
  std::shared_ptr<const RetrievalState> snapshot() const;
  /// Rebuilds from the store. Returns false if a rebuild was already running.
  bool rebuild(bool wait);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace amelo
