#include "amelo/case_service.hpp"

#include <atomic>
#include <charconv>
#include <cstdlib>
#include <mutex>
#include <shared_mutex>
#include <thread>

#include <httplib.h>
#include <openssl/evp.h>

#include "amelo/case_store.hpp"
#include "amelo/resources.hpp"
#include "amelo/text_util.hpp"

namespace amelo {
namespace {

using nlohmann::json;

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedJson, e.what(), "byte " + std::to_string(e.byte));
  }
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

std::string decode_base64(std::string_view in) {
  std::string clean;
  for (char c : in) {
    if (!std::isspace(static_cast<unsigned char>(c))) clean.push_back(c);
  }
  if (clean.size() % 4 != 0) throw Error(ErrorCode::SchemaViolation, "invalid base64 length", "blob_base64");
  std::string out(clean.size() / 4 * 3, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(clean.data()), static_cast<int>(clean.size()));
  if (n < 0) throw Error(ErrorCode::SchemaViolation, "invalid base64", "blob_base64");
  std::size_t pad = 0;
  while (pad < 2 && pad < clean.size() && clean[clean.size() - 1 - pad] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

std::size_t query_param(const httplib::Request& req, const char* name, std::size_t fallback) {
  if (!req.has_param(name)) return fallback;
  const auto v = req.get_param_value(name);
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw Error(ErrorCode::InvalidArgument, "expected a non-negative integer", name);
  }
  return out;
}

CaseRecord validated_case(const json& body) {
  const auto record = case_from_json(body);
  const auto report = validate_case(record);
  if (!report.ok()) {
    const auto& v = report.violations.front();
    throw Error(ErrorCode::SchemaViolation, v.message, v.path);
  }
  return record;
}

}  // namespace

ServiceConfig ServiceConfig::from_env() {
  ServiceConfig c;
  if (const char* dir = std::getenv("AMELO_STORE_DIR"); dir && *dir) c.store_dir = dir;
  if (const char* port = std::getenv("AMELO_PORT"); port && *port) {
    int p = 0;
    const std::string_view s(port);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), p);
    if (ec != std::errc() || ptr != s.data() + s.size() || p < 0 || p > 65535) {
      throw Error(ErrorCode::InvalidArgument, "AMELO_PORT must be a port number", "AMELO_PORT");
    }
    c.port = p;
  }
  return c;
}

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedJson:
    case ErrorCode::SchemaViolation:
    case ErrorCode::InvalidArgument:
    case ErrorCode::EmptyQuery:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::NonFiniteValue:
    case ErrorCode::EmptyInput:
      return 400;
    case ErrorCode::NotFound:
    case ErrorCode::UnknownCase:
      return 404;
    case ErrorCode::Conflict:
    case ErrorCode::EmptyRepository:
      return 409;
    case ErrorCode::IndexRebuilding:
      return 503;
    default:
      return 500;
  }
}

json error_body(const Error& e) {
  return {{"code", std::string(to_string(e.code()))}, {"message", e.message()}, {"path", e.path()}};
}

struct CaseService::Impl {
  ServiceConfig config;
  httplib::Server server;
  int bound_port = -1;

  mutable std::shared_mutex store_mu;  // writers are serialized here
  CaseStore store;
  DenseStore dense;

  mutable std::mutex snap_mu;
  std::shared_ptr<const RetrievalState> snap;
  std::atomic<bool> rebuilding{false};
  std::mutex rebuild_mu;
  std::thread rebuild_thread;

  explicit Impl(ServiceConfig c) : config(std::move(c)), store(CaseStore::open(config.store_dir)) {
    dense.ingest_jsonl(store.embeddings());
    snap = build();
    routes();
  }

  ~Impl() {
    server.stop();
    std::lock_guard lock(rebuild_mu);
    if (rebuild_thread.joinable()) rebuild_thread.join();
  }

  std::shared_ptr<const RetrievalState> build() const {
    std::vector<CaseRecord> cases;
    DenseStore vectors;
    {
      std::shared_lock lock(store_mu);
      for (const auto& [id, c] : store.state().cases) cases.push_back(c);
      vectors = dense;
    }
    return index_repository(cases, vectors, config.retrieval);
  }

  std::shared_ptr<const RetrievalState> current() const {
    std::lock_guard lock(snap_mu);
    return snap;
  }

  void swap_in(std::shared_ptr<const RetrievalState> next) {
    std::lock_guard lock(snap_mu);
    snap = std::move(next);
  }

  bool rebuild(bool wait) {
    if (rebuilding.exchange(true)) return false;
    std::lock_guard lock(rebuild_mu);
    if (rebuild_thread.joinable()) rebuild_thread.join();
    const auto work = [this] {
      try {
        swap_in(build());
      } catch (...) {
        // The previous snapshot keeps serving.
      }
      rebuilding = false;
    };
    if (wait) {
      work();
    } else {
      rebuild_thread = std::thread(work);
    }
    return true;
  }

  template <typename F>
  httplib::Server::Handler guarded(F f) {
    return [f = std::move(f)](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        reply(res, http_status(e.code()), error_body(e));
      } catch (const std::exception& e) {
        reply(res, 500, {{"code", "Internal"}, {"message", e.what()}, {"path", ""}});
      }
    };
  }

  void routes() {
    // httplib defaults to SO_REUSEPORT, which would let a second instance
    // share the port instead of failing with PortInUse.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    server.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
      const auto s = current();
      std::shared_lock lock(store_mu);
      reply(res, 200,
            {{"status", "ok"},
             {"cases", store.state().cases.size()},
             {"images", store.state().images.size()},
             {"indexed", s->size()},
             {"dense_indexed", s->dense() ? s->dense()->count() : 0},
             {"rebuilding", rebuilding.load()}});
    }));

    server.Get("/cases", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto offset = query_param(req, "offset", 0);
      const auto limit = query_param(req, "limit", 100);
      std::shared_lock lock(store_mu);
      const auto& cases = store.state().cases;
      json list = json::array();
      auto it = cases.begin();
      std::advance(it, static_cast<std::ptrdiff_t>(std::min(offset, cases.size())));
      for (std::size_t n = 0; it != cases.end() && n < limit; ++it, ++n) list.push_back(it->second);
      reply(res, 200, {{"total", cases.size()}, {"offset", offset}, {"limit", limit}, {"cases", list}});
    }));

    server.Post("/cases", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto record = validated_case(parse_body(req));
      std::unique_lock lock(store_mu);
      if (store.state().cases.contains(record.pmcid)) {
        throw Error(ErrorCode::Conflict, "case already exists", "pmcid");
      }
      store.put_case(record);
      reply(res, 201, record);
    }));

    server.Get(R"(/cases/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string pmcid = req.matches[1];
      std::shared_lock lock(store_mu);
      const auto it = store.state().cases.find(pmcid);
      if (it == store.state().cases.end()) throw Error(ErrorCode::NotFound, "no case " + pmcid, "pmcid");
      reply(res, 200, it->second);
    }));

    server.Put(R"(/cases/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string pmcid = req.matches[1];
      auto body = parse_body(req);
      if (body.is_object() && !body.contains("pmcid")) body["pmcid"] = pmcid;
      const auto record = validated_case(body);
      if (record.pmcid != pmcid) throw Error(ErrorCode::SchemaViolation, "does not match the URL", "pmcid");
      std::unique_lock lock(store_mu);
      if (!store.state().cases.contains(pmcid)) throw Error(ErrorCode::NotFound, "no case " + pmcid, "pmcid");
      store.put_case(record);
      reply(res, 200, record);
    }));

    server.Delete(R"(/cases/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string pmcid = req.matches[1];
      std::unique_lock lock(store_mu);
      const auto removed = store.delete_case(pmcid);
      reply(res, 200, {{"deleted", pmcid}, {"images_deleted", removed}});
    }));

    server.Get(R"(/cases/([^/]+)/images)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string pmcid = req.matches[1];
      std::shared_lock lock(store_mu);
      if (!store.state().cases.contains(pmcid)) throw Error(ErrorCode::NotFound, "no case " + pmcid, "pmcid");
      json list = json::array();
      for (const auto& [id, image] : store.state().images) {
        if (image.pmcid == pmcid) list.push_back(image);
      }
      reply(res, 200, {{"pmcid", pmcid}, {"images", list}});
    }));

    server.Post("/images", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto body = parse_body(req);
      std::optional<std::string> blob;
      if (body.is_object() && body.contains("blob_base64")) {
        if (!body["blob_base64"].is_string()) {
          throw Error(ErrorCode::SchemaViolation, "must be a string", "blob_base64");
        }
        blob = decode_base64(body["blob_base64"].get<std::string>());
        body.erase("blob_base64");
        if (!body.contains("file_path")) body["file_path"] = "";
      }
      auto image = image_from_json(body);
      std::unique_lock lock(store_mu);
      check_image(image);
      if (store.state().images.contains(image.image_id)) {
        throw Error(ErrorCode::Conflict, "image already exists", "image_id");
      }
      if (blob) image.file_path = store.put_blob(*blob);
      store.put_image(image);
      reply(res, 201, image);
    }));

    server.Put(R"(/images/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string image_id = req.matches[1];
      auto body = parse_body(req);
      if (body.is_object() && !body.contains("image_id")) body["image_id"] = image_id;
      const auto image = image_from_json(body);
      if (image.image_id != image_id) throw Error(ErrorCode::SchemaViolation, "does not match the URL", "image_id");
      std::unique_lock lock(store_mu);
      if (!store.state().images.contains(image_id)) {
        throw Error(ErrorCode::NotFound, "no image " + image_id, "image_id");
      }
      check_image(image);
      store.put_image(image);
      reply(res, 200, image);
    }));

    server.Delete(R"(/images/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string image_id = req.matches[1];
      std::unique_lock lock(store_mu);
      store.delete_image(image_id);
      reply(res, 200, {{"deleted", image_id}});
    }));

    server.Post("/query", guarded([this](const httplib::Request& req, httplib::Response& res) {
      if (config.blocking_rebuild && rebuilding) {
        throw Error(ErrorCode::IndexRebuilding, "index rebuild in progress");
      }
      const auto q = Query::from_json(parse_body(req), config.retrieval.k_default);
      reply(res, 200, query(*current(), q).to_json());
    }));

    server.Post("/index/rebuild", guarded([this](const httplib::Request&, httplib::Response& res) {
      const bool started = rebuild(config.blocking_rebuild);
      if (config.blocking_rebuild) {
        if (!started) throw Error(ErrorCode::IndexRebuilding, "index rebuild in progress");
        reply(res, 200, {{"status", "rebuilt"}, {"indexed", current()->size()}});
      } else {
        reply(res, 202, {{"status", started ? "started" : "already_running"}});
      }
    }));

    server.Post("/embeddings/ingest", guarded([this](const httplib::Request& req, httplib::Response& res) {
      std::unique_lock lock(store_mu);
      DenseStore candidate = dense;
      const auto& cases = store.state().cases;
      candidate.set_strict([&cases](std::string_view id) { return cases.find(id) != cases.end(); });
      const auto n = candidate.ingest_jsonl(req.body);
      candidate.set_strict(nullptr);
      store.append_embeddings(req.body);
      dense = std::move(candidate);
      reply(res, 200, {{"ingested", n}, {"dimension", dense.dimension() ? json(*dense.dimension()) : json(nullptr)}});
    }));

    server.Get("/bench/latest", guarded([this](const httplib::Request&, httplib::Response& res) {
      const auto path = config.store_dir / "bench" / "latest.json";
      if (!std::filesystem::exists(path)) throw Error(ErrorCode::NotFound, "no benchmark report recorded");
      reply(res, 200, json::parse(read_file(path)));
    }));
  }

  // Caller holds store_mu.
  void check_image(const ImageRecord& image) const {
    const auto& cases = store.state().cases;
    const auto report = validate_image(image, [&](const std::string& id) { return cases.contains(id); });
    if (report.ok()) return;
    const auto& v = report.violations.front();
    if (v.message == "references unknown case") throw Error(ErrorCode::NotFound, "no case " + image.pmcid, v.path);
    throw Error(ErrorCode::SchemaViolation, v.message, v.path);
  }
};

CaseService::CaseService(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

CaseService::~CaseService() = default;

int CaseService::bind() {
  auto& s = impl_->server;
  const auto& c = impl_->config;
  if (c.port == 0) {
    impl_->bound_port = s.bind_to_any_port(c.host);
  } else {
    impl_->bound_port = s.bind_to_port(c.host, c.port) ? c.port : -1;
  }
  if (impl_->bound_port < 0) {
    throw Error(ErrorCode::PortInUse, "cannot bind " + c.host + ":" + std::to_string(c.port));
  }
  return impl_->bound_port;
}

void CaseService::run() {
  if (impl_->bound_port < 0) throw Error(ErrorCode::InvalidArgument, "bind() must succeed before run()");
  impl_->server.listen_after_bind();
}

void CaseService::stop() { impl_->server.stop(); }

std::shared_ptr<const RetrievalState> CaseService::snapshot() const { return impl_->current(); }

bool CaseService::rebuild(bool wait) { return impl_->rebuild(wait); }

}  // namespace amelo
