#include <chrono>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "amelo/case_service.hpp"
#include "amelo/case_store.hpp"
#include "support.hpp"

namespace amelo {
namespace {

using nlohmann::json;

class Running {
 public:
  explicit Running(const std::filesystem::path& dir, bool blocking = false) {
    ServiceConfig c;
    c.store_dir = dir;
    c.port = 0;
    c.blocking_rebuild = blocking;
    service_ = std::make_unique<CaseService>(c);
    port_ = service_->bind();
    thread_ = std::thread([this] { service_->run(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  ~Running() {
    service_->stop();
    thread_.join();
  }

  httplib::Client& http() { return *client_; }
  CaseService& service() { return *service_; }

  std::pair<int, json> call(const std::string& method, const std::string& path, const std::string& body = "") {
    httplib::Result r;
    if (method == "GET") r = client_->Get(path);
    if (method == "POST") r = client_->Post(path, body, "application/json");
    if (method == "PUT") r = client_->Put(path, body, "application/json");
    if (method == "DELETE") r = client_->Delete(path);
    if (!r) return {0, json()};
    return {r->status, r->body.empty() ? json() : json::parse(r->body)};
  }

 private:
  std::unique_ptr<CaseService> service_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

void wait_for_index(Running& s, std::size_t count) {
  for (int i = 0; i < 200; ++i) {
    const auto [status, body] = s.call("GET", "/health");
    if (status == 200 && !body.at("rebuilding").get<bool>() && body.at("indexed") == count) return;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  FAIL() << "index did not reach " << count;
}

TEST(Service, EmptyStoreIsHealthy) {
  testing::TempDir dir;
  Running s(dir.path());
  const auto [status, body] = s.call("GET", "/health");
  EXPECT_EQ(status, 200);
  EXPECT_EQ(body.at("cases"), 0);
  EXPECT_EQ(s.call("POST", "/query", R"({"text": "swelling"})").first, 409);
}

TEST(Service, CaseCrudRoundTrip) {
  testing::TempDir dir;
  Running s(dir.path());
  const auto c = testing::fixture_cases().at(0);
  EXPECT_EQ(s.call("POST", "/cases", json(c).dump()).first, 201);
  EXPECT_EQ(s.call("POST", "/cases", json(c).dump()).first, 409);
  auto [status, got] = s.call("GET", "/cases/" + c.pmcid);
  EXPECT_EQ(status, 200);
  EXPECT_EQ(case_from_json(got), c);

  auto edited = json(c);
  edited.erase("pmcid");
  edited["treatment"] = "segmental resection";
  EXPECT_EQ(s.call("PUT", "/cases/" + c.pmcid, edited.dump()).first, 200);
  EXPECT_EQ(s.call("GET", "/cases/" + c.pmcid).second.at("treatment"), "segmental resection");
  EXPECT_EQ(s.call("PUT", "/cases/PMC42", edited.dump()).first, 404);

  const auto listed = s.call("GET", "/cases?offset=0&limit=10").second;
  EXPECT_EQ(listed.at("total"), 1);
  EXPECT_EQ(s.call("DELETE", "/cases/" + c.pmcid).first, 200);
  EXPECT_EQ(s.call("GET", "/cases/" + c.pmcid).first, 404);
  EXPECT_EQ(s.call("DELETE", "/cases/" + c.pmcid).first, 404);
}

TEST(Service, SchemaErrorsCarryThePath) {
  testing::TempDir dir;
  Running s(dir.path());
  auto c = json(testing::fixture_cases().at(0));
  c["tumor_size_mm"] = {-3.0};
  const auto [status, body] = s.call("POST", "/cases", c.dump());
  EXPECT_EQ(status, 400);
  EXPECT_EQ(body.at("path"), "tumor_size_mm[0]");
  EXPECT_EQ(body.at("code"), "SchemaViolation");
  EXPECT_EQ(s.call("POST", "/cases", "{broken").first, 400);
}

TEST(Service, ImagesFollowTheirCase) {
  testing::TempDir dir;
  Running s(dir.path());
  const auto c = testing::fixture_cases().at(0);
  s.call("POST", "/cases", json(c).dump());
  const json img = {{"image_id", "fig1a"}, {"pmcid", c.pmcid}, {"modality", "radiology"},
                    {"sub_labels", {"CT", "axial"}}, {"caption", "axial CT"}, {"blob_base64", "YWJj"}};
  const auto [status, created] = s.call("POST", "/images", img.dump());
  ASSERT_EQ(status, 201) << created.dump();
  EXPECT_EQ(created.at("file_path"), "blobs/ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(s.call("POST", "/images", img.dump()).first, 409);
  auto orphan = img;
  orphan["image_id"] = "fig9";
  orphan["pmcid"] = "PMC1";
  EXPECT_EQ(s.call("POST", "/images", orphan.dump()).first, 404);

  auto edit = created;
  edit["caption"] = "axial CT, bone window";
  EXPECT_EQ(s.call("PUT", "/images/fig1a", edit.dump()).first, 200);
  EXPECT_EQ(s.call("GET", "/cases/" + c.pmcid + "/images").second.at("images").size(), 1u);

  const auto deleted = s.call("DELETE", "/cases/" + c.pmcid).second;
  EXPECT_EQ(deleted.at("images_deleted"), json::array({"fig1a"}));
  EXPECT_EQ(s.call("DELETE", "/images/fig1a").first, 404);
}

TEST(Service, QueryAfterRebuild) {
  testing::TempDir dir;
  {
    auto store = CaseStore::open(dir.path());
    for (const auto& c : testing::fixture_cases()) store.put_case(c);
  }
  Running s(dir.path());
  const json q = {{"mode", "free_text"}, {"text", testing::slurp(testing::fixture("clinical_use_case.txt"))}};
  auto [status, body] = s.call("POST", "/query", q.dump());
  ASSERT_EQ(status, 200) << body.dump();
  EXPECT_EQ(body.at("results").at(0).at("pmcid"), "PMC7234567");
  EXPECT_EQ(body.at("results").at(0).at("summary").at("reference_id"), "PMC7234567");

  json extra = json(testing::fixture_cases().at(0));
  extra["pmcid"] = "PMC1000001";
  s.call("POST", "/cases", extra.dump());
  EXPECT_EQ(s.call("GET", "/health").second.at("indexed"), 4);
  const auto r = s.call("POST", "/index/rebuild");
  EXPECT_EQ(r.first, 202);
  wait_for_index(s, 5);
}

TEST(Service, EmbeddingIngestIsValidated) {
  testing::TempDir dir;
  {
    auto store = CaseStore::open(dir.path());
    for (const auto& c : testing::fixture_cases()) store.put_case(c);
  }
  Running s(dir.path(), true);
  std::string jsonl;
  for (const auto& c : testing::fixture_cases()) {
    jsonl += json{{"pmcid", c.pmcid}, {"vector", {1.0, c.pmcid.size() * 0.1, 0.5}}}.dump() + "\n";
  }
  auto [status, body] = s.call("POST", "/embeddings/ingest", jsonl);
  ASSERT_EQ(status, 200) << body.dump();
  EXPECT_EQ(body.at("ingested"), 4);
  EXPECT_EQ(body.at("dimension"), 3);
  EXPECT_EQ(s.call("POST", "/embeddings/ingest", R"({"pmcid": "PMC9", "vector": [1, 2, 3]})").first, 404);
  EXPECT_EQ(s.call("POST", "/embeddings/ingest", R"({"pmcid": "PMC7234567", "vector": [1, 2]})").first, 400);
  const auto rebuilt = s.call("POST", "/index/rebuild");
  EXPECT_EQ(rebuilt.first, 200);
  EXPECT_EQ(s.call("GET", "/health").second.at("dense_indexed"), 4);
  EXPECT_EQ(CaseStore::open(dir.path()).embeddings(), jsonl);
}

TEST(Service, BenchLatest) {
  testing::TempDir dir;
  Running s(dir.path());
  EXPECT_EQ(s.call("GET", "/bench/latest").first, 404);
  std::filesystem::create_directories(dir.path() / "bench");
  std::ofstream(dir.path() / "bench" / "latest.json") << R"({"schema": "amelo.bench/1", "reports": []})";
  EXPECT_EQ(s.call("GET", "/bench/latest").second.at("schema"), "amelo.bench/1");
}

TEST(Service, PortInUse) {
  testing::TempDir dir;
  httplib::Server blocker;
  const int port = blocker.bind_to_any_port("127.0.0.1");
  ServiceConfig c;
  c.store_dir = dir.path();
  c.port = port;
  CaseService service(c);
  try {
    service.bind();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PortInUse);
  }
}

TEST(Service, StatusMapping) {
  EXPECT_EQ(http_status(ErrorCode::SchemaViolation), 400);
  EXPECT_EQ(http_status(ErrorCode::NotFound), 404);
  EXPECT_EQ(http_status(ErrorCode::Conflict), 409);
  EXPECT_EQ(http_status(ErrorCode::IndexRebuilding), 503);
  EXPECT_EQ(http_status(ErrorCode::Io), 500);
}

}  // namespace
}  // namespace amelo
