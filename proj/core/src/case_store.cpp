#include "amelo/case_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

#include "amelo/error.hpp"
#include "amelo/resources.hpp"

namespace amelo {
namespace {

constexpr const char* kLogName = "cases.jsonl";
constexpr const char* kEmbeddingsName = "embeddings.jsonl";

Error io_error(const std::string& what, const std::filesystem::path& p) {
  return Error(ErrorCode::Io, what + " " + p.string() + ": " + std::strerror(errno));
}

void write_all(int fd, std::string_view data, const std::filesystem::path& p) {
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw io_error("write to", p);
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

void fsync_dir(const std::filesystem::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

// Writes a whole file durably: temp file, fsync, rename, fsync directory.
void write_file_durable(const std::filesystem::path& path, std::string_view data) {
  auto tmp = path;
  tmp += ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw io_error("cannot create", tmp);
  try {
    write_all(fd, data, tmp);
    if (::fsync(fd) != 0) throw io_error("fsync", tmp);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  if (::rename(tmp.c_str(), path.c_str()) != 0) throw io_error("cannot rename into", path);
  fsync_dir(path.parent_path());
}

void apply_entry(StoreState& s, const nlohmann::json& entry) {
  const std::string op = entry.at("op").get<std::string>();
  if (op == "put_case") {
    auto record = case_from_json(entry.at("case"));
    s.cases[record.pmcid] = std::move(record);
  } else if (op == "delete_case") {
    const auto pmcid = entry.at("pmcid").get<std::string>();
    s.cases.erase(pmcid);
    std::erase_if(s.images, [&](const auto& kv) { return kv.second.pmcid == pmcid; });
  } else if (op == "put_image") {
    auto image = image_from_json(entry.at("image"));
    s.images[image.image_id] = std::move(image);
  } else if (op == "delete_image") {
    s.images.erase(entry.at("image_id").get<std::string>());
  } else {
    throw Error(ErrorCode::SchemaViolation, "unknown op " + op, "op");
  }
  s.last_seq = entry.at("seq").get<std::uint64_t>();
}

}  // namespace

StoreState replay_log(std::string_view log) {
  StoreState state;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < log.size()) {
    const auto nl = log.find('\n', pos);
    if (nl == std::string_view::npos) break;  // torn tail, never acknowledged
    ++line_no;
    const auto line = log.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      apply_entry(state, nlohmann::json::parse(line));
    } catch (const Error& e) {
      throw Error(ErrorCode::CorruptLog, e.what(), "line " + std::to_string(line_no));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::CorruptLog, e.what(), "line " + std::to_string(line_no));
    }
  }
  return state;
}

CaseStore CaseStore::open(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  CaseStore store;
  store.dir_ = dir;
  const auto log_path = dir / kLogName;
  std::string log;
  if (std::filesystem::exists(log_path)) log = read_file(log_path);
  store.state_ = replay_log(log);

  store.fd_ = ::open(log_path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (store.fd_ < 0) throw io_error("cannot open", log_path);
  // Drop a torn final line so the next append starts on a fresh line.
  const auto keep = log.rfind('\n') == std::string::npos ? 0 : log.rfind('\n') + 1;
  if (keep != log.size()) {
    if (::ftruncate(store.fd_, static_cast<off_t>(keep)) != 0) throw io_error("cannot truncate", log_path);
    ::fsync(store.fd_);
  }
  const auto emb_path = dir / kEmbeddingsName;
  if (std::filesystem::exists(emb_path)) {
    const auto emb = read_file(emb_path);
    const auto emb_keep = emb.rfind('\n') == std::string::npos ? 0 : emb.rfind('\n') + 1;
    if (emb_keep != emb.size()) std::filesystem::resize_file(emb_path, emb_keep);
  }
  fsync_dir(dir);
  return store;
}

CaseStore::CaseStore(CaseStore&& other) noexcept
    : dir_(std::move(other.dir_)), fd_(std::exchange(other.fd_, -1)), state_(std::move(other.state_)) {}

CaseStore& CaseStore::operator=(CaseStore&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    dir_ = std::move(other.dir_);
    fd_ = std::exchange(other.fd_, -1);
    state_ = std::move(other.state_);
  }
  return *this;
}

CaseStore::~CaseStore() {
  if (fd_ >= 0) ::close(fd_);
}

void CaseStore::append(const std::string& line) {
  const auto path = dir_ / kLogName;
  const off_t before = ::lseek(fd_, 0, SEEK_END);
  try {
    write_all(fd_, line + "\n", path);
    if (::fdatasync(fd_) != 0) throw io_error("fdatasync", path);
  } catch (...) {
    // Keep the log line-aligned for the next writer.
    if (before >= 0 && ::ftruncate(fd_, before) == 0) ::fdatasync(fd_);
    throw;
  }
}

void CaseStore::put_case(const CaseRecord& record) {
  const nlohmann::json entry = {{"seq", state_.last_seq + 1}, {"op", "put_case"}, {"case", record}};
  append(entry.dump());
  apply_entry(state_, entry);
}

std::vector<std::string> CaseStore::delete_case(const std::string& pmcid) {
  if (!state_.cases.contains(pmcid)) throw Error(ErrorCode::NotFound, "no case " + pmcid, "pmcid");
  std::vector<std::string> removed;
  for (const auto& [id, image] : state_.images) {
    if (image.pmcid == pmcid) removed.push_back(id);
  }
  const nlohmann::json entry = {{"seq", state_.last_seq + 1}, {"op", "delete_case"}, {"pmcid", pmcid}};
  append(entry.dump());
  apply_entry(state_, entry);
  return removed;
}

void CaseStore::put_image(const ImageRecord& image) {
  const nlohmann::json entry = {{"seq", state_.last_seq + 1}, {"op", "put_image"}, {"image", image}};
  append(entry.dump());
  apply_entry(state_, entry);
}

void CaseStore::delete_image(const std::string& image_id) {
  if (!state_.images.contains(image_id)) throw Error(ErrorCode::NotFound, "no image " + image_id, "image_id");
  const nlohmann::json entry = {{"seq", state_.last_seq + 1}, {"op", "delete_image"}, {"image_id", image_id}};
  append(entry.dump());
  apply_entry(state_, entry);
}

std::string CaseStore::put_blob(std::string_view bytes) {
  const auto hex = sha256_hex(bytes);
  const auto blobs = dir_ / "blobs";
  std::error_code ec;
  std::filesystem::create_directories(blobs, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + blobs.string() + ": " + ec.message());
  const auto path = blobs / hex;
  if (!std::filesystem::exists(path)) write_file_durable(path, bytes);
  return "blobs/" + hex;
}

void CaseStore::append_embeddings(std::string_view jsonl) {
  const auto path = dir_ / kEmbeddingsName;
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw io_error("cannot open", path);
  try {
    std::string data(jsonl);
    if (!data.empty() && data.back() != '\n') data.push_back('\n');
    write_all(fd, data, path);
    if (::fdatasync(fd) != 0) throw io_error("fdatasync", path);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
}

std::string CaseStore::embeddings() const {
  const auto path = dir_ / kEmbeddingsName;
  if (!std::filesystem::exists(path)) return {};
  std::string text = read_file(path);
  // Same torn-tail rule as the case log.
  const auto nl = text.rfind('\n');
  text.resize(nl == std::string::npos ? 0 : nl + 1);
  return text;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::Io, "SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

}  // namespace amelo
