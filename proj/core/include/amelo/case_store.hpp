#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "amelo/case_model.hpp"

namespace amelo {

/// Materialized view of the mutation log.
struct StoreState {
  std::map<std::string, CaseRecord, std::less<>> cases;
  std::map<std::string, ImageRecord, std::less<>> images;
  std::uint64_t last_seq = 0;

  friend bool operator==(const StoreState&, const StoreState&) = default;
};

/// Folds log text into a state. Each complete line is one mutation:
///   {"seq": n, "op": "put_case", "case": {...}}
///   {"seq": n, "op": "delete_case", "pmcid": "..."}    (also drops its images)
///   {"seq": n, "op": "put_image", "image": {...}}
///   {"seq": n, "op": "delete_image", "image_id": "..."}
/// A final line without its newline is an unacknowledged write and is
/// ignored. Any other unreadable line throws CorruptLog with path "line N".
StoreState replay_log(std::string_view log);

/// Append-only case store rooted at a directory:
///   cases.jsonl        mutation log
///   embeddings.jsonl   ingested dense vectors
///   blobs/<sha256>     uploaded image bytes
/// Every mutation is written and fsync'ed before it is applied, so a
/// successful return means the change survives a crash. Not thread-safe;
/// the owner serializes writers.
class CaseStore {
 public:
  /// Creates the directory if needed, replays the log and trims a torn tail.
  static CaseStore open(const std::filesystem::path& dir);

  CaseStore(CaseStore&&) noexcept;
  CaseStore& operator=(CaseStore&&) noexcept;
  CaseStore(const CaseStore&) = delete;
  CaseStore& operator=(const CaseStore&) = delete;
  ~CaseStore();

  const StoreState& state() const noexcept { return state_; }
  const std::filesystem::path& dir() const noexcept { return dir_; }

  void put_case(const CaseRecord& record);
  /// Returns the ids of the images removed with the case.
  std::vector<std::string> delete_case(const std::string& pmcid);
  void put_image(const ImageRecord& image);
  void delete_image(const std::string& image_id);

  /// Stores bytes under blobs/ by SHA-256 and returns "blobs/<hex>".
  std::string put_blob(std::string_view bytes);

  /// Appends already-validated embedding JSONL (durable on return).
  void append_embeddings(std::string_view jsonl);
  /// Contents of embeddings.jsonl, empty if absent.
  std::string embeddings() const;

 private:
  CaseStore() = default;
  void append(const std::string& line);

  std::filesystem::path dir_;
  int fd_ = -1;
  StoreState state_;
};

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view bytes);

}  // namespace amelo
