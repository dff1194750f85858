#include "amelo/index_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "amelo/error.hpp"
#include "amelo/resources.hpp"

namespace amelo {
namespace {

constexpr char kMagic[4] = {'A', 'M', 'C', 'I'};
constexpr std::size_t kHeaderSize = 4 + 4 + 1 + 4 + 8;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void id(const std::string& s) {
    if (s.size() > 0xFFFF) throw Error(ErrorCode::InvalidArgument, "id longer than 65535 bytes");
    le(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> finish() {
    le(static_cast<std::uint32_t>(crc32(0L, out_.data(), static_cast<uInt>(out_.size()))));
    return std::move(out_);
  }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::size_t end) : b_(b), end_(end) {}
  template <typename T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::string id() {
    const auto n = le<std::uint16_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw Error(ErrorCode::ChecksumMismatch, "index payload is truncated");
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

void header(Writer& w, IndexKind kind, std::size_t dim, std::size_t count) {
  w.bytes(kMagic, 4);
  w.le(kIndexFormatVersion);
  w.le(static_cast<std::uint8_t>(kind));
  w.le(static_cast<std::uint32_t>(dim));
  w.le(static_cast<std::uint64_t>(count));
}

}  // namespace

std::vector<std::uint8_t> encode_index(const FlatIndex& index) {
  Writer w;
  header(w, IndexKind::Flat, index.dimension(), index.count());
  for (float v : index.data()) w.f32(v);
  for (const auto& id : index.ids()) w.id(id);
  return w.finish();
}

std::vector<std::uint8_t> encode_index(const KMeansModel& model) {
  Writer w;
  header(w, IndexKind::KMeans, model.dimension, model.k());
  for (const auto& c : model.centroids) {
    for (float v : c) w.f32(v);
  }
  for (std::size_t c = 0; c < model.k(); ++c) w.id(std::to_string(c));
  w.le(static_cast<std::uint64_t>(model.assignment.size()));
  for (auto a : model.assignment) w.le(a);
  w.f64(model.inertia);
  w.le(static_cast<std::uint64_t>(model.iterations_run));
  w.le(static_cast<std::uint32_t>(model.inertia_history.size()));
  for (double v : model.inertia_history) w.f64(v);
  w.le(static_cast<std::uint32_t>(model.standardization.mean.size()));
  for (std::size_t i = 0; i < model.standardization.mean.size(); ++i) {
    w.f64(model.standardization.mean[i]);
    w.f64(model.standardization.stddev[i]);
  }
  return w.finish();
}

std::vector<std::uint8_t> encode_index(const SparseMatrix& matrix) {
  Writer w;
  header(w, IndexKind::Sparse, matrix.dimension(), matrix.count());
  std::vector<float> dense(matrix.dimension());
  for (const auto& row : matrix.rows()) {
    std::fill(dense.begin(), dense.end(), 0.0f);
    for (const auto& [col, weight] : row.entries) dense[col] = weight;
    for (float v : dense) w.f32(v);
  }
  for (const auto& id : matrix.ids()) w.id(id);
  return w.finish();
}

AnyIndex decode_index(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::Io, "not an index file (bad magic)");
  }
  if (bytes.size() >= 8) {
    const std::uint32_t version = static_cast<std::uint32_t>(bytes[4]) | static_cast<std::uint32_t>(bytes[5]) << 8 |
                                  static_cast<std::uint32_t>(bytes[6]) << 16 |
                                  static_cast<std::uint32_t>(bytes[7]) << 24;
    if (version != kIndexFormatVersion) {
      throw Error(ErrorCode::FormatVersionMismatch, "file version " + std::to_string(version) + ", expected " +
                                                        std::to_string(kIndexFormatVersion));
    }
  }
  if (bytes.size() < kHeaderSize + 4) throw Error(ErrorCode::ChecksumMismatch, "index file is truncated");
  const std::size_t body = bytes.size() - 4;
  const std::uint32_t stored = static_cast<std::uint32_t>(bytes[body]) |
                               static_cast<std::uint32_t>(bytes[body + 1]) << 8 |
                               static_cast<std::uint32_t>(bytes[body + 2]) << 16 |
                               static_cast<std::uint32_t>(bytes[body + 3]) << 24;
  if (stored != static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(body)))) {
    throw Error(ErrorCode::ChecksumMismatch, "CRC32 does not match contents");
  }

  Reader r(bytes, body);
  for (int i = 0; i < 4; ++i) r.le<std::uint8_t>();
  r.le<std::uint32_t>();
  const auto kind = r.le<std::uint8_t>();
  const std::size_t dim = r.le<std::uint32_t>();
  const std::size_t count = r.le<std::uint64_t>();
  if (count > body || (dim != 0 && count * dim > body / 4)) {
    throw Error(ErrorCode::ChecksumMismatch, "header counts exceed file size");
  }
  std::vector<float> block(count * dim);
  for (auto& v : block) v = r.f32();
  std::vector<std::string> ids(count);
  for (auto& id : ids) id = r.id();

  const auto finish = [&r] {
    if (!r.done()) throw Error(ErrorCode::ChecksumMismatch, "trailing bytes after index payload");
  };

  switch (static_cast<IndexKind>(kind)) {
    case IndexKind::Flat:
      finish();
      return FlatIndex::from_parts(dim, std::move(block), std::move(ids));
    case IndexKind::KMeans: {
      KMeansModel m;
      m.dimension = dim;
      m.centroids.assign(count, DenseVector(dim));
      for (std::size_t c = 0; c < count; ++c) {
        std::copy_n(block.begin() + static_cast<std::ptrdiff_t>(c * dim), dim, m.centroids[c].begin());
      }
      const auto rows = r.le<std::uint64_t>();
      if (rows > body / 4) throw Error(ErrorCode::ChecksumMismatch, "assignment count exceeds file size");
      m.assignment.resize(rows);
      for (auto& a : m.assignment) a = r.le<std::uint32_t>();
      m.inertia = r.f64();
      m.iterations_run = r.le<std::uint64_t>();
      m.inertia_history.resize(r.le<std::uint32_t>());
      for (auto& v : m.inertia_history) v = r.f64();
      const auto n_std = r.le<std::uint32_t>();
      m.standardization.mean.resize(n_std);
      m.standardization.stddev.resize(n_std);
      for (std::uint32_t i = 0; i < n_std; ++i) {
        m.standardization.mean[i] = r.f64();
        m.standardization.stddev[i] = r.f64();
      }
      finish();
      return m;
    }
    case IndexKind::Sparse: {
      finish();
      std::vector<std::pair<std::string, SparseVector>> rows;
      rows.reserve(count);
      for (std::size_t i = 0; i < count; ++i) {
        SparseVector v;
        v.dimension = dim;
        for (std::size_t j = 0; j < dim; ++j) {
          const float x = block[i * dim + j];
          if (x != 0.0f) v.entries.emplace_back(static_cast<std::uint32_t>(j), x);
        }
        rows.emplace_back(std::move(ids[i]), std::move(v));
      }
      return SparseMatrix::build(dim, std::move(rows));
    }
  }
  throw Error(ErrorCode::FormatVersionMismatch, "unknown index kind " + std::to_string(kind));
}

void persist_index(const AnyIndex& index, const std::filesystem::path& path) {
  const auto bytes = std::visit([](const auto& i) { return encode_index(i); }, index);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot rename into " + path.string() + ": " + ec.message());
}

AnyIndex load_index(const std::filesystem::path& path) {
  const std::string raw = read_file(path);
  return decode_index(std::vector<std::uint8_t>(raw.begin(), raw.end()));
}

}  // namespace amelo
