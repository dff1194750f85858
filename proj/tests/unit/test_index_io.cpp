#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "amelo/error.hpp"
#include "amelo/index_io.hpp"
#include "support.hpp"

namespace amelo {
namespace {

FlatIndex random_index(std::size_t n, std::size_t dim) {
  std::mt19937_64 rng(1);
  std::vector<std::pair<std::string, DenseVector>> rows;
  for (std::size_t i = 0; i < n; ++i) rows.emplace_back("PMC" + std::to_string(100000 + i), testing::random_unit(rng, dim));
  return build_flat(rows);
}

ErrorCode decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_index(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "decode succeeded";
  return ErrorCode::Io;
}

TEST(IndexIo, FlatRoundTripThroughFile) {
  const auto idx = random_index(1000, 384);
  testing::TempDir dir;
  const auto path = dir.path() / "flat.amci";
  persist_index(idx, path);
  const auto back = std::get<FlatIndex>(load_index(path));
  EXPECT_EQ(back, idx);
  EXPECT_EQ(std::memcmp(back.data().data(), idx.data().data(), idx.data().size() * sizeof(float)), 0);
}

TEST(IndexIo, HeaderLayout) {
  const auto bytes = encode_index(build_flat({{"ab", {1.0f, 2.0f}}}));
  ASSERT_EQ(bytes.size(), 4u + 4 + 1 + 4 + 8 + 8 + 2 + 2 + 4);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "AMCI");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 0);   // kind flat
  EXPECT_EQ(bytes[9], 2);   // dim
  EXPECT_EQ(bytes[13], 1);  // count
  float first = 0;
  std::memcpy(&first, bytes.data() + 21, 4);
  EXPECT_EQ(first, 1.0f);
}

TEST(IndexIo, KMeansRoundTrip) {
  std::mt19937_64 rng(3);
  std::vector<DenseVector> data;
  for (int i = 0; i < 50; ++i) data.push_back(testing::random_unit(rng, 6));
  auto model = fit_kmeans(data, 4, 30, 9);
  model.standardization = {{0.5, 1.5}, {2.0, 1.0}};
  EXPECT_EQ(std::get<KMeansModel>(decode_index(encode_index(model))), model);
}

TEST(IndexIo, SparseRoundTrip) {
  const auto m = SparseMatrix::build(4, {{"PMC2", {4, {{1, 0.6f}, {3, 0.8f}}}}, {"PMC1", {4, {}}}});
  EXPECT_EQ(std::get<SparseMatrix>(decode_index(encode_index(m))), m);
}

TEST(IndexIo, TruncationIsChecksumMismatch) {
  auto bytes = encode_index(random_index(10, 8));
  bytes.resize(bytes.size() - 5);
  EXPECT_EQ(decode_error(bytes), ErrorCode::ChecksumMismatch);
}

TEST(IndexIo, FlippedBitIsChecksumMismatch) {
  auto bytes = encode_index(random_index(10, 8));
  bytes[40] ^= 0x10;
  EXPECT_EQ(decode_error(bytes), ErrorCode::ChecksumMismatch);
}

TEST(IndexIo, VersionZeroIsRejected) {
  auto bytes = encode_index(random_index(3, 2));
  bytes[4] = 0;
  EXPECT_EQ(decode_error(bytes), ErrorCode::FormatVersionMismatch);
}

TEST(IndexIo, BadMagicAndMissingFile) {
  auto bytes = encode_index(random_index(3, 2));
  bytes[0] = 'X';
  EXPECT_EQ(decode_error(bytes), ErrorCode::Io);
  testing::TempDir dir;
  EXPECT_THROW(load_index(dir.path() / "absent.amci"), Error);
}

}  // namespace
}  // namespace amelo
