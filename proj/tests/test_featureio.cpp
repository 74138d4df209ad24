#include "stepscore/featureio.hpp"

#include "stepscore/rng.hpp"
#include "support/gradcheck.hpp"
#include "support/tempdir.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace stepscore {
namespace {

using Kind = FeatureFileError::Kind;
using testing::TempDir;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

FeatureSequence float_exact(Rng& rng, Index T, Index D) {
  FeatureSequence s{Mat(T, D)};
  for (Index i = 0; i < s.values.size(); ++i) s.values.data()[i] = static_cast<float>(rng.normal() * 10.0);
  return s;
}

Kind read_kind(const std::filesystem::path& p, std::uint64_t cap = featureio::kDefaultMaxElements) {
  try {
    read_features(p, cap);
  } catch (const FeatureFileError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected a FeatureFileError for " << p;
  return Kind::Io;
}

TEST(FeatureIo, FileSizes) {
  TempDir dir;
  EXPECT_EQ(write_features(FeatureSequence{Mat::Zero(1, 1)}, dir / "a.hhaf"), 20u);
  EXPECT_EQ(std::filesystem::file_size(dir / "a.hhaf"), 20u);
  EXPECT_EQ(write_features(FeatureSequence{Mat::Ones(3, 2)}, dir / "b.hhaf"), 40u);
  EXPECT_EQ(std::filesystem::file_size(dir / "b.hhaf"), 40u);
}

TEST(FeatureIo, ByteLayout) {
  TempDir dir;
  Mat m(2, 1);
  m << 1.0, -2.5;
  write_features(FeatureSequence{m}, dir / "x.hhaf");
  const std::string b = slurp(dir / "x.hhaf");
  const unsigned char expected_header[16] = {'H', 'H', 'A', 'F', 1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0};
  ASSERT_EQ(b.size(), 24u);
  EXPECT_EQ(std::memcmp(b.data(), expected_header, 16), 0);
  // 1.0f = 0x3F800000, -2.5f = 0xC0200000, little-endian.
  const unsigned char expected_payload[8] = {0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x20, 0xC0};
  EXPECT_EQ(std::memcmp(b.data() + 16, expected_payload, 8), 0);
}

TEST(FeatureIo, RoundTripIsBitExact) {
  TempDir dir;
  Rng rng(1);
  const auto s = float_exact(rng, 50, 2048);
  write_features(s, dir / "big.hhaf");
  const auto back = read_features(dir / "big.hhaf");
  ASSERT_EQ(back.frames(), 50);
  ASSERT_EQ(back.dim(), 2048);
  for (Index i = 0; i < s.values.size(); ++i) {
    ASSERT_EQ(std::bit_cast<std::uint64_t>(back.values.data()[i]), std::bit_cast<std::uint64_t>(s.values.data()[i]));
  }
}

TEST(FeatureIo, ReadThenWriteReproducesBytes) {
  TempDir dir;
  Rng rng(2);
  write_features(float_exact(rng, 7, 5), dir / "a.hhaf");
  write_features(read_features(dir / "a.hhaf"), dir / "b.hhaf");
  EXPECT_EQ(slurp(dir / "a.hhaf"), slurp(dir / "b.hhaf"));
}

TEST(FeatureIo, SpecialValuesSurvive) {
  TempDir dir;
  Mat m(1, 4);
  m << std::numeric_limits<float>::infinity(), -0.0, std::numeric_limits<float>::denorm_min(), 3.4e38;
  write_features(FeatureSequence{m}, dir / "s.hhaf");
  const auto back = read_features(dir / "s.hhaf");
  EXPECT_TRUE(std::isinf(back.values(0, 0)));
  EXPECT_TRUE(std::signbit(back.values(0, 1)));
  EXPECT_EQ(back.values(0, 2), static_cast<double>(std::numeric_limits<float>::denorm_min()));
}

TEST(FeatureIo, BadMagic) {
  TempDir dir;
  write_features(FeatureSequence{Mat::Ones(2, 2)}, dir / "a.hhaf");
  auto b = slurp(dir / "a.hhaf");
  b.replace(0, 4, "XXXX");
  dump(dir / "a.hhaf", b);
  EXPECT_EQ(read_kind(dir / "a.hhaf"), Kind::BadMagic);
}

TEST(FeatureIo, BadVersion) {
  TempDir dir;
  write_features(FeatureSequence{Mat::Ones(2, 2)}, dir / "a.hhaf");
  auto b = slurp(dir / "a.hhaf");
  b[4] = 2;
  dump(dir / "a.hhaf", b);
  EXPECT_EQ(read_kind(dir / "a.hhaf"), Kind::BadVersion);
}

TEST(FeatureIo, TruncatedPayload) {
  TempDir dir;
  write_features(FeatureSequence{Mat::Ones(3, 2)}, dir / "a.hhaf");
  const auto b = slurp(dir / "a.hhaf");
  dump(dir / "a.hhaf", b.substr(0, b.size() - 4));
  EXPECT_EQ(read_kind(dir / "a.hhaf"), Kind::Truncated);
  dump(dir / "b.hhaf", b.substr(0, 10));
  EXPECT_EQ(read_kind(dir / "b.hhaf"), Kind::Truncated);
}

TEST(FeatureIo, TrailingBytes) {
  TempDir dir;
  write_features(FeatureSequence{Mat::Ones(3, 2)}, dir / "a.hhaf");
  dump(dir / "a.hhaf", slurp(dir / "a.hhaf") + "abcd");
  EXPECT_EQ(read_kind(dir / "a.hhaf"), Kind::TrailingData);
}

TEST(FeatureIo, HostileHeaderRejectedBeforeAllocation) {
  TempDir dir;
  std::string b = "HHAF";
  const unsigned char rest[12] = {1, 0, 0, 0, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF};
  b.append(reinterpret_cast<const char*>(rest), 12);
  dump(dir / "h.hhaf", b);
  EXPECT_EQ(read_kind(dir / "h.hhaf"), Kind::TooLarge);

  write_features(FeatureSequence{Mat::Ones(4, 4)}, dir / "small.hhaf");
  EXPECT_EQ(read_kind(dir / "small.hhaf", 15), Kind::TooLarge);
  EXPECT_NO_THROW(read_features(dir / "small.hhaf", 16));
}

TEST(FeatureIo, EmptyHeaderRejected) {
  TempDir dir;
  std::string b = "HHAF";
  const unsigned char rest[12] = {1, 0, 0, 0, 0, 0, 0, 0, 3, 0, 0, 0};
  b.append(reinterpret_cast<const char*>(rest), 12);
  dump(dir / "e.hhaf", b);
  EXPECT_EQ(read_kind(dir / "e.hhaf"), Kind::BadHeader);
  EXPECT_THROW(write_features(FeatureSequence{Mat(0, 3)}, dir / "z.hhaf"), FeatureFileError);
}

TEST(FeatureIo, MissingFileAndUnwritablePath) {
  TempDir dir;
  EXPECT_EQ(read_kind(dir / "nope.hhaf"), Kind::Io);
  try {
    write_features(FeatureSequence{Mat::Ones(1, 1)}, dir / "no" / "such" / "dir.hhaf");
    FAIL();
  } catch (const FeatureFileError& e) {
    EXPECT_EQ(e.kind(), Kind::Io);
    EXPECT_NE(std::string(e.what()).find("dir.hhaf"), std::string::npos);
  }
}

TEST(FeatureIo, RandomShapesRoundTrip) {
  TempDir dir;
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto s = float_exact(rng, rng.uniform_int(1, 40), rng.uniform_int(1, 40));
    write_features(s, dir / "r.hhaf");
    ASSERT_EQ(read_features(dir / "r.hhaf"), s);
  }
}

TEST(FeatureSequence, AppearanceIsLeftHalf) {
  Mat m(2, 4);
  m << 1, 2, 3, 4, 5, 6, 7, 8;
  const FeatureSequence s{m};
  EXPECT_EQ(s.model_input(false), m.leftCols(2));
  EXPECT_EQ(s.model_input(true), m);
}

}  // namespace
}  // namespace stepscore
