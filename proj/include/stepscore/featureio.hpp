#pragma once

// HHAF feature files: a 16-byte header ("HHAF", version, T, D as little-endian
// u32) followed by T*D little-endian float32 values in row-major order.

#include "stepscore/common.hpp"
#include "stepscore/feature_sequence.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace stepscore {

class FeatureFileError : public Error {
 public:
  enum class Kind { Io, BadMagic, BadVersion, BadHeader, TooLarge, Truncated, TrailingData };

  FeatureFileError(Kind kind, const std::filesystem::path& path, const std::string& what)
      : Error(path.string() + ": " + what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

namespace featureio {

inline constexpr std::array<char, 4> kMagic = {'H', 'H', 'A', 'F'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 16;
/// Default cap on T*D, checked before the payload is allocated.
inline constexpr std::uint64_t kDefaultMaxElements = std::uint64_t{1} << 28;

inline void put_u32(char* dst, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) dst[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
}

inline std::uint32_t get_u32(const char* src) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(src[i])) << (8 * i);
  return v;
}

}  // namespace featureio

/// Writes `seq` as an HHAF file and returns the number of bytes written.
inline std::uint64_t write_features(const FeatureSequence& seq, const std::filesystem::path& path) {
  using namespace featureio;
  const auto rows = seq.frames();
  const auto cols = seq.dim();
  if (rows < 1 || cols < 1) {
    throw FeatureFileError(FeatureFileError::Kind::BadHeader, path, "feature matrix must be at least 1x1");
  }
  if (rows > 0xFFFFFFFF || cols > 0xFFFFFFFF) {
    throw FeatureFileError(FeatureFileError::Kind::TooLarge, path, "dimensions exceed u32");
  }

  std::vector<char> buf(kHeaderBytes + 4 * static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
  std::memcpy(buf.data(), kMagic.data(), 4);
  put_u32(buf.data() + 4, kVersion);
  put_u32(buf.data() + 8, static_cast<std::uint32_t>(rows));
  put_u32(buf.data() + 12, static_cast<std::uint32_t>(cols));

  char* p = buf.data() + kHeaderBytes;
  for (Index t = 0; t < rows; ++t) {
    for (Index d = 0; d < cols; ++d, p += 4) {
      put_u32(p, std::bit_cast<std::uint32_t>(static_cast<float>(seq.values(t, d))));
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FeatureFileError(FeatureFileError::Kind::Io, path, "cannot open for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FeatureFileError(FeatureFileError::Kind::Io, path, "write failed");
  return buf.size();
}

inline FeatureSequence read_features(const std::filesystem::path& path,
                                     std::uint64_t max_elements = featureio::kDefaultMaxElements) {
  using namespace featureio;
  using Kind = FeatureFileError::Kind;

  std::ifstream in(path, std::ios::binary);
  if (!in) throw FeatureFileError(Kind::Io, path, "cannot open for reading");

  std::array<char, kHeaderBytes> header{};
  in.read(header.data(), kHeaderBytes);
  if (in.gcount() != static_cast<std::streamsize>(kHeaderBytes)) {
    throw FeatureFileError(Kind::Truncated, path, "file shorter than the 16-byte header");
  }
  if (std::memcmp(header.data(), kMagic.data(), 4) != 0) {
    throw FeatureFileError(Kind::BadMagic, path, "bad magic (expected HHAF)");
  }
  const std::uint32_t version = get_u32(header.data() + 4);
  if (version != kVersion) {
    throw FeatureFileError(Kind::BadVersion, path, "unsupported version " + std::to_string(version));
  }
  const std::uint32_t rows = get_u32(header.data() + 8);
  const std::uint32_t cols = get_u32(header.data() + 12);
  if (rows < 1 || cols < 1) {
    throw FeatureFileError(Kind::BadHeader, path, "header declares an empty matrix");
  }
  const std::uint64_t elements = std::uint64_t{rows} * cols;
  if (elements > max_elements) {
    throw FeatureFileError(Kind::TooLarge, path,
                           "header declares " + std::to_string(elements) + " values, cap is " +
                               std::to_string(max_elements));
  }

  const std::uint64_t payload = 4 * elements;
  in.seekg(0, std::ios::end);
  const auto total = static_cast<std::uint64_t>(in.tellg());
  if (total < kHeaderBytes + payload) {
    throw FeatureFileError(Kind::Truncated, path,
                           "payload has " + std::to_string(total - kHeaderBytes) + " bytes, expected " +
                               std::to_string(payload));
  }
  if (total > kHeaderBytes + payload) {
    throw FeatureFileError(Kind::TrailingData, path, "unexpected bytes after payload");
  }
  in.seekg(static_cast<std::streamoff>(kHeaderBytes), std::ios::beg);

  std::vector<char> buf(static_cast<std::size_t>(payload));
  in.read(buf.data(), static_cast<std::streamsize>(payload));
  if (static_cast<std::uint64_t>(in.gcount()) != payload) {
    throw FeatureFileError(Kind::Truncated, path, "short read");
  }

  FeatureSequence seq;
  seq.values.resize(rows, cols);
  const char* p = buf.data();
  for (std::uint32_t t = 0; t < rows; ++t) {
    for (std::uint32_t d = 0; d < cols; ++d, p += 4) {
      seq.values(t, d) = static_cast<double>(std::bit_cast<float>(get_u32(p)));
    }
  }
  return seq;
}

}  // namespace stepscore
