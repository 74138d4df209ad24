#pragma once

// Checkpoint container:
//   "HHAC" | u32 version | u64 header length | JSON header | tensor payload
// The JSON header holds the ModelConfig and an ordered tensor table
// ({name, rows, cols}); the payload is each tensor's values as little-endian
// float64, row-major, in table order.

#include "stepscore/datamodel.hpp"
#include "stepscore/model.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace stepscore {

class CheckpointError : public Error {
 public:
  using Error::Error;
};

namespace checkpoint_detail {

inline constexpr char kMagic[4] = {'H', 'H', 'A', 'C'};
inline constexpr std::uint32_t kVersion = 1;

inline void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint64_t get_le(const char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

}  // namespace checkpoint_detail

/// Serializes `model`; `extra` is stored verbatim in the header (run metadata).
inline std::string checkpoint_bytes(const Model& model, const json& extra = json::object()) {
  using namespace checkpoint_detail;
  json tensors = json::array();
  std::string payload;
  model.for_each_param([&](const std::string& name, const Param& p) {
    tensors.push_back({{"name", name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
    for (Index i = 0; i < p.value.size(); ++i) put_le(payload, std::bit_cast<std::uint64_t>(p.value.data()[i]), 8);
  });
  const std::string header = json{{"config", model.config}, {"tensors", tensors}, {"extra", extra}}.dump();

  std::string out(kMagic, 4);
  put_le(out, kVersion, 4);
  put_le(out, header.size(), 8);
  out += header;
  out += payload;
  return out;
}

inline void save_checkpoint(const Model& model, const std::filesystem::path& path, const json& extra = json::object()) {
  const std::string bytes = checkpoint_bytes(model, extra);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed: " + path.string());
}

struct LoadedCheckpoint {
  Model model;
  json extra;
};

/// Rebuilds the model from the stored config and checks every tensor's name
/// and shape against it before copying values.
inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  using namespace checkpoint_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError(path.string() + ": not a checkpoint (bad magic)");
  }
  if (get_le(bytes.data() + 4, 4) != kVersion) throw CheckpointError(path.string() + ": unsupported checkpoint version");
  const std::uint64_t header_len = get_le(bytes.data() + 8, 8);
  if (header_len > bytes.size() - 16) throw CheckpointError(path.string() + ": truncated header");
  json header;
  try {
    header = json::parse(bytes.substr(16, header_len));
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": corrupt header: " + e.what());
  }

  LoadedCheckpoint out;
  out.model = Model(header.at("config").get<ModelConfig>());
  out.extra = header.value("extra", json::object());

  std::map<std::string, std::pair<Index, Index>> expected;
  out.model.for_each_param([&](const std::string& name, const Param& p) {
    expected[name] = {p.value.rows(), p.value.cols()};
  });
  const auto& table = header.at("tensors");
  if (table.size() != expected.size()) {
    throw CheckpointError(path.string() + ": checkpoint has " + std::to_string(table.size()) +
                          " tensors, config implies " + std::to_string(expected.size()));
  }
  std::map<std::string, std::size_t> offsets;
  std::size_t offset = 16 + header_len;
  for (const auto& t : table) {
    const auto name = t.at("name").get<std::string>();
    const auto rows = t.at("rows").get<Index>();
    const auto cols = t.at("cols").get<Index>();
    auto it = expected.find(name);
    if (it == expected.end()) throw CheckpointError(path.string() + ": unexpected tensor " + name);
    if (it->second != std::pair{rows, cols}) {
      throw CheckpointError(path.string() + ": tensor " + name + " has shape " + std::to_string(rows) + "x" +
                            std::to_string(cols) + ", config expects " + std::to_string(it->second.first) + "x" +
                            std::to_string(it->second.second));
    }
    offsets[name] = offset;
    offset += static_cast<std::size_t>(rows * cols) * 8;
  }
  if (offset != bytes.size()) throw CheckpointError(path.string() + ": payload size does not match tensor table");

  out.model.for_each_param([&](const std::string& name, Param& p) {
    const char* src = bytes.data() + offsets.at(name);
    for (Index i = 0; i < p.value.size(); ++i, src += 8) p.value.data()[i] = std::bit_cast<double>(get_le(src, 8));
    p.zero_grad();
  });
  return out;
}

}  // namespace stepscore
