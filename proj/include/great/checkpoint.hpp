#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "great/errors.hpp"
#include "great/params.hpp"

namespace great {

/// On-disk model snapshot. Tensor payloads (values and both Adam moments) are
/// stored as little-endian IEEE-754 32-bit floats; compute stays 64-bit.
struct Checkpoint {
  nlohmann::json config;
  int epoch = 0;
  double best_score = 0.0;
  struct Entry {
    std::string name;
    ad::Shape shape;
    std::vector<float> data;
  };
  std::vector<Entry> entries;
  std::map<std::string, std::int64_t> steps;
};

constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[9] = "GREATCKP";

inline Checkpoint snapshot_checkpoint(const ParameterStore& store, nlohmann::json config,
                                      int epoch, double best_score) {
  Checkpoint ckpt;
  ckpt.config = std::move(config);
  ckpt.epoch = epoch;
  ckpt.best_score = best_score;
  auto push = [&](const std::string& name, const ad::Shape& shape, const ad::Buffer& src) {
    Checkpoint::Entry e;
    e.name = name;
    e.shape = shape;
    e.data.reserve(src.size());
    for (double v : src) e.data.push_back(static_cast<float>(v));
    ckpt.entries.push_back(std::move(e));
  };
  for (std::size_t i = 0; i < store.count(); ++i) {
    const Param& p = store.param(i);
    push(p.name, p.shape, *p.value);
    push(p.name + "#m", p.shape, p.adam_m);
    push(p.name + "#v", p.shape, p.adam_v);
    ckpt.steps[p.name] = p.step;
  }
  return ckpt;
}

/// Writes checkpoint tensors into an already-registered store.
inline void apply_checkpoint(const Checkpoint& ckpt, ParameterStore& store) {
  for (const auto& e : ckpt.entries) {
    std::string base = e.name;
    ad::Buffer* dst = nullptr;
    if (base.size() > 2 && base.substr(base.size() - 2) == "#m") {
      base = base.substr(0, base.size() - 2);
      if (!store.has(base)) throw CheckpointShapeError("checkpoint tensor '" + e.name + "' has no matching parameter");
      dst = &store.at(base).adam_m;
    } else if (base.size() > 2 && base.substr(base.size() - 2) == "#v") {
      base = base.substr(0, base.size() - 2);
      if (!store.has(base)) throw CheckpointShapeError("checkpoint tensor '" + e.name + "' has no matching parameter");
      dst = &store.at(base).adam_v;
    } else {
      if (!store.has(base)) throw CheckpointShapeError("checkpoint tensor '" + e.name + "' has no matching parameter");
      dst = store.at(base).value.get();
    }
    Param& p = store.at(base);
    if (p.shape != e.shape)
      throw CheckpointShapeError("shape mismatch for '" + e.name + "': checkpoint " +
                                 ad::shape_str(e.shape) + " vs parameter " + ad::shape_str(p.shape));
    for (std::size_t i = 0; i < e.data.size(); ++i) (*dst)[i] = static_cast<double>(e.data[i]);
  }
  for (const auto& [name, step] : ckpt.steps)
    if (store.has(name)) store.at(name).step = step;
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(std::string_view s, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + i])) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::string_view s, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[off + i])) << (8 * i);
  return v;
}

}  // namespace detail

/// Layout: 8-byte magic, 4-byte version, 8-byte little-endian header length,
/// JSON header, then concatenated float32 payloads in header order.
inline std::string checkpoint_to_bytes(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["config"] = ckpt.config;
  header["epoch"] = ckpt.epoch;
  header["best_score"] = ckpt.best_score;
  header["steps"] = ckpt.steps;
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& e : ckpt.entries) {
    tensors.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", offset}});
    offset += e.data.size() * 4;
  }
  header["tensors"] = tensors;
  const std::string hbytes = header.dump();

  std::string out;
  out.reserve(20 + hbytes.size() + offset);
  out.append(kCheckpointMagic, 8);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, hbytes.size());
  out += hbytes;
  for (const auto& e : ckpt.entries)
    for (float f : e.data) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      detail::put_u32(out, bits);
    }
  return out;
}

inline Checkpoint checkpoint_from_bytes(std::string_view bytes) {
  if (bytes.size() < 20)
    throw CheckpointTruncatedError("checkpoint needs at least 20 header bytes, got " +
                                   std::to_string(bytes.size()));
  if (bytes.substr(0, 8) != std::string_view(kCheckpointMagic, 8))
    throw Error("bad checkpoint magic");
  const std::uint32_t version = detail::get_u32(bytes, 8);
  if (version != kCheckpointVersion)
    throw CheckpointVersionError("unsupported checkpoint version " + std::to_string(version) +
                                 " (expected " + std::to_string(kCheckpointVersion) + ")");
  const std::uint64_t hlen = detail::get_u64(bytes, 12);
  if (20 + hlen > bytes.size())
    throw CheckpointTruncatedError("checkpoint header claims " + std::to_string(hlen) +
                                   " bytes, only " + std::to_string(bytes.size() - 20) + " left");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(20, hlen));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(std::string("bad checkpoint header: ") + e.what());
  }
  Checkpoint ckpt;
  ckpt.config = header.at("config");
  ckpt.epoch = header.at("epoch").get<int>();
  ckpt.best_score = header.at("best_score").get<double>();
  for (auto it = header.at("steps").begin(); it != header.at("steps").end(); ++it)
    ckpt.steps[it.key()] = it.value().get<std::int64_t>();
  const std::string_view payload = bytes.substr(20 + hlen);
  for (const auto& t : header.at("tensors")) {
    Checkpoint::Entry e;
    e.name = t.at("name").get<std::string>();
    e.shape = t.at("shape").get<ad::Shape>();
    const std::uint64_t offset = t.at("offset").get<std::uint64_t>();
    const std::size_t count = ad::numel(e.shape);
    if (offset + count * 4 > payload.size())
      throw CheckpointTruncatedError("tensor '" + e.name + "' expects payload through byte " +
                                     std::to_string(offset + count * 4) + ", payload has " +
                                     std::to_string(payload.size()));
    e.data.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint32_t bits = detail::get_u32(payload, offset + i * 4);
      float f;
      std::memcpy(&f, &bits, 4);
      e.data[i] = f;
    }
    ckpt.entries.push_back(std::move(e));
  }
  return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  const std::string bytes = checkpoint_to_bytes(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return checkpoint_from_bytes(bytes);
}

}  // namespace great
