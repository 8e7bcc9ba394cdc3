#pragma once

// Checkpoints are two files: `<stem>.json` (manifest) and `<stem>.bin` (parameters as
// little-endian IEEE-754 float32, in layout order). The manifest's "params" block records
// the blob name, value count, FNV-1a hash of the blob bytes and the slot layout.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "skybeam/error.hpp"
#include "skybeam/nn/core.hpp"
#include "skybeam/rng.hpp"

namespace skybeam::nn {

using json = nlohmann::json;

inline std::string encode_f32_le(const Vec<float>& params) {
  std::string bytes(static_cast<std::size_t>(params.size()) * 4, '\0');
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(params(i));
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  return bytes;
}

inline Vec<float> decode_f32_le(const std::string& bytes) {
  if (bytes.size() % 4 != 0) throw SchemaError("parameter blob size is not a multiple of 4");
  Vec<float> out(static_cast<Eigen::Index>(bytes.size() / 4));
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + b])) << (8 * b);
    out(i) = std::bit_cast<float>(bits);
  }
  return out;
}

inline json layout_json(const ParamLayout& layout) {
  json slots = json::array();
  for (const auto& s : layout.slots())
    slots.push_back({{"name", s.name}, {"offset", s.offset}, {"rows", s.rows}, {"cols", s.cols}});
  return slots;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xF];
  return s;
}

/// Writes `<stem>.json` and `<stem>.bin`. `manifest` carries the model-specific fields.
inline void save_checkpoint(const std::filesystem::path& stem, json manifest, const Vec<float>& params,
                            const ParamLayout& layout) {
  if (params.size() != layout.size()) throw InvalidInput("save_checkpoint: parameter count does not match layout");
  const std::string blob = encode_f32_le(params);
  const auto bin_path = std::filesystem::path(stem.string() + ".bin");
  manifest["params"] = {{"file", bin_path.filename().string()},
                        {"dtype", "float32_le"},
                        {"count", params.size()},
                        {"fnv1a", hex64(fnv1a(blob))},
                        {"layout", layout_json(layout)}};
  {
    std::ofstream os(bin_path, std::ios::binary);
    if (!os) throw Error("cannot open " + bin_path.string() + " for writing");
    os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!os) throw Error("write failed: " + bin_path.string());
  }
  std::ofstream os(stem.string() + ".json");
  if (!os) throw Error("cannot open " + stem.string() + ".json for writing");
  os << manifest.dump(2) << '\n';
}

struct LoadedCheckpoint {
  json manifest;
  Vec<float> params;
};

/// Reads a checkpoint given its manifest path (or stem). Verifies count and hash.
inline LoadedCheckpoint load_checkpoint(std::filesystem::path manifest_path) {
  if (manifest_path.extension() != ".json") manifest_path += ".json";
  std::ifstream is(manifest_path);
  if (!is) throw DependencyError("missing checkpoint " + manifest_path.string());
  LoadedCheckpoint out;
  try {
    out.manifest = json::parse(is);
  } catch (const json::exception& e) {
    throw SchemaError(manifest_path.string() + ": " + e.what());
  }
  if (!out.manifest.contains("params") || !out.manifest["params"].is_object())
    throw SchemaError(manifest_path.string() + ": missing params block");
  const auto& p = out.manifest["params"];
  const auto bin_path = manifest_path.parent_path() / p.value("file", std::string());
  std::ifstream bs(bin_path, std::ios::binary);
  if (!bs) throw DependencyError("missing parameter blob " + bin_path.string());
  const std::string blob((std::istreambuf_iterator<char>(bs)), std::istreambuf_iterator<char>());
  if (p.value("fnv1a", std::string()) != hex64(fnv1a(blob)))
    throw SchemaError(bin_path.string() + ": hash does not match manifest");
  out.params = decode_f32_le(blob);
  if (out.params.size() != p.value("count", Eigen::Index{-1}))
    throw SchemaError(bin_path.string() + ": parameter count does not match manifest");
  return out;
}

}  // namespace skybeam::nn
