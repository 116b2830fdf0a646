#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "pipmn/model.hpp"

// Checkpoint format ("PIPC"):
//   magic "PIPC" | u32 version=1 | u32 header length | header JSON |
//   concatenated little-endian f32 parameter blobs.
// The header carries the config (with frontend/task/vocabulary), the feature
// standardization vectors, and a parameter directory of (name, shape, byte
// offset into the blob section). Round-trips are bit-exact for f32 models.
namespace pipmn {

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f32_le(std::string& out, float f) {
  put_u32_le(out, std::bit_cast<std::uint32_t>(f));
}

inline float get_f32_le(const unsigned char* p) {
  return std::bit_cast<float>(get_u32_le(p));
}

}  // namespace detail

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const PipmnModel<T>& model, const std::string& path) {
  const auto params = model.parameters();
  nlohmann::json dir = nlohmann::json::array();
  std::string blob;
  for (const Parameter<T>* p : params) {
    dir.push_back({{"name", p->name},
                   {"shape", p->value.shape()},
                   {"offset", static_cast<std::uint64_t>(blob.size())}});
    for (long i = 0; i < p->value.size(); ++i)
      detail::put_f32_le(blob, static_cast<float>(p->value.data()[i]));
  }
  nlohmann::json config = model.config().to_json();
  config["frontend"] = model.frontend;
  config["task"] = model.task;
  config["vocabulary"] = model.vocabulary;
  std::vector<double> mean(model.feature_mean().begin(), model.feature_mean().end());
  std::vector<double> stddev(model.feature_std().begin(), model.feature_std().end());
  nlohmann::json header{{"config", config},
                        {"feature_mean", mean},
                        {"feature_std", stddev},
                        {"params", dir}};
  const std::string header_str = header.dump();

  std::string out = "PIPC";
  detail::put_u32_le(out, kCheckpointVersion);
  detail::put_u32_le(out, static_cast<std::uint32_t>(header_str.size()));
  out += header_str;
  out += blob;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing checkpoint: " + path);
}

template <typename T>
PipmnModel<T> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(p, "PIPC", 4) != 0)
    throw ParseError("checkpoint magic mismatch (expected PIPC): " + path);
  const std::uint32_t version = detail::get_u32_le(p + 4);
  if (version != kCheckpointVersion)
    throw ParseError("checkpoint version mismatch: got " + std::to_string(version));
  const std::uint32_t header_len = detail::get_u32_le(p + 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(header_len))
    throw ParseError("truncated checkpoint header: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(12, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  const nlohmann::json& config = header.at("config");
  PipmnModel<T> model(PipConfig::from_json(config), 0);
  model.frontend = config.value("frontend", std::string("stack5"));
  model.task = config.value("task", std::string("multiclass"));
  model.vocabulary = config.value("vocabulary", std::vector<std::string>{});

  const std::size_t blob_start = 12 + header_len;
  std::unordered_map<std::string, Parameter<T>*> by_name;
  for (Parameter<T>* q : model.parameters()) by_name[q->name] = q;
  std::size_t loaded = 0;
  for (const auto& entry : header.at("params")) {
    const std::string name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<int>>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw ParseError("checkpoint parameter '" + name + "' does not exist in this config");
    Parameter<T>& param = *it->second;
    if (param.value.shape() != shape)
      throw ParseError("checkpoint shape disagreement for '" + name + "': header " +
                       shape_str(shape) + " vs model " + shape_str(param.value.shape()));
    const std::size_t need = blob_start + offset + 4ul * static_cast<std::size_t>(param.value.size());
    if (need > bytes.size()) throw ParseError("truncated checkpoint blob: " + path);
    const unsigned char* src = p + blob_start + offset;
    for (long i = 0; i < param.value.size(); ++i)
      param.value.data()[i] = static_cast<T>(detail::get_f32_le(src + 4l * i));
    ++loaded;
  }
  if (loaded != by_name.size())
    throw ParseError("checkpoint is missing parameters: has " + std::to_string(loaded) +
                     " of " + std::to_string(by_name.size()));

  const auto mean = header.at("feature_mean").get<std::vector<double>>();
  const auto stddev = header.at("feature_std").get<std::vector<double>>();
  model.set_feature_stats(std::vector<T>(mean.begin(), mean.end()),
                          std::vector<T>(stddev.begin(), stddev.end()));
  return model;
}

}  // namespace pipmn
