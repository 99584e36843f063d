// SPDX-License-Identifier: Apache-2.0
#pragma once

// Named-tensor archive: 8-byte magic, a JSON manifest (name/shape/dtype/offset
// per tensor plus a string metadata block), then raw little-endian payload.
// Checkpoints, backbone weight files and the optimizer state all use it.

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cigan/tensor.hpp"

namespace cigan::io {

inline constexpr char kArchiveMagic[8] = {'C', 'I', 'G', 'A', 'N', 'A', 'R', '1'};

template <typename T>
const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) return "f32";
  else if constexpr (std::is_same_v<T, double>) return "f64";
  else return "unknown";
}

static_assert(std::endian::native == std::endian::little,
              "archive payload is little-endian; byte-swapped platforms need a swap pass");

template <typename T>
void save_archive(const std::string& path,
                  const std::vector<std::pair<std::string, const Tensor<T>*>>& tensors,
                  const std::map<std::string, std::string>& meta) {
  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["byte_order"] = "little";
  manifest["meta"] = meta;
  uint64_t offset = 0;
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [name, t] : tensors) {
    uint64_t nbytes = t->numel() * sizeof(T);
    list.push_back({{"name", name},
                    {"shape", {t->n(), t->c(), t->h(), t->w()}},
                    {"dtype", dtype_name<T>()},
                    {"offset", offset},
                    {"bytes", nbytes}});
    offset += nbytes;
  }
  manifest["tensors"] = std::move(list);
  std::string js = manifest.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error(path + ": cannot open for writing");
  f.write(kArchiveMagic, 8);
  uint64_t len = js.size();
  f.write(reinterpret_cast<const char*>(&len), 8);
  f.write(js.data(), static_cast<std::streamsize>(js.size()));
  for (const auto& [name, t] : tensors)
    f.write(reinterpret_cast<const char*>(t->data()),
            static_cast<std::streamsize>(t->numel() * sizeof(T)));
  if (!f) throw std::runtime_error(path + ": write failed");
}

template <typename T>
std::map<std::string, Tensor<T>> load_archive(const std::string& path,
                                              std::map<std::string, std::string>* meta_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(path + ": cannot open");
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kArchiveMagic, 8) != 0)
    throw std::runtime_error(path + ": not a cigan archive");
  uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 8);
  std::string js(len, '\0');
  f.read(js.data(), static_cast<std::streamsize>(len));
  if (!f) throw std::runtime_error(path + ": truncated manifest");
  nlohmann::json manifest = nlohmann::json::parse(js, nullptr, /*allow_exceptions=*/false);
  if (manifest.is_discarded()) throw std::runtime_error(path + ": corrupt manifest");

  if (meta_out && manifest.contains("meta"))
    for (const auto& [k, v] : manifest["meta"].items()) (*meta_out)[k] = std::string(v);

  std::map<std::string, Tensor<T>> out;
  uint64_t payload_start = 16 + len;
  for (const auto& e : manifest["tensors"]) {
    std::string name = e["name"];
    std::string dtype = e["dtype"];
    if (dtype != dtype_name<T>())
      throw std::runtime_error(path + ": tensor " + name + " has dtype " + dtype + ", expected " +
                               dtype_name<T>());
    const auto& shape = e["shape"];
    Tensor<T> t(static_cast<int>(shape[0]), static_cast<int>(shape[1]),
                static_cast<int>(shape[2]), static_cast<int>(shape[3]));
    uint64_t offset = e["offset"];
    f.seekg(static_cast<std::streamoff>(payload_start + offset));
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(T)));
    if (!f) throw std::runtime_error(path + ": truncated payload");
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace cigan::io
