// Copyright 2026 The PAS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PAS_CHECKPOINT_HPP
#define PAS_CHECKPOINT_HPP

// Binary container shared by model checkpoints, datasets and adversarial batches:
//
//   "PASC" | u32 LE version (1) | u32 LE header length | UTF-8 JSON header | blobs
//
// The header's "tensors" array lists {name, shape, offset}; offsets are relative
// to the first blob byte and blobs are little-endian float32 in manifest order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pas/common.hpp"
#include "pas/model.hpp"
#include "pas/tensor.hpp"

namespace pas {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

inline constexpr char kContainerMagic[4] = {'P', 'A', 'S', 'C'};
inline constexpr std::uint32_t kContainerVersion = 1;

struct Container {
  nlohmann::json header;  // without the "tensors" manifest
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>& tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw FormatError("container has no tensor '" + name + "'");
  }
};

inline std::string encode_container(const Container& c) {
  nlohmann::json header = c.header;
  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : c.tensors) {
    manifest.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size() * sizeof(float);
  }
  header["tensors"] = manifest;
  const std::string text = header.dump();
  std::string out;
  out.reserve(12 + text.size() + offset);
  out.append(kContainerMagic, 4);
  auto put_u32 = [&](std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
  };
  put_u32(kContainerVersion);
  put_u32(static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const auto& [name, t] : c.tensors)
    out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(float));
  return out;
}

inline Container decode_container(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kContainerMagic, 4) != 0) throw FormatError("bad magic, expected PASC", 0);
  if (bytes.size() < 12) throw FormatError("truncated container header", static_cast<std::int64_t>(bytes.size()));
  std::uint32_t version = 0, header_len = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&header_len, bytes.data() + 8, 4);
  if (version != kContainerVersion) throw FormatError("unsupported container version " + std::to_string(version), 4);
  if (bytes.size() < 12ull + header_len) throw FormatError("truncated JSON header", static_cast<std::int64_t>(bytes.size()));
  Container c;
  try {
    c.header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed JSON header: ") + e.what(), 12);
  }
  const std::size_t blob_start = 12ull + header_len;
  if (!c.header.contains("tensors") || !c.header["tensors"].is_array()) throw FormatError("header lacks tensor manifest", 12);
  for (const auto& entry : c.header["tensors"]) {
    std::string name;
    Shape shape;
    std::uint64_t offset = 0;
    try {
      entry.at("name").get_to(name);
      entry.at("shape").get_to(shape);
      entry.at("offset").get_to(offset);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed manifest entry: ") + e.what(), 12);
    }
    const std::size_t n = shape_numel(shape);
    const std::size_t begin = blob_start + offset;
    if (begin + n * sizeof(float) > bytes.size())
      throw FormatError("truncated blob for tensor '" + name + "'", static_cast<std::int64_t>(bytes.size()));
    std::vector<float> data(n);
    std::memcpy(data.data(), bytes.data() + begin, n * sizeof(float));
    c.tensors.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
  }
  c.header.erase("tensors");
  return c;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("write failed for " + path.string());
}

inline Container read_container(const std::filesystem::path& path) { return decode_container(read_file_bytes(path)); }
inline void write_container(const std::filesystem::path& path, const Container& c) {
  write_file_bytes(path, encode_container(c));
}

template <Scalar T>
Container model_container(const Model<T>& m) {
  Container c;
  c.header = {{"kind", "model"}, {"architecture", m.spec()}};
  for (const auto& p : m.params()) c.tensors.emplace_back(p.name, p.value.template cast<float>());
  return c;
}

template <Scalar T>
void save_checkpoint(const Model<T>& m, const std::filesystem::path& path) {
  write_container(path, model_container(m));
}

inline Model<float> model_from_container(const Container& c) {
  if (c.header.value("kind", "") != "model") throw FormatError("container is not a model checkpoint");
  ArchitectureSpec spec;
  try {
    spec = c.header.at("architecture").get<ArchitectureSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed architecture header: ") + e.what());
  }
  Model<float> m = Model<float>::skeleton(spec);
  if (c.tensors.size() != m.params().size()) throw FormatError("checkpoint tensor count does not match architecture");
  for (std::size_t i = 0; i < c.tensors.size(); ++i) {
    auto& p = m.params()[i];
    if (c.tensors[i].first != p.name || c.tensors[i].second.shape() != p.value.shape())
      throw FormatError("checkpoint tensor '" + c.tensors[i].first + "' does not match architecture slot '" + p.name + "'");
    p.value = c.tensors[i].second;
  }
  return m;
}

/// Loads a checkpoint; when `expected` is given the stored architecture must equal it.
inline Model<float> load_checkpoint(const std::filesystem::path& path, const ArchitectureSpec* expected = nullptr) {
  Model<float> m = model_from_container(read_container(path));
  if (expected && !(m.spec() == *expected))
    throw ConfigError("architecture mismatch: checkpoint " + path.string() + " holds '" + m.spec().name +
                      "', expected '" + expected->name + "'");
  return m;
}

}  // namespace pas

#endif  // PAS_CHECKPOINT_HPP
