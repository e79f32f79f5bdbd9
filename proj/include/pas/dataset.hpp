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

#ifndef PAS_DATASET_HPP
#define PAS_DATASET_HPP

// IDX image/label ingestion (plain or gzip-compressed) and seeded splits.

#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "pas/checkpoint.hpp"
#include "pas/common.hpp"
#include "pas/tensor.hpp"

namespace pas {

struct Dataset {
  Tensor<float> images;  // (N, C, H, W), values in [0, 1]
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }

  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset d;
    const std::size_t stride = size() ? images.size() / size() : 0;
    Shape s = images.shape();
    s[0] = indices.size();
    std::vector<float> data;
    data.reserve(indices.size() * stride);
    for (auto i : indices) {
      if (i >= size()) throw InvalidArgument("subset index out of range");
      data.insert(data.end(), images.storage().begin() + static_cast<std::ptrdiff_t>(i * stride),
                  images.storage().begin() + static_cast<std::ptrdiff_t>((i + 1) * stride));
      d.labels.push_back(labels[i]);
    }
    d.images = Tensor<float>(std::move(s), std::move(data));
    return d;
  }

  Dataset head(std::size_t n) const {
    std::vector<std::size_t> idx(std::min(n, size()));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return subset(idx);
  }
};

struct SplitDataset {
  Dataset train;
  Dataset validation;
  Dataset test;
};

namespace detail {

inline std::vector<unsigned char> read_maybe_gzip(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw ConfigError("cannot open " + path.string());
  std::vector<unsigned char> out;
  unsigned char buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof(buf))) > 0) out.insert(out.end(), buf, buf + n);
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw FormatError("cannot decompress " + path.string());
  return out;
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& file) {
  if (off + 4 > b.size()) throw FormatError(file + ": truncated IDX header", static_cast<std::int64_t>(b.size()));
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Reads one IDX image file and its label file; pixels scaled to [0,1].
inline Dataset read_idx_pair(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto img = detail::read_maybe_gzip(images_path);
  const auto lab = detail::read_maybe_gzip(labels_path);
  const std::string in = images_path.filename().string(), ln = labels_path.filename().string();
  if (detail::read_be32(img, 0, in) != kIdxImageMagic) throw FormatError(in + ": bad IDX image magic", 0);
  if (detail::read_be32(lab, 0, ln) != kIdxLabelMagic) throw FormatError(ln + ": bad IDX label magic", 0);
  const std::size_t n = detail::read_be32(img, 4, in), rows = detail::read_be32(img, 8, in),
                    cols = detail::read_be32(img, 12, in);
  const std::size_t nl = detail::read_be32(lab, 4, ln);
  if (n != nl)
    throw FormatError("image count " + std::to_string(n) + " does not match label count " + std::to_string(nl), 4);
  if (img.size() != 16 + n * rows * cols) throw FormatError(in + ": payload size mismatch", static_cast<std::int64_t>(img.size()));
  if (lab.size() != 8 + n) throw FormatError(ln + ": payload size mismatch", static_cast<std::int64_t>(lab.size()));
  Dataset d;
  std::vector<float> px(n * rows * cols);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(img[16 + i]) / 255.0f;
  d.images = Tensor<float>({n, 1, rows, cols}, std::move(px));
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.labels[i] = lab[8 + i];
  return d;
}

/// Every `*images-idx3-ubyte[.gz]` file in `dir` paired with its `*labels-idx1-ubyte[.gz]`
/// sibling, concatenated in filename order.
inline Dataset read_idx_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("dataset directory " + dir.string() + " not found");
  std::vector<std::filesystem::path> images;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.find("images-idx3-ubyte") != std::string::npos) images.push_back(e.path());
  }
  std::sort(images.begin(), images.end());
  if (images.empty()) throw ConfigError("no *images-idx3-ubyte files in " + dir.string());
  std::vector<Tensor<float>> parts;
  Dataset all;
  for (const auto& ip : images) {
    std::string ln = ip.filename().string();
    ln.replace(ln.find("images-idx3"), 11, "labels-idx1");
    Dataset d = read_idx_pair(ip, ip.parent_path() / ln);
    parts.push_back(std::move(d.images));
    all.labels.insert(all.labels.end(), d.labels.begin(), d.labels.end());
  }
  all.images = concat_rows<float>(parts);
  return all;
}

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

/// Seeded shuffle, then contiguous train / validation / test blocks.
inline SplitDataset split_dataset(const Dataset& d, std::uint64_t seed, SplitFractions f = {}) {
  if (f.train < 0 || f.validation < 0 || f.test < 0 || f.train + f.validation + f.test > 1.0 + 1e-9)
    throw ConfigError("split fractions must be non-negative and sum to at most 1");
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n = static_cast<double>(d.size());
  const auto n_train = static_cast<std::size_t>(std::llround(n * f.train));
  const auto n_val = static_cast<std::size_t>(std::llround(n * f.validation));
  const auto n_test = std::min(d.size() - n_train - n_val, static_cast<std::size_t>(std::llround(n * f.test)));
  std::span<const std::size_t> s(idx);
  return SplitDataset{d.subset(s.subspan(0, n_train)), d.subset(s.subspan(n_train, n_val)),
                      d.subset(s.subspan(n_train + n_val, n_test))};
}

inline Tensor<float> labels_tensor(const std::vector<int>& labels) {
  std::vector<float> v(labels.begin(), labels.end());
  return Tensor<float>({labels.size()}, std::move(v));
}

inline std::vector<int> labels_from_tensor(const Tensor<float>& t) {
  std::vector<int> out;
  out.reserve(t.size());
  for (float v : t.values()) out.push_back(static_cast<int>(v));
  return out;
}

inline Container split_container(const SplitDataset& s, std::uint64_t seed) {
  Container c;
  c.header = {{"kind", "dataset"}, {"split_seed", seed}};
  for (const auto& [name, part] : {std::pair{"train", &s.train}, std::pair{"validation", &s.validation},
                                   std::pair{"test", &s.test}}) {
    c.tensors.emplace_back(std::string(name) + ".x", part->images);
    c.tensors.emplace_back(std::string(name) + ".y", labels_tensor(part->labels));
  }
  return c;
}

inline SplitDataset split_from_container(const Container& c) {
  if (c.header.value("kind", "") != "dataset") throw FormatError("container is not a dataset");
  SplitDataset s;
  for (const auto& [name, part] : {std::pair{"train", &s.train}, std::pair{"validation", &s.validation},
                                   std::pair{"test", &s.test}}) {
    part->images = c.tensor(std::string(name) + ".x");
    part->labels = labels_from_tensor(c.tensor(std::string(name) + ".y"));
  }
  return s;
}

}  // namespace pas

#endif  // PAS_DATASET_HPP
