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

#include <gtest/gtest.h>
#include <unistd.h>
#include <zlib.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "pas/dataset.hpp"

namespace pas {
namespace {

namespace fs = std::filesystem;

std::string be32(std::uint32_t v) {
  return {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8), static_cast<char>(v)};
}

void write_plain(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

void write_gz(const fs::path& p, const std::string& bytes) {
  gzFile f = gzopen(p.string().c_str(), "wb");
  ASSERT_NE(f, nullptr);
  gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
  gzclose(f);
}

std::string idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols, unsigned char base) {
  std::string s = be32(0x803) + be32(n) + be32(rows) + be32(cols);
  for (std::uint32_t i = 0; i < n * rows * cols; ++i) s.push_back(static_cast<char>(base + i));
  return s;
}

std::string idx_labels(std::uint32_t n, unsigned char base) {
  std::string s = be32(0x801) + be32(n);
  for (std::uint32_t i = 0; i < n; ++i) s.push_back(static_cast<char>((base + i) % 10));
  return s;
}

class IdxTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("pas_idx_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  fs::path dir;
};

TEST_F(IdxTest, ReadsPlainAndGzipAndScalesPixels) {
  write_plain(dir / "a-images-idx3-ubyte", idx_images(3, 2, 2, 0));
  write_plain(dir / "a-labels-idx1-ubyte", idx_labels(3, 4));
  auto d = read_idx_pair(dir / "a-images-idx3-ubyte", dir / "a-labels-idx1-ubyte");
  EXPECT_EQ(d.images.shape(), (Shape{3, 1, 2, 2}));
  EXPECT_EQ(d.labels, (std::vector<int>{4, 5, 6}));
  EXPECT_FLOAT_EQ(d.images[5], 5.0f / 255.0f);

  write_gz(dir / "b-images-idx3-ubyte.gz", idx_images(2, 2, 2, 100));
  write_gz(dir / "b-labels-idx1-ubyte.gz", idx_labels(2, 9));
  auto all = read_idx_dir(dir);
  EXPECT_EQ(all.size(), 5u);
  EXPECT_EQ(all.labels, (std::vector<int>{4, 5, 6, 9, 0}));
  EXPECT_FLOAT_EQ(all.images[12], 100.0f / 255.0f);
}

TEST_F(IdxTest, CountMismatchAndBadMagicRejected) {
  write_plain(dir / "x-images-idx3-ubyte", idx_images(3, 2, 2, 0));
  write_plain(dir / "x-labels-idx1-ubyte", idx_labels(2, 0));
  EXPECT_THROW(read_idx_pair(dir / "x-images-idx3-ubyte", dir / "x-labels-idx1-ubyte"), FormatError);

  std::string bad = idx_images(1, 2, 2, 0);
  bad[3] = 0x01;
  write_plain(dir / "y-images-idx3-ubyte", bad);
  write_plain(dir / "y-labels-idx1-ubyte", idx_labels(1, 0));
  try {
    read_idx_pair(dir / "y-images-idx3-ubyte", dir / "y-labels-idx1-ubyte");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0);
  }
  write_plain(dir / "z-images-idx3-ubyte", idx_images(2, 2, 2, 0).substr(0, 20));
  write_plain(dir / "z-labels-idx1-ubyte", idx_labels(2, 0));
  EXPECT_THROW(read_idx_pair(dir / "z-images-idx3-ubyte", dir / "z-labels-idx1-ubyte"), FormatError);
  EXPECT_THROW(read_idx_dir(dir / "missing"), ConfigError);
}

Dataset counting_set(std::size_t n) {
  Dataset d;
  d.images = Tensor<float>({n, 1, 1, 1});
  for (std::size_t i = 0; i < n; ++i) {
    d.images[i] = static_cast<float>(i);
    d.labels.push_back(static_cast<int>(i % 10));
  }
  return d;
}

TEST(Split, DeterministicDisjointAndSized) {
  const auto d = counting_set(100);
  auto a = split_dataset(d, 7), b = split_dataset(d, 7), c = split_dataset(d, 8);
  EXPECT_EQ(a.train.images, b.train.images);
  EXPECT_NE(a.train.images, c.train.images);
  EXPECT_EQ(a.train.size(), 80u);
  EXPECT_EQ(a.validation.size(), 10u);
  EXPECT_EQ(a.test.size(), 10u);
  std::set<float> seen;
  for (const auto* part : {&a.train, &a.validation, &a.test})
    for (std::size_t i = 0; i < part->size(); ++i) {
      EXPECT_TRUE(seen.insert(part->images[i]).second);
      EXPECT_EQ(part->labels[i], static_cast<int>(part->images[i]) % 10);  // pairs stay aligned
    }
  EXPECT_THROW(split_dataset(d, 1, SplitFractions{0.9, 0.2, 0.0}), ConfigError);
}

TEST(Split, ContainerRoundTrip) {
  auto s = split_dataset(counting_set(30), 3);
  auto back = split_from_container(decode_container(encode_container(split_container(s, 3))));
  EXPECT_EQ(back.train.images, s.train.images);
  EXPECT_EQ(back.test.labels, s.test.labels);
  EXPECT_EQ(back.validation.labels, s.validation.labels);
}

TEST(Dataset, SubsetRejectsOutOfRange) {
  const auto d = counting_set(4);
  std::vector<std::size_t> idx{1, 4};
  EXPECT_THROW(d.subset(idx), InvalidArgument);
  EXPECT_EQ(d.head(2).labels, (std::vector<int>{0, 1}));
}

TEST(Dataset, BundledDigitsLoad) {
  const auto d = read_idx_dir(PAS_DATA_DIR);
  EXPECT_EQ(d.size(), 10000u);
  EXPECT_EQ(d.images.shape(), (Shape{10000, 1, 28, 28}));
  std::vector<int> counts(10);
  for (int y : d.labels) ++counts.at(static_cast<std::size_t>(y));
  for (int c : counts) EXPECT_GT(c, 800);
}

}  // namespace
}  // namespace pas
