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

#include <filesystem>
#include <random>
#include <sstream>

#include "pas/eval.hpp"
#include "reference.hpp"

namespace pas {
namespace {

namespace fs = std::filesystem;

ArchitectureSpec spec_of(const std::string& name, std::size_t side = 8) {
  ArchitectureSpec s;
  s.name = name;
  s.height = s.width = side;
  s.widths = {3, 4};
  s.residual_blocks = name == "mini-resnet" ? 1 : 0;
  return s;
}

// Positive kernels on positive inputs keep every ReLU active, so each logit is a
// linear function of the image (no conv bias): IG must equal x * grad exactly.
TEST(IntegratedGradients, LinearModelClosedForm) {
  ArchitectureSpec s = spec_of("plain-cnn", 6);
  auto m = build_model<double>(s, 1);
  std::mt19937_64 rng(2);
  for (std::size_t i = 0; i < m.params().size(); ++i)
    if (i != m.head_weight() && i != m.head_bias())
      for (auto& v : m.params()[i].value.values()) v = 0.05 + std::uniform_real_distribution<double>(0, 0.5)(rng);
  auto x = random_uniform<double>(s.input_shape(1), 0.1, 1.0, rng);
  const auto id = identity_path_config(m.sites());
  const auto w = logit_gradient(m, id, x, 3);
  for (std::size_t steps : {1u, 7u, 64u}) {
    auto ig = integrated_gradients(m, id, x, 3, {steps});
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(ig[i], w[i] * x[i], 1e-12 * std::max(1.0, std::abs(w[i])));
  }
}

TEST(IntegratedGradients, BaselineInputGivesZero) {
  auto m = build_model<float>(spec_of("mini-resnet"), 3);
  auto ig = integrated_gradients(m, identity_path_config(m.sites()), Tensor<float>(spec_of("mini-resnet").input_shape(1)), 0);
  for (float v : ig.values()) EXPECT_EQ(v, 0.0f);
}

TEST(IntegratedGradients, CompletenessAtTwoHundredFiftySixSteps) {
  for (const auto& name : {"plain-cnn", "mini-resnet"}) {
    auto m = build_model<double>(spec_of(name), 4);
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 3; ++trial) {
      auto x = random_uniform<double>(spec_of(name).input_shape(1), 0.0, 1.0, rng);
      const std::size_t target = static_cast<std::size_t>(trial);
      auto ig = integrated_gradients(m, identity_path_config(m.sites()), x, target, {256});
      double sum = 0;
      for (double v : ig.values()) sum += v;
      const double fx = forward(m, x).logits[target];
      const double f0 = forward(m, Tensor<double>(x.shape())).logits[target];
      EXPECT_LE(std::abs(sum - (fx - f0)), 0.01 * std::abs(fx - f0) + 1e-3) << name;
    }
  }
}

TEST(IntegratedGradients, IdentityPathMatchesPlainBackprop) {
  auto m = build_model<float>(spec_of("mini-resnet"), 6);
  std::mt19937_64 rng(7);
  auto x = random_uniform<float>(spec_of("mini-resnet").input_shape(1), 0.0f, 1.0f, rng);
  const std::size_t steps = 16, target = 2;
  Tensor<float> onehot({1, 10});
  onehot[target] = 1;
  Tensor<float> expected(x.shape());
  for (std::size_t k = 1; k <= steps; ++k)
    axpy(expected, reference::input_gradient_naive(m, scaled(x, static_cast<float>(k) / steps), onehot));
  for (std::size_t i = 0; i < x.size(); ++i) expected[i] *= x[i] / steps;
  auto ig = integrated_gradients(m, identity_path_config(m.sites()), x, target, {steps});
  EXPECT_LE(max_abs_diff(ig, expected), 1e-4 * std::max(1.0, static_cast<double>(l2_norm(expected))));
}

TEST(IntegratedGradients, RejectsBadArguments) {
  auto m = build_model<float>(spec_of("plain-cnn"), 1);
  const auto id = identity_path_config(m.sites());
  EXPECT_THROW(integrated_gradients(m, id, Tensor<float>({2, 1, 8, 8}), 0), InvalidArgument);
  EXPECT_THROW(integrated_gradients(m, id, Tensor<float>({1, 1, 8, 8}), 10), InvalidArgument);
  EXPECT_THROW(integrated_gradients(m, id, Tensor<float>({1, 1, 8, 8}), 0, {0}), InvalidArgument);
}

TEST(GammaDepth, IdentityRowsAndOrdering) {
  auto m = build_model<float>(spec_of("mini-resnet"), 1);
  auto rows = gamma_depth_report(m, identity_path_config(m.sites()));
  ASSERT_EQ(rows.size(), m.sites().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].gamma, rows[i].kind == SiteKind::activation ? 0.0 : 1.0);
    if (i) EXPECT_GT(rows[i].depth_fraction, rows[i - 1].depth_fraction);
  }
  std::ostringstream os;
  write_gamma_depth_csv(os, rows);
  const std::string csv = os.str();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "site_id,depth_fraction,kind,layer_name,gamma");
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), rows.size() + 1);
}

TEST(Heatmap, HeaderNormalizationAndZero) {
  Tensor<float> a({1, 2, 2, 3}, std::vector<float>{0, 1, -2, 0, 0, 0, 0, 1, 2, 0, 0, 1});
  auto h = make_heatmap(a);
  EXPECT_EQ(h.width, 3u);
  EXPECT_EQ(h.height, 2u);
  EXPECT_EQ(h.raw, (std::vector<double>{0, 2, 4, 0, 0, 1}));
  EXPECT_EQ(*std::max_element(h.pixels.begin(), h.pixels.end()), 255);
  EXPECT_EQ(h.pixels[0], 0);
  EXPECT_EQ(h.pixels[1], 128);
  const std::string pgm = encode_pgm(h);
  EXPECT_EQ(pgm.substr(0, 11), "P5\n3 2\n255\n");
  EXPECT_EQ(pgm.size(), 11u + 6u);

  auto z = make_heatmap(Tensor<float>({1, 4, 5}));
  for (auto p : z.pixels) EXPECT_EQ(p, 0);
}

TEST(Heatmap, ExportWritesPgmAndCsv) {
  const auto dir = fs::temp_directory_path() / ("pas_heat_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  Tensor<float> a({1, 1, 2, 2}, std::vector<float>{0.5f, -1, 0, 2});
  export_heatmap(a, dir / "map.pgm");
  EXPECT_EQ(read_file_bytes(dir / "map.pgm").substr(0, 11), "P5\n2 2\n255\n");
  EXPECT_EQ(read_file_bytes(dir / "map.csv"), "0.5,1\n0,2\n");
  fs::remove_all(dir);
}

class TransferTest : public ::testing::Test {
 protected:
  Model<float> surrogate = build_model<float>(spec_of("plain-cnn"), 11);
  Model<float> victim_a = build_model<float>(spec_of("mini-resnet"), 12);
  Model<float> victim_b = build_model<float>(spec_of("plain-cnn"), 13);
  Dataset data = [] {
    std::mt19937_64 rng(14);
    Dataset d;
    d.images = random_uniform<float>({24, 1, 8, 8}, 0.0f, 1.0f, rng);
    for (int i = 0; i < 24; ++i) d.labels.push_back((i * 7) % 10);
    return d;
  }();
  std::vector<Victim<float>> victims{{"a", &victim_a}, {"b", &victim_b}};

  TransferRow<float> row(double eps) const {
    AttackConfig cfg;
    cfg.epsilon = eps;
    cfg.steps = 3;
    cfg.step_size = eps > 0 ? eps / 2 : 0.01;
    return {"row", &surrogate, identity_path_config(surrogate.sites()), cfg};
  }
};

TEST_F(TransferTest, ZeroEpsilonRowIsCleanErrorRate) {
  std::vector<TransferRow<float>> rows{row(0.0)};
  auto tm = transfer_matrix<float>(rows, victims, data);
  for (std::size_t c = 0; c < victims.size(); ++c) {
    const auto pred = predict(*victims[c].model, data.images);
    double wrong = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) wrong += pred[i] != data.labels[i];
    EXPECT_EQ(tm.at(0, c), wrong / 24.0);
  }
}

TEST_F(TransferTest, PersistedBatchesReproduceCellsAndRunsAreDeterministic) {
  std::vector<TransferRow<float>> rows{row(0.1), row(0.3)};
  std::vector<AdversarialBatch<float>> batches;
  auto tm = transfer_matrix<float>(rows, victims, data, {}, &batches);
  ASSERT_EQ(batches.size(), 2u);
  for (std::size_t r = 0; r < 2; ++r) {
    auto bytes = encode_container(batch_container(batches[r], rows[r].attack, "h"));
    auto back = batch_from_container(decode_container(bytes));
    auto cells = score_batch<float>(back, victims);
    EXPECT_EQ(cells, tm.cells[r]);
    for (double v : cells) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_EQ(transfer_matrix<float>(rows, victims, data).cells, tm.cells);
  std::ostringstream os;
  write_transfer_csv(os, tm);
  EXPECT_EQ(os.str().substr(0, 8), "row,a,b\n");
}

TEST_F(TransferTest, VictimShapeMismatchRejected) {
  auto big = build_model<float>(spec_of("plain-cnn", 10), 1);
  std::vector<Victim<float>> bad{{"big", &big}};
  std::vector<TransferRow<float>> rows{row(0.1)};
  EXPECT_THROW(transfer_matrix<float>(rows, bad, data), ConfigError);
}

}  // namespace
}  // namespace pas
