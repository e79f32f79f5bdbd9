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

#include <random>

#include "pas/attacks.hpp"
#include "pas/dataset.hpp"

namespace pas {
namespace {

ArchitectureSpec small_spec(const std::string& name = "plain-cnn") {
  ArchitectureSpec s;
  s.name = name;
  s.height = s.width = 10;
  s.widths = {4, 6};
  s.residual_blocks = name == "mini-resnet" ? 1 : 0;
  return s;
}

std::vector<int> cycle_labels(std::size_t n) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % 10);
  return y;
}

TEST(ProjectLinf, ClampsToBallAndPixelRange) {
  Tensor<float> x({1}, 0.5f), adv({1}, 0.9f);
  EXPECT_FLOAT_EQ(project_linf(adv, x, 0.1)[0], 0.6f);
  EXPECT_EQ(project_linf(adv, x, 0.0), x);

  std::mt19937_64 rng(1);
  auto xs = random_uniform<float>({4, 1, 6, 6}, 0.0f, 1.0f, rng);
  auto wild = random_uniform<float>({4, 1, 6, 6}, -1.0f, 2.0f, rng);
  auto p = project_linf(wild, xs, 0.1);
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_LE(std::abs(p[i] - xs[i]), 0.1f + 1e-6f);
    EXPECT_GE(p[i], 0.0f);
    EXPECT_LE(p[i], 1.0f);
  }
}

TEST(Fgsm, ZeroEpsilonIsIdentityAndLabelsChecked) {
  auto m = build_model<float>(small_spec(), 1);
  std::mt19937_64 rng(2);
  auto x = random_uniform<float>(small_spec().input_shape(3), 0.0f, 1.0f, rng);
  std::vector<int> y{1, 2, 3};
  const auto id = identity_path_config(m.sites());
  EXPECT_EQ(fgsm_step(m, id, x, y, 0.0), x);
  std::vector<int> bad{1, 2, 10};
  EXPECT_THROW(fgsm_step(m, id, x, bad, 0.1), InvalidArgument);
  EXPECT_THROW(fgsm_step(m, id, x, bad, 0.0), InvalidArgument);
}

// With positive kernels and positive inputs every ReLU is active, so the network is
// linear: a scalar feature f(x) with df/dx > 0 everywhere, and two logits w_k * f.
// Cross-entropy for label y gives dL/dx = (p_y - 1)(w_y - w_other) df/dx, so the
// perturbation sign is -sign(w_y - w_other) at every pixel.
TEST(Fgsm, LinearRegimeSignPatternIsAnalytic) {
  ArchitectureSpec s;
  s.height = s.width = 6;
  s.classes = 2;
  s.widths = {1};
  auto m = build_model<double>(s, 3);
  std::mt19937_64 rng(4);
  for (std::size_t i = 0; i < 2; ++i)
    for (auto& v : m.params()[i].value.values()) v = 0.1 + std::uniform_real_distribution<double>(0, 1)(rng);
  m.params()[m.head_weight()].value = Tensor<double>({2, 1}, std::vector<double>{-1.0, 1.0});
  auto x = random_uniform<double>(s.input_shape(2), 0.2, 0.8, rng);
  std::vector<int> y{0, 1};
  auto adv = fgsm_step(m, identity_path_config(m.sites()), x, y, 0.1);
  for (std::size_t p = 0; p < 36; ++p) {
    EXPECT_NEAR(adv[p] - x[p], 0.1, 1e-12);            // label 0: w_0 - w_1 < 0 -> push up
    EXPECT_NEAR(adv[36 + p] - x[36 + p], -0.1, 1e-12);  // label 1: push down
  }
}

TEST(Fgsm, IdentityPathReproducesPlainFgsm) {
  auto m = build_model<float>(small_spec("mini-resnet"), 5);
  std::mt19937_64 rng(6);
  auto x = random_uniform<float>(small_spec().input_shape(4), 0.0f, 1.0f, rng);
  auto y = cycle_labels(4);
  auto fw = forward(m, x);
  auto plain = backward_standard(m, fw.tape, softmax_cross_entropy(fw.logits, y).grad_logits).input;
  auto expected = x;
  const auto s = sign(plain);
  for (std::size_t i = 0; i < x.size(); ++i) expected[i] = std::clamp(x[i] + 0.1f * s[i], 0.0f, 1.0f);
  EXPECT_EQ(fgsm_step(m, identity_path_config(m.sites()), x, y, 0.1), expected);
}

class IfgsmTest : public ::testing::Test {
 protected:
  ArchitectureSpec spec = small_spec("mini-resnet");
  Model<float> m = build_model<float>(spec, 7);
  std::mt19937_64 rng{8};
  Tensor<float> x = random_uniform<float>(spec.input_shape(20), 0.0f, 1.0f, rng);
  std::vector<int> y = cycle_labels(20);
  PathConfig path = [&] {
    PathConfig p;
    std::uniform_real_distribution<double> u(0, 1);
    for (const auto& s : m.sites()) p.gammas[s.site_id] = u(rng);
    return p;
  }();
};

TEST_F(IfgsmTest, SingleStepReducesToFgsm) {
  AttackConfig cfg;
  cfg.epsilon = 0.1;
  cfg.steps = 1;
  cfg.step_size = 0.1;
  cfg.chunk_size = 64;
  EXPECT_EQ(ifgsm(m, path, x, y, cfg).x_adv, fgsm_step(m, path, x, y, 0.1));
}

TEST_F(IfgsmTest, ConstraintsHoldAtEveryStep) {
  AttackConfig cfg;
  cfg.epsilon = 0.05;
  cfg.steps = 6;
  cfg.step_size = 0.03;  // overshoots the ball so projection does real work
  cfg.momentum = 1.0;
  cfg.di_probability = 0.5;
  auto b = ifgsm(m, path, x, y, cfg);
  EXPECT_EQ(b.constraint_violations, 0u);
  EXPECT_LE(b.max_linf, 0.05 + 1e-6);
  EXPECT_GT(b.max_linf, 0.04);
}

TEST_F(IfgsmTest, MomentumFollowsRecurrence) {
  AttackConfig cfg;
  cfg.epsilon = 0.1;
  cfg.steps = 2;
  cfg.step_size = 0.02;
  cfg.momentum = 0.9;
  cfg.chunk_size = 64;
  auto got = ifgsm(m, path, x, y, cfg).x_adv;

  // hand-rolled: g <- mu g + grad / ||grad||_1 per example
  const std::size_t per = x.size() / 20;
  auto normalized = [&](const Tensor<float>& xi) {
    auto g = input_gradient(m, path, xi, y);
    for (std::size_t i = 0; i < 20; ++i) {
      double l1 = 0;
      for (std::size_t k = 0; k < per; ++k) l1 += std::abs(g[i * per + k]);
      for (std::size_t k = 0; k < per; ++k) g[i * per + k] = static_cast<float>(g[i * per + k] / l1);
    }
    return g;
  };
  auto step = [&](const Tensor<float>& xi, const Tensor<float>& dir) {
    auto out = xi;
    axpy(out, sign(dir), 0.02f);
    return project_linf(out, x, 0.1);
  };
  auto g1 = normalized(x);
  auto x1 = step(x, g1);
  auto raw2 = normalized(x1);
  auto g2 = scaled(g1, 0.9f);
  axpy(g2, raw2);
  EXPECT_LE(max_abs_diff(got, step(x1, g2)), 1e-6);
  EXPECT_NE(sign(g2), sign(raw2));  // accumulated direction differs from the raw gradient

  cfg.momentum = 0.0;
  EXPECT_NE(ifgsm(m, path, x, y, cfg).x_adv, got);
}

TEST_F(IfgsmTest, DeterministicAcrossWorkerCounts) {
  AttackConfig cfg;
  cfg.steps = 3;
  cfg.di_probability = 0.7;
  cfg.momentum = 1.0;
  cfg.chunk_size = 4;
  cfg.seed = 99;
  cfg.workers = 1;
  auto a = ifgsm(m, path, x, y, cfg);
  cfg.workers = 3;
  auto b = ifgsm(m, path, x, y, cfg);
  EXPECT_EQ(a.x_adv, b.x_adv);
  cfg.seed = 100;
  EXPECT_NE(ifgsm(m, path, x, y, cfg).x_adv, a.x_adv);
}

TEST_F(IfgsmTest, RejectsBadConfigAndLabels) {
  AttackConfig cfg;
  cfg.steps = 0;
  EXPECT_THROW(ifgsm(m, path, x, y, cfg), ConfigError);
  cfg = AttackConfig{};
  cfg.epsilon = -0.1;
  EXPECT_THROW(ifgsm(m, path, x, y, cfg), ConfigError);
  auto bad = y;
  bad[3] = -1;
  EXPECT_THROW(ifgsm(m, path, x, bad, AttackConfig{}), InvalidArgument);
}

TEST(DiTransform, IdentityCases) {
  std::mt19937_64 rng(9);
  auto x = random_uniform<float>({3, 2, 8, 8}, 0.0f, 1.0f, rng);
  EXPECT_EQ(di_transform(x, 0.0, 0.5, rng), x);
  EXPECT_EQ(di_transform(x, 1.0, 1.0, rng), x);
}

TEST(DiTransform, SeededShapePreservingAndAdjoint) {
  std::mt19937_64 data_rng(10);
  auto x = random_uniform<float>({2, 1, 12, 12}, 0.0f, 1.0f, data_rng);
  std::size_t changed = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 r1(seed), r2(seed);
    DiTransform a(x.shape(), 0.6, 0.5, r1), b(x.shape(), 0.6, 0.5, r2);
    auto ya = a.apply(x);
    EXPECT_EQ(ya, b.apply(x));
    EXPECT_EQ(ya.shape(), x.shape());
    changed += ya != x;
    auto g = random_normal<float>(x.shape(), data_rng);
    EXPECT_NEAR(dot(ya, g), dot(x, a.adjoint(g)), 1e-4);
  }
  EXPECT_GT(changed, 50u);
  EXPECT_LT(changed, 100u);
}

TEST(AttackSuccessRate, CleanPermutedAndTies) {
  auto m = build_model<float>(small_spec(), 11);
  std::mt19937_64 rng(12);
  auto x = random_uniform<float>(small_spec().input_shape(30), 0.0f, 1.0f, rng);
  AdversarialBatch<float> b{x, x, predict(m, x), {}, {}, 0, 0.0};
  EXPECT_EQ(attack_success_rate(m, b, "self"), 0.0);
  EXPECT_EQ(b.success_model, "self");
  for (auto& v : b.y) v = (v + 1) % 10;
  EXPECT_EQ(attack_success_rate(m, b), 1.0);

  // constant logits: every prediction is class 0
  auto flat = m;
  for (auto& v : flat.params()[flat.head_weight()].value.values()) v = 0;
  b.y = cycle_labels(30);
  EXPECT_NEAR(attack_success_rate(flat, b), 27.0 / 30.0, 1e-12);
  EXPECT_EQ(b.success[0], 0);
  EXPECT_EQ(b.success[1], 1);

  AsrOptions only_correct{true};
  EXPECT_EQ(attack_success_rate(flat, b, "flat", only_correct), 0.0);
}

TEST(AttackSuccessRate, UntrainedVictimNearNinetyPercent) {
  const auto digits = read_idx_dir(PAS_DATA_DIR);
  const auto batch_set = split_dataset(digits, 1).test;
  ArchitectureSpec spec;
  spec.widths = {8, 16};
  double total = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto victim = build_model<float>(spec, 100 + seed);
    AdversarialBatch<float> b{batch_set.images, batch_set.images, batch_set.labels, {}, {}, 0, 0.0};
    total += attack_success_rate(victim, b);
  }
  EXPECT_NEAR(total / 3, 0.9, 0.05);
}

TEST(AttackSuccessRate, VictimShapeMismatch) {
  auto m = build_model<float>(small_spec(), 1);
  AdversarialBatch<float> b{Tensor<float>({1, 1, 28, 28}), Tensor<float>({1, 1, 28, 28}), {0}, {}, {}, 0, 0.0};
  EXPECT_THROW(attack_success_rate(m, b), ConfigError);
}

TEST(AdversarialBatch, ContainerRoundTrip) {
  std::mt19937_64 rng(13);
  AdversarialBatch<float> b{random_uniform<float>({3, 1, 4, 4}, 0.0f, 1.0f, rng),
                            random_uniform<float>({3, 1, 4, 4}, 0.0f, 1.0f, rng), {1, 2, 3}, {}, {}, 0, 0.0};
  AttackConfig cfg;
  auto c = decode_container(encode_container(batch_container(b, cfg, "abc")));
  auto back = batch_from_container(c);
  EXPECT_EQ(back.x, b.x);
  EXPECT_EQ(back.x_adv, b.x_adv);
  EXPECT_EQ(back.y, b.y);
  EXPECT_EQ(c.header["path_hash"], "abc");
  EXPECT_DOUBLE_EQ(c.header["attack"].get<AttackConfig>().eta(), cfg.eta());
}

}  // namespace
}  // namespace pas
