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

#include <cmath>
#include <random>
#include <sstream>
#include <thread>

#include "pas/model.hpp"
#include "pas/reparam.hpp"
#include "reference.hpp"

namespace pas {
namespace {

TEST(SkipKernel, CenterOnesForEveryChannelPair) {
  auto k = make_skip_kernel<float>(ConvSpec{2, 2, 3, 3, 1, 1});
  for (std::size_t o = 0; o < 2; ++o)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(k.at(o, c, i, j), (i == 1 && j == 1) ? 1.0f : 0.0f);
}

TEST(SkipKernel, OneByOneIsTrueIdentity) {
  const ConvSpec spec{1, 1, 1, 1, 1, 0};
  auto k = make_skip_kernel<float>(spec);
  EXPECT_EQ(k.storage(), (std::vector<float>{1}));
  std::mt19937_64 rng(1);
  auto z = random_normal<float>({2, 1, 4, 4}, rng);
  EXPECT_EQ(conv2d_forward(z, k, spec), z);
}

TEST(SkipKernel, ComputesChannelSum) {
  // channel A = 1..4, channel B = 10..40
  Tensor<float> z({1, 2, 2, 2}, std::vector<float>{1, 2, 3, 4, 10, 20, 30, 40});
  const ConvSpec spec{2, 2, 3, 3, 1, 1};
  auto y = conv2d_forward(z, make_skip_kernel<float>(spec), spec);
  EXPECT_EQ(y.storage(), (std::vector<float>{11, 22, 33, 44, 11, 22, 33, 44}));
}

TEST(SkipKernel, EvenKernelUnsupported) {
  EXPECT_THROW(make_skip_kernel<float>(ConvSpec{1, 1, 2, 2, 1, 0}), UnsupportedConfiguration);
  EXPECT_THROW(make_skip_kernel<float>(ConvSpec{1, 1, 3, 4, 1, 1}), UnsupportedConfiguration);
}

class SkipConvTest : public ::testing::Test {
 protected:
  ConvSpec spec{3, 4, 3, 3, 2, 1};
  std::mt19937_64 rng{5};
  Shape in_shape{2, 3, 7, 7};
  Tensor<float> k = random_normal<float>(spec.kernel_shape(), rng);
  Tensor<float> g = random_normal<float>({2, 4, 4, 4}, rng);
};

TEST_F(SkipConvTest, EndpointsAreExact) {
  EXPECT_EQ(skipconv_backward_input(g, in_shape, k, spec, 1.0), conv2d_backward_input(g, k, spec, in_shape));
  EXPECT_EQ(skipconv_backward_input(g, in_shape, k, spec, 0.0),
            conv2d_backward_input(g, make_skip_kernel<float>(spec), spec, in_shape));
}

TEST_F(SkipConvTest, HalfwayIsLinearCombination) {
  // independent oracle: naive scatter with I and with k - I, combined by hand
  auto skip = make_skip_kernel<float>(spec);
  auto rest = k;
  axpy(rest, skip, -1.0f);
  auto expected = reference::conv_backward_input_naive(g, skip, spec, in_shape);
  axpy(expected, reference::conv_backward_input_naive(g, rest, spec, in_shape), 0.5f);
  EXPECT_LE(max_abs_diff(skipconv_backward_input(g, in_shape, k, spec, 0.5), expected), 1e-5);
}

TEST_F(SkipConvTest, RejectsGammaOutsideUnitInterval) {
  EXPECT_THROW(skipconv_backward_input(g, in_shape, k, spec, -0.1), InvalidArgument);
  EXPECT_THROW(skipconv_backward_input(g, in_shape, k, spec, 1.5), InvalidArgument);
  EXPECT_THROW(skipconv_backward_input(g, in_shape, k, spec, std::nan("")), InvalidArgument);
}

TEST(LinReluAlpha, HandValues) {
  Tensor<float> z1({2}, std::vector<float>{1, -1});
  EXPECT_NEAR(linrelu_alpha(z1, relu_forward(z1).mask), 0.70711, 1e-5);
  Tensor<float> z2({2}, std::vector<float>{3, 4});
  EXPECT_NEAR(linrelu_alpha(z2, relu_forward(z2).mask), 0.28284, 1e-5);
  Tensor<float> neg({3}, std::vector<float>{-1, -2, -0.5f});
  EXPECT_EQ(linrelu_alpha(neg, relu_forward(neg).mask), 0.0);
  Tensor<float> zero({4});
  EXPECT_EQ(linrelu_alpha(zero, relu_forward(zero).mask), 0.0);
}

TEST(LinReluAlpha, ClampedIntoUnitInterval) {
  // tiny positive values: ||mask|| / ||z|| >> 1 before clamping
  Tensor<float> z({3}, std::vector<float>{1e-3f, 2e-3f, -1e-3f});
  EXPECT_EQ(linrelu_alpha(z, relu_forward(z).mask), 1.0);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    auto r = random_normal<float>({17}, rng);
    const double a = linrelu_alpha(r, relu_forward(r).mask);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
}

TEST(LinReluBackward, Cases) {
  Tensor<float> z({2}, std::vector<float>{1, -1});
  const ActivationSiteRecord<float> rec{relu_forward(z).mask, linrelu_alpha(z, relu_forward(z).mask)};
  Tensor<float> g({2}, std::vector<float>{1, 1});
  EXPECT_EQ(linrelu_backward(g, rec, 0.0).storage(), (std::vector<float>{1, 0}));
  auto full = linrelu_backward(g, rec, 1.0);
  EXPECT_NEAR(full[0], 1.0, 1e-6);
  EXPECT_NEAR(full[1], 0.70711, 1e-5);

  const ActivationSiteRecord<float> dense{Tensor<float>({2}, std::vector<float>{0, 1}), 1.0};
  Tensor<float> g2({2}, std::vector<float>{0.25f, -3});
  EXPECT_EQ(linrelu_backward(g2, dense, 1.0), g2);
  EXPECT_THROW(linrelu_backward(g2, dense, 2.0), InvalidArgument);
}

TEST(LinRelu, ForwardValueIdentity) {
  std::mt19937_64 rng(4);
  auto z = random_normal<float>({4, 3, 5, 5}, rng);
  const auto r = relu_forward(z);
  const double a = linrelu_alpha(z, r.mask);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double relu_neg = std::max(-z[i], 0.0f);
    const double lhs = a * (z[i] + relu_neg) + (1.0 - a) * r.output[i];
    EXPECT_NEAR(lhs, r.output[i], 1e-6);
  }
}

TEST(SkipGrad, EndpointsAndRandomConvBranch) {
  std::mt19937_64 rng(6);
  const ConvSpec spec{2, 2, 3, 3, 1, 1};
  auto k = random_normal<float>(spec.kernel_shape(), rng);
  auto g = random_normal<float>({1, 2, 5, 5}, rng);
  const Shape s = g.shape();
  int calls = 0;
  auto branch = [&](const Tensor<float>& go) {
    ++calls;
    return conv2d_backward_input(go, k, spec, s);
  };
  EXPECT_EQ(skipgrad_backward(g, branch, 0.0), g);
  EXPECT_EQ(calls, 0);

  auto oracle = reference::conv_backward_input_naive(g, k, spec, s);
  auto full = skipgrad_backward(g, branch, 1.0);
  auto expect_full = g;
  axpy(expect_full, oracle);
  EXPECT_LE(max_abs_diff(full, expect_full), 1e-5);

  auto part = skipgrad_backward(g, branch, 0.3);
  auto expect_part = g;
  axpy(expect_part, oracle, 0.3f);
  EXPECT_LE(max_abs_diff(part, expect_part), 1e-5);
  EXPECT_THROW(skipgrad_backward(g, branch, -1.0), InvalidArgument);
}

std::vector<SiteDescriptor> sample_sites() {
  return {{0, SiteKind::conv, "stem", 0.0},
          {1, SiteKind::activation, "stem.relu", 0.5},
          {2, SiteKind::residual, "stage0.block0.add", 1.0}};
}

TEST(PathConfig, IdentityConvention) {
  auto p = identity_path_config(sample_sites());
  EXPECT_EQ(p.gamma(0), 1.0);
  EXPECT_EQ(p.gamma(1), 0.0);
  EXPECT_EQ(p.gamma(2), 1.0);
}

TEST(PathConfig, ValidationListsMissingSites) {
  PathConfig p;
  p.gammas[1] = 0.5;
  try {
    validate_path(p, sample_sites());
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("0,2"), std::string::npos) << e.what();
  }
  p.gammas[0] = 1.2;
  p.gammas[2] = 0;
  EXPECT_THROW(validate_path(p, sample_sites()), InvalidArgument);
}

TEST(PathFile, RoundTripsByteIdentically) {
  const auto sites = sample_sites();
  PathConfig p;
  p.gammas = {{0, 0.1}, {1, 1.0 / 3.0}, {2, 0.0}};
  const std::string text = path_config_text(sites, p);
  EXPECT_EQ(text.substr(0, 13), "#pas-path v1\n");
  EXPECT_NE(text.find("0\tconv\tstem\t0.1\n"), std::string::npos);
  std::istringstream in(text);
  auto parsed = read_path_config(in);
  EXPECT_EQ(parsed.path, p);  // exact doubles
  EXPECT_NO_THROW(check_path_matches(parsed, sites));
  EXPECT_EQ(path_config_text(sites, parsed.path), text);

  const auto id = identity_path_config(sites);
  std::istringstream in2(path_config_text(sites, id));
  EXPECT_EQ(path_config_text(sites, read_path_config(in2).path), path_config_text(sites, id));
  std::istringstream in3(path_config_text(sites, id));
  EXPECT_EQ(path_hash(sites, id), path_hash(sites, read_path_config(in3).path));
}

TEST(PathFile, MalformedInputReportsOffset) {
  std::istringstream bad_header("#pas-path v2\n");
  EXPECT_THROW(read_path_config(bad_header), FormatError);
  std::istringstream bad_line("#pas-path v1\n0\tconv\tstem\t0.5\n1\tactivation\tx\n");
  try {
    read_path_config(bad_line);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 13 + 16);  // header + first line
  }
  std::istringstream bad_gamma("#pas-path v1\n0\tconv\tstem\t1.5\n");
  EXPECT_THROW(read_path_config(bad_gamma), FormatError);
  std::istringstream dup("#pas-path v1\n0\tconv\tstem\t0.5\n0\tconv\tstem\t0.5\n");
  EXPECT_THROW(read_path_config(dup), FormatError);
}

TEST(PathFile, MismatchedModelRejected) {
  std::istringstream in("#pas-path v1\n0\tconv\tother\t0.5\n1\tactivation\tstem.relu\t0\n2\tresidual\tstage0.block0.add\t1\n");
  EXPECT_THROW(check_path_matches(read_path_config(in), sample_sites()), ConfigError);
}

// --- model-level properties -------------------------------------------------

ArchitectureSpec small_resnet() {
  ArchitectureSpec s;
  s.name = "mini-resnet";
  s.height = s.width = 10;
  s.widths = {3, 4};
  s.residual_blocks = 1;
  return s;
}

ArchitectureSpec small_plain() {
  ArchitectureSpec s;
  s.height = s.width = 10;
  s.widths = {3, 4};
  return s;
}

PathConfig random_path(const std::vector<SiteDescriptor>& sites, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  PathConfig p;
  for (const auto& s : sites) p.gammas[s.site_id] = u(rng);
  return p;
}

TEST(Reparam, ForwardInvarianceAcrossPaths) {
  for (const auto& spec : {small_plain(), small_resnet()}) {
    auto m = build_model<float>(spec, 9);
    std::mt19937_64 rng(10);
    auto x = random_uniform<float>(spec.input_shape(3), 0.0f, 1.0f, rng);
    const auto logits = forward(m, x).logits;
    for (int t = 0; t < 5; ++t) {
      auto path = random_path(m.sites(), rng);
      EXPECT_LE(max_abs_diff(forward_decomposed(m, path, x), logits), 1e-4) << spec.name;
    }
    PathConfig zeros;
    for (const auto& s : m.sites()) zeros.gammas[s.site_id] = 0.0;
    EXPECT_LE(max_abs_diff(forward_decomposed(m, zeros, x), logits), 1e-4);
  }
}

TEST(Reparam, IdentityPathEqualsStandardBackprop) {
  for (const auto& spec : {small_plain(), small_resnet()}) {
    auto m = build_model<float>(spec, 11);
    std::mt19937_64 rng(12);
    auto x = random_uniform<float>(spec.input_shape(2), 0.0f, 1.0f, rng);
    auto g = random_normal<float>({2, spec.classes}, rng);
    auto fw = forward(m, x);
    auto ours = backward_with_path(m, fw.tape, g, identity_path_config(m.sites()));
    EXPECT_LE(relative_error(ours, reference::input_gradient_naive(m, x, g)), 1e-4) << spec.name;
    EXPECT_LE(relative_error(ours, backward_standard(m, fw.tape, g).input), 1e-4);

    auto m64 = m.cast<double>();
    auto x64 = x.cast<double>();
    auto g64 = g.cast<double>();
    auto fw64 = forward(m64, x64);
    auto ours64 = backward_with_path(m64, fw64.tape, g64, identity_path_config(m64.sites()));
    EXPECT_LE(relative_error(ours64, reference::input_gradient_naive(m64, x64, g64)), 1e-10) << spec.name;
  }
}

TEST(Reparam, GradientIsAffineInEachGamma) {
  auto m = build_model<double>(small_resnet(), 13);
  std::mt19937_64 rng(14);
  auto x = random_uniform<double>(small_resnet().input_shape(2), 0.0, 1.0, rng);
  auto g = random_normal<double>({2, 10}, rng);
  const auto tape = forward(m, x).tape;
  const auto base = random_path(m.sites(), rng);
  for (const auto& s : m.sites()) {
    auto at = [&](double gamma) {
      auto p = base;
      p.gammas[s.site_id] = gamma;
      return backward_with_path(m, tape, g, p);
    };
    auto g0 = at(0.0), gh = at(0.5), g1 = at(1.0);
    auto mid = scaled(g0, 0.5);
    axpy(mid, g1, 0.5);
    EXPECT_LE(max_abs_diff(gh, mid), 1e-5 * std::max(1.0, static_cast<double>(l2_norm(g1)))) << s.layer_name;
  }
}

TEST(Reparam, ConcurrentPathEvaluationIsSafe) {
  auto m = build_model<float>(small_resnet(), 15);
  std::mt19937_64 rng(16);
  auto x = random_uniform<float>(small_resnet().input_shape(2), 0.0f, 1.0f, rng);
  auto g = random_normal<float>({2, 10}, rng);
  const auto tape = forward(m, x).tape;
  std::vector<PathConfig> paths;
  for (int i = 0; i < 4; ++i) paths.push_back(random_path(m.sites(), rng));
  std::vector<Tensor<float>> serial, parallel(paths.size());
  for (const auto& p : paths) serial.push_back(backward_with_path(m, tape, g, p));
  {
    std::vector<std::jthread> th;
    for (std::size_t i = 0; i < paths.size(); ++i)
      th.emplace_back([&, i] { parallel[i] = backward_with_path(m, tape, g, paths[i]); });
  }
  EXPECT_EQ(serial, parallel);
}

}  // namespace
}  // namespace pas
