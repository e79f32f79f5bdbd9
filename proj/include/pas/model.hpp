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

#ifndef PAS_MODEL_HPP
#define PAS_MODEL_HPP

// Desk-scale architectures and their tape-based forward/backward.
//
// plain-cnn    per stage: conv(stride 1 or 2) -> relu -> conv -> relu
// mini-resnet  stem conv -> relu, then per stage: [strided conv -> relu]
//              followed by residual blocks relu(z + conv(relu(conv(z))))
// both end in global average pooling and a biased linear head. Convs carry
// no bias and there is no normalization, so the forward value is exactly
// the composition of the primitives in ops.hpp.

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "pas/common.hpp"
#include "pas/ops.hpp"
#include "pas/reparam.hpp"
#include "pas/tensor.hpp"

namespace pas {

struct ArchitectureSpec {
  std::string name = "plain-cnn";  // plain-cnn | mini-resnet
  std::size_t channels = 1;
  std::size_t height = 28;
  std::size_t width = 28;
  std::size_t classes = 10;
  std::vector<std::size_t> widths{16, 32, 64};
  std::size_t residual_blocks = 0;  // per stage, mini-resnet only

  Shape input_shape(std::size_t batch) const { return {batch, channels, height, width}; }

  void validate() const {
    if (name != "plain-cnn" && name != "mini-resnet") throw ConfigError("unknown architecture '" + name + "'");
    if (widths.empty()) throw ConfigError("architecture needs at least one stage width");
    for (auto w : widths)
      if (w == 0) throw ConfigError("stage widths must be >= 1");
    if (channels == 0 || height == 0 || width == 0 || classes == 0) throw ConfigError("input shape and classes must be >= 1");
    if (name == "plain-cnn" && residual_blocks != 0) throw ConfigError("plain-cnn has no residual blocks");
  }

  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

inline void to_json(nlohmann::json& j, const ArchitectureSpec& s) {
  j = nlohmann::json{{"name", s.name},         {"channels", s.channels}, {"height", s.height},
                     {"width", s.width},       {"classes", s.classes},   {"widths", s.widths},
                     {"residual_blocks", s.residual_blocks}};
}

inline void from_json(const nlohmann::json& j, ArchitectureSpec& s) {
  j.at("name").get_to(s.name);
  j.at("channels").get_to(s.channels);
  j.at("height").get_to(s.height);
  j.at("width").get_to(s.width);
  j.at("classes").get_to(s.classes);
  j.at("widths").get_to(s.widths);
  j.at("residual_blocks").get_to(s.residual_blocks);
}

/// conv -> relu with one conv site and one activation site.
struct ConvUnit {
  ConvSpec spec;
  std::size_t param = 0;
  std::size_t conv_site = 0;
  std::size_t act_site = 0;
};

/// relu(z + conv_b(relu(conv_a(z)))).
struct ResidualUnit {
  ConvUnit first;
  ConvSpec second_spec;
  std::size_t second_param = 0;
  std::size_t second_site = 0;
  std::size_t residual_site = 0;
  std::size_t post_act_site = 0;
};

using Unit = std::variant<ConvUnit, ResidualUnit>;

template <Scalar T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

template <Scalar T>
class Model {
 public:
  Model() = default;

  const ArchitectureSpec& spec() const noexcept { return spec_; }
  const std::vector<Unit>& units() const noexcept { return units_; }
  const std::vector<SiteDescriptor>& sites() const noexcept { return sites_; }
  std::vector<NamedTensor<T>>& params() noexcept { return params_; }
  const std::vector<NamedTensor<T>>& params() const noexcept { return params_; }
  const Tensor<T>& param(std::size_t i) const { return params_.at(i).value; }
  std::size_t head_weight() const noexcept { return head_weight_; }
  std::size_t head_bias() const noexcept { return head_bias_; }
  std::size_t feature_width() const noexcept { return spec_.widths.back(); }

  /// Same architecture and parameters in another scalar type.
  template <Scalar U>
  Model<U> cast() const {
    Model<U> m;
    m.spec_ = spec_;
    m.units_ = units_;
    m.sites_ = sites_;
    m.head_weight_ = head_weight_;
    m.head_bias_ = head_bias_;
    for (const auto& p : params_) m.params_.push_back({p.name, p.value.template cast<U>()});
    return m;
  }

  /// Topology and parameter slots without initialization (values zero).
  static Model skeleton(const ArchitectureSpec& spec) {
    spec.validate();
    Model m;
    m.spec_ = spec;
    std::vector<std::pair<SiteKind, std::string>> site_list;
    auto add_site = [&](SiteKind kind, std::string name) {
      site_list.emplace_back(kind, std::move(name));
      return site_list.size() - 1;
    };
    auto add_conv = [&](std::size_t in, std::size_t out, std::size_t stride, const std::string& name) {
      ConvUnit u;
      u.spec = ConvSpec{in, out, 3, 3, stride, 1};
      u.param = m.params_.size();
      m.params_.push_back({name + ".weight", Tensor<T>(u.spec.kernel_shape())});
      u.conv_site = add_site(SiteKind::conv, name);
      u.act_site = add_site(SiteKind::activation, name + ".relu");
      return u;
    };

    std::size_t prev = spec.channels;
    if (spec.name == "plain-cnn") {
      for (std::size_t s = 0; s < spec.widths.size(); ++s) {
        const std::string stage = "stage" + std::to_string(s);
        m.units_.emplace_back(add_conv(prev, spec.widths[s], s == 0 ? 1 : 2, stage + ".conv0"));
        m.units_.emplace_back(add_conv(spec.widths[s], spec.widths[s], 1, stage + ".conv1"));
        prev = spec.widths[s];
      }
    } else {
      for (std::size_t s = 0; s < spec.widths.size(); ++s) {
        const std::string stage = "stage" + std::to_string(s);
        m.units_.emplace_back(add_conv(prev, spec.widths[s], s == 0 ? 1 : 2, s == 0 ? "stem" : stage + ".down"));
        prev = spec.widths[s];
        for (std::size_t b = 0; b < spec.residual_blocks; ++b) {
          const std::string block = stage + ".block" + std::to_string(b);
          ResidualUnit r;
          r.first = add_conv(prev, prev, 1, block + ".conv0");
          r.second_spec = ConvSpec{prev, prev, 3, 3, 1, 1};
          r.second_param = m.params_.size();
          m.params_.push_back({block + ".conv1.weight", Tensor<T>(r.second_spec.kernel_shape())});
          r.second_site = add_site(SiteKind::conv, block + ".conv1");
          r.residual_site = add_site(SiteKind::residual, block + ".add");
          r.post_act_site = add_site(SiteKind::activation, block + ".relu");
          m.units_.emplace_back(r);
        }
      }
    }
    m.head_weight_ = m.params_.size();
    m.params_.push_back({"head.weight", Tensor<T>({spec.classes, prev})});
    m.head_bias_ = m.params_.size();
    m.params_.push_back({"head.bias", Tensor<T>({spec.classes})});

    const std::size_t n = site_list.size();
    for (std::size_t i = 0; i < n; ++i)
      m.sites_.push_back(SiteDescriptor{i, site_list[i].first, site_list[i].second,
                                        n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0});
    return m;
  }

 private:
  template <Scalar U>
  friend class Model;

  ArchitectureSpec spec_;
  std::vector<Unit> units_;
  std::vector<SiteDescriptor> sites_;
  std::vector<NamedTensor<T>> params_;
  std::size_t head_weight_ = 0;
  std::size_t head_bias_ = 0;
};

/// Fan-in scaled uniform initialization: convs U(+-sqrt(6/fan_in)), head U(+-1/sqrt(fan_in)), bias 0.
template <Scalar T>
Model<T> build_model(const ArchitectureSpec& spec, std::uint64_t seed) {
  Model<T> m = Model<T>::skeleton(spec);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    auto& p = m.params()[i].value;
    if (i == m.head_bias()) continue;
    const std::size_t fan_in = p.size() / p.dim(0);
    const double bound = i == m.head_weight() ? 1.0 / std::sqrt(static_cast<double>(fan_in))
                                              : std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : p.values()) v = static_cast<T>(dist(rng));
  }
  return m;
}

/// Per-forward record of everything the decoupled backward needs.
template <Scalar T>
struct Tape {
  Shape input_shape;
  std::vector<Tensor<T>> conv_inputs;                // indexed by site id; empty for non-conv sites
  std::vector<ActivationSiteRecord<T>> activations;  // indexed by site id
  Tensor<T> pool_input;
  Tensor<T> features;

  friend bool operator==(const Tape&, const Tape&) = default;
};

template <Scalar T>
struct ForwardResult {
  Tensor<T> logits;
  Tape<T> tape;
};

namespace detail {

template <Scalar T>
Tensor<T> conv_unit_forward(const Model<T>& m, const ConvUnit& u, const Tensor<T>& z, Tape<T>& tape) {
  tape.conv_inputs[u.conv_site] = z;
  Tensor<T> pre = conv2d_forward(z, m.param(u.param), u.spec);
  auto r = relu_forward(pre);
  tape.activations[u.act_site] = ActivationSiteRecord<T>{std::move(r.mask), 0.0};
  tape.activations[u.act_site].alpha_hat = linrelu_alpha(pre, tape.activations[u.act_site].mask);
  return std::move(r.output);
}

template <Scalar T>
void require_finite(const Tensor<T>& t, const char* where) {
  if (!t.all_finite()) throw NumericalError(std::string("non-finite value in ") + where);
}

}  // namespace detail

template <Scalar T>
ForwardResult<T> forward(const Model<T>& m, const Tensor<T>& input) {
  const auto& spec = m.spec();
  if (input.rank() != 4 || input.dim(1) != spec.channels || input.dim(2) != spec.height || input.dim(3) != spec.width)
    throw InvalidArgument("forward: input shape " + shape_str(input.shape()) + " does not match model input " +
                          shape_str(spec.input_shape(input.rank() ? input.dim(0) : 0)));
  detail::require_finite(input, "forward input");
  ForwardResult<T> out;
  Tape<T>& tape = out.tape;
  tape.input_shape = input.shape();
  tape.conv_inputs.resize(m.sites().size());
  tape.activations.resize(m.sites().size());
  Tensor<T> z = input;
  for (const auto& unit : m.units()) {
    if (const auto* cu = std::get_if<ConvUnit>(&unit)) {
      z = detail::conv_unit_forward(m, *cu, z, tape);
    } else {
      const auto& ru = std::get<ResidualUnit>(unit);
      Tensor<T> h = detail::conv_unit_forward(m, ru.first, z, tape);
      tape.conv_inputs[ru.second_site] = h;
      Tensor<T> sum = conv2d_forward(h, m.param(ru.second_param), ru.second_spec);
      axpy(sum, z);
      auto r = relu_forward(sum);
      tape.activations[ru.post_act_site] = ActivationSiteRecord<T>{std::move(r.mask), 0.0};
      tape.activations[ru.post_act_site].alpha_hat = linrelu_alpha(sum, tape.activations[ru.post_act_site].mask);
      z = std::move(r.output);
    }
  }
  tape.pool_input = z;
  tape.features = global_avg_pool_forward(z);
  out.logits = linear_forward(tape.features, m.param(m.head_weight()), m.param(m.head_bias()));
  detail::require_finite(out.logits, "forward logits");
  return out;
}

/// Input gradient through the path-rewired backward.
template <Scalar T>
Tensor<T> backward_with_path(const Model<T>& m, const Tape<T>& tape, const Tensor<T>& grad_logits,
                             const PathConfig& path) {
  validate_path(path, m.sites());
  Tensor<T> g = linear_backward_input(grad_logits, m.param(m.head_weight()));
  g = global_avg_pool_backward(g, tape.pool_input.shape());
  auto conv_unit_backward = [&](const ConvUnit& u, const Tensor<T>& grad) {
    Tensor<T> gz = linrelu_backward(grad, tape.activations[u.act_site], path.gamma(u.act_site));
    return skipconv_backward_input(gz, tape.conv_inputs[u.conv_site].shape(), m.param(u.param), u.spec,
                                   path.gamma(u.conv_site));
  };
  const auto& units = m.units();
  for (auto it = units.rbegin(); it != units.rend(); ++it) {
    if (const auto* cu = std::get_if<ConvUnit>(&*it)) {
      g = conv_unit_backward(*cu, g);
    } else {
      const auto& ru = std::get<ResidualUnit>(*it);
      g = linrelu_backward(g, tape.activations[ru.post_act_site], path.gamma(ru.post_act_site));
      auto branch = [&](const Tensor<T>& go) {
        Tensor<T> gh = skipconv_backward_input(go, tape.conv_inputs[ru.second_site].shape(), m.param(ru.second_param),
                                               ru.second_spec, path.gamma(ru.second_site));
        return conv_unit_backward(ru.first, gh);
      };
      g = skipgrad_backward(g, branch, path.gamma(ru.residual_site));
    }
  }
  detail::require_finite(g, "input gradient");
  return g;
}

template <Scalar T>
struct Gradients {
  Tensor<T> input;
  std::vector<Tensor<T>> params;  // aligned with Model::params()
};

/// Plain backpropagation producing parameter and input gradients (used for training).
template <Scalar T>
Gradients<T> backward_standard(const Model<T>& m, const Tape<T>& tape, const Tensor<T>& grad_logits) {
  Gradients<T> out;
  out.params.resize(m.params().size());
  auto lg = linear_backward(grad_logits, tape.features, m.param(m.head_weight()));
  out.params[m.head_weight()] = std::move(lg.weight);
  out.params[m.head_bias()] = std::move(lg.bias);
  Tensor<T> g = global_avg_pool_backward(lg.input, tape.pool_input.shape());
  auto conv_unit_backward = [&](const ConvUnit& u, const Tensor<T>& grad) {
    Tensor<T> gz = relu_backward(grad, tape.activations[u.act_site].mask);
    const Tensor<T>& in = tape.conv_inputs[u.conv_site];
    out.params[u.param] = conv2d_backward_kernel(gz, in, u.spec);
    return conv2d_backward_input(gz, m.param(u.param), u.spec, in.shape());
  };
  const auto& units = m.units();
  for (auto it = units.rbegin(); it != units.rend(); ++it) {
    if (const auto* cu = std::get_if<ConvUnit>(&*it)) {
      g = conv_unit_backward(*cu, g);
    } else {
      const auto& ru = std::get<ResidualUnit>(*it);
      g = relu_backward(g, tape.activations[ru.post_act_site].mask);
      const Tensor<T>& h = tape.conv_inputs[ru.second_site];
      out.params[ru.second_param] = conv2d_backward_kernel(g, h, ru.second_spec);
      Tensor<T> gh = conv2d_backward_input(g, m.param(ru.second_param), ru.second_spec, h.shape());
      axpy(g, conv_unit_backward(ru.first, gh));
    }
  }
  detail::require_finite(g, "input gradient");
  out.input = std::move(g);
  return out;
}

/// Forward that evaluates every reparameterized site literally as its decomposed
/// sum (skip + gamma * residual + stopped remainder). Equal to forward() up to
/// rounding; exists to check that the rewiring leaves the forward value alone.
template <Scalar T>
Tensor<T> forward_decomposed(const Model<T>& m, const PathConfig& path, const Tensor<T>& input) {
  validate_path(path, m.sites());
  auto conv = [&](const Tensor<T>& z, const Tensor<T>& k, const ConvSpec& spec, std::size_t site) {
    const Tensor<T> skip = make_skip_kernel<T>(spec);
    Tensor<T> residual_kernel = k;
    axpy(residual_kernel, skip, T(-1));
    const Tensor<T> res = conv2d_forward(z, residual_kernel, spec);
    const double g = path.gamma(site);
    Tensor<T> out = conv2d_forward(z, skip, spec);
    axpy(out, res, static_cast<T>(g));
    axpy(out, res, static_cast<T>(1.0 - g));
    return out;
  };
  auto act = [&](const Tensor<T>& z, std::size_t site) {
    const auto r = relu_forward(z);
    const double lambda = path.gamma(site) * linrelu_alpha(z, r.mask);
    Tensor<T> neg = z;
    for (auto& v : neg.values()) v = -v;
    const Tensor<T> relu_neg = relu_forward(neg).output;
    Tensor<T> out(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i)
      out[i] = static_cast<T>(lambda) * (z[i] + relu_neg[i]) + static_cast<T>(1.0 - lambda) * r.output[i];
    return out;
  };
  Tensor<T> z = input;
  for (const auto& unit : m.units()) {
    if (const auto* cu = std::get_if<ConvUnit>(&unit)) {
      z = act(conv(z, m.param(cu->param), cu->spec, cu->conv_site), cu->act_site);
    } else {
      const auto& ru = std::get<ResidualUnit>(unit);
      Tensor<T> h = act(conv(z, m.param(ru.first.param), ru.first.spec, ru.first.conv_site), ru.first.act_site);
      const Tensor<T> f = conv(h, m.param(ru.second_param), ru.second_spec, ru.second_site);
      const double g = path.gamma(ru.residual_site);
      Tensor<T> sum = z;
      axpy(sum, f, static_cast<T>(g));
      axpy(sum, f, static_cast<T>(1.0 - g));
      z = act(sum, ru.post_act_site);
    }
  }
  return linear_forward(global_avg_pool_forward(z), m.param(m.head_weight()), m.param(m.head_bias()));
}

template <Scalar T>
std::size_t count_sites(const Model<T>& m, SiteKind kind) {
  std::size_t n = 0;
  for (const auto& s : m.sites()) n += s.kind == kind;
  return n;
}

}  // namespace pas

#endif  // PAS_MODEL_HPP
