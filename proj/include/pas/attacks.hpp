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

#ifndef PAS_ATTACKS_HPP
#define PAS_ATTACKS_HPP

// Untargeted L-infinity attacks crafted through a path-rewired surrogate:
// one-step FGSM, I-FGSM with optional momentum (MI) and input diversity (DI).
//
// Examples are processed in fixed-size chunks; each chunk is independent
// (its own forward pass, so its own sparsity estimates, and its own RNG
// stream seeded by (seed, chunk index)). Results therefore do not depend on
// the number of workers.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "pas/checkpoint.hpp"
#include "pas/common.hpp"
#include "pas/dataset.hpp"
#include "pas/model.hpp"
#include "pas/ops.hpp"
#include "pas/reparam.hpp"
#include "pas/train.hpp"

namespace pas {

struct AttackConfig {
  double epsilon = 0.1;
  std::optional<double> step_size;  // defaults to epsilon / steps
  std::size_t steps = 10;
  double momentum = 0.0;            // 0 disables MI
  double di_probability = 0.0;      // 0 disables DI
  double di_min_scale = 0.875;
  double lower = 0.0;
  double upper = 1.0;
  std::size_t chunk_size = 16;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  double eta() const { return step_size.value_or(epsilon / static_cast<double>(steps)); }

  void validate() const {
    if (!(epsilon >= 0)) throw ConfigError("attack: epsilon must be >= 0");
    if (steps < 1) throw ConfigError("attack: steps must be >= 1");
    if (!(eta() > 0) && epsilon > 0) throw ConfigError("attack: step size must be > 0");
    if (!(momentum >= 0)) throw ConfigError("attack: momentum must be >= 0");
    if (!(di_probability >= 0 && di_probability <= 1)) throw ConfigError("attack: DI probability must be in [0,1]");
    if (!(di_min_scale > 0 && di_min_scale <= 1)) throw ConfigError("attack: DI min scale must be in (0,1]");
    if (!(lower < upper)) throw ConfigError("attack: pixel bounds must satisfy lower < upper");
    if (chunk_size == 0 || workers == 0) throw ConfigError("attack: chunk size and workers must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const AttackConfig& c) {
  j = nlohmann::json{{"epsilon", c.epsilon},
                     {"step_size", c.eta()},
                     {"steps", c.steps},
                     {"momentum", c.momentum},
                     {"di_probability", c.di_probability},
                     {"di_min_scale", c.di_min_scale},
                     {"lower", c.lower},
                     {"upper", c.upper},
                     {"chunk_size", c.chunk_size},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, AttackConfig& c) {
  j.at("epsilon").get_to(c.epsilon);
  c.step_size = j.at("step_size").get<double>();
  j.at("steps").get_to(c.steps);
  j.at("momentum").get_to(c.momentum);
  j.at("di_probability").get_to(c.di_probability);
  j.at("di_min_scale").get_to(c.di_min_scale);
  j.at("lower").get_to(c.lower);
  j.at("upper").get_to(c.upper);
  j.at("chunk_size").get_to(c.chunk_size);
  j.at("seed").get_to(c.seed);
}

/// Clamp x_adv into [x - eps, x + eps] intersected with [lower, upper].
template <Scalar T>
Tensor<T> project_linf(const Tensor<T>& x_adv, const Tensor<T>& x, double epsilon, double lower = 0.0,
                       double upper = 1.0) {
  if (x_adv.shape() != x.shape()) throw InvalidArgument("project_linf: shape mismatch");
  Tensor<T> out(x.shape());
  const T e = static_cast<T>(epsilon), lo = static_cast<T>(lower), hi = static_cast<T>(upper);
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = std::clamp(std::clamp(x_adv[i], x[i] - e, x[i] + e), lo, hi);
  return out;
}

/// Gradient of the mean cross-entropy with respect to the input, through `path`.
template <Scalar T>
Tensor<T> input_gradient(const Model<T>& m, const PathConfig& path, const Tensor<T>& x, std::span<const int> y) {
  auto fw = forward(m, x);
  auto loss = softmax_cross_entropy(fw.logits, y);
  return backward_with_path(m, fw.tape, loss.grad_logits, path);
}

/// x + eps * sign(grad), clamped to the pixel bounds.
template <Scalar T>
Tensor<T> fgsm_step(const Model<T>& m, const PathConfig& path, const Tensor<T>& x, std::span<const int> y,
                    double epsilon, double lower = 0.0, double upper = 1.0) {
  Tensor<T> out = x;
  if (epsilon == 0.0) {
    for (int label : y)
      if (label < 0 || static_cast<std::size_t>(label) >= m.spec().classes)
        throw InvalidArgument("fgsm_step: label " + std::to_string(label) + " out of range");
    return out;
  }
  const Tensor<T> s = sign(input_gradient(m, path, x, y));
  const T e = static_cast<T>(epsilon);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::clamp(out[i] + e * s[i], static_cast<T>(lower), static_cast<T>(upper));
  return out;
}

/// Random resize (nearest neighbour, scale in [min_scale, 1]) and zero-pad back
/// to the input size at a random offset, applied per example with probability p.
/// Linear in x, so the adjoint maps gradients back onto the original pixels.
class DiTransform {
 public:
  template <typename Rng>
  DiTransform(const Shape& shape, double probability, double min_scale, Rng& rng) : shape_(shape) {
    if (shape.size() != 4) throw InvalidArgument("di_transform: input must be rank 4");
    const std::size_t n = shape[0], h = shape[2], w = shape[3];
    maps_.resize(n);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (!(unit(rng) < probability)) continue;
      const double scale = min_scale + (1.0 - min_scale) * unit(rng);
      const auto nh = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(scale * static_cast<double>(h))), 1, h);
      const auto nw = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(scale * static_cast<double>(w))), 1, w);
      const auto oy = std::uniform_int_distribution<std::size_t>(0, h - nh)(rng);
      const auto ox = std::uniform_int_distribution<std::size_t>(0, w - nw)(rng);
      auto& map = maps_[i].emplace(h * w, -1);
      for (std::size_t r = 0; r < nh; ++r)
        for (std::size_t c = 0; c < nw; ++c)
          map[(oy + r) * w + ox + c] = static_cast<std::ptrdiff_t>((r * h / nh) * w + c * w / nw);
    }
  }

  template <Scalar T>
  Tensor<T> apply(const Tensor<T>& x) const {
    check(x.shape());
    Tensor<T> out = x;
    const std::size_t c = shape_[1], hw = shape_[2] * shape_[3];
    for (std::size_t i = 0; i < maps_.size(); ++i) {
      if (!maps_[i]) continue;
      const auto& map = *maps_[i];
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* src = x.data() + (i * c + ch) * hw;
        T* dst = out.data() + (i * c + ch) * hw;
        for (std::size_t p = 0; p < hw; ++p) dst[p] = map[p] < 0 ? T(0) : src[map[p]];
      }
    }
    return out;
  }

  template <Scalar T>
  Tensor<T> adjoint(const Tensor<T>& g) const {
    check(g.shape());
    Tensor<T> out = g;
    const std::size_t c = shape_[1], hw = shape_[2] * shape_[3];
    for (std::size_t i = 0; i < maps_.size(); ++i) {
      if (!maps_[i]) continue;
      const auto& map = *maps_[i];
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* src = g.data() + (i * c + ch) * hw;
        T* dst = out.data() + (i * c + ch) * hw;
        std::fill(dst, dst + hw, T(0));
        for (std::size_t p = 0; p < hw; ++p)
          if (map[p] >= 0) dst[map[p]] += src[p];
      }
    }
    return out;
  }

  bool transformed(std::size_t i) const { return maps_.at(i).has_value(); }

 private:
  void check(const Shape& s) const {
    if (s != shape_) throw InvalidArgument("di_transform: shape mismatch");
  }
  Shape shape_;
  std::vector<std::optional<std::vector<std::ptrdiff_t>>> maps_;
};

template <Scalar T, typename Rng>
Tensor<T> di_transform(const Tensor<T>& x, double probability, double min_scale, Rng& rng) {
  return DiTransform(x.shape(), probability, min_scale, rng).apply(x);
}

template <Scalar T>
struct AdversarialBatch {
  Tensor<T> x;
  Tensor<T> x_adv;
  std::vector<int> y;
  std::vector<std::uint8_t> success;  // against `success_model`, filled by attack_success_rate
  std::string success_model;
  std::size_t constraint_violations = 0;  // summed over every intermediate step
  double max_linf = 0.0;                  // largest |x_adv - x| seen at any step
};

namespace detail {

template <Scalar T>
void record_constraints(const Tensor<T>& x_adv, const Tensor<T>& x, const AttackConfig& cfg, std::size_t& violations,
                        double& max_linf) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = std::abs(static_cast<double>(x_adv[i]) - static_cast<double>(x[i]));
    max_linf = std::max(max_linf, d);
    if (d > cfg.epsilon + 1e-6 || x_adv[i] < static_cast<T>(cfg.lower) || x_adv[i] > static_cast<T>(cfg.upper))
      ++violations;
  }
}

// Runs fn(chunk_index, begin, end) over fixed chunks with `workers` threads.
template <typename Fn>
void for_each_chunk(std::size_t n, std::size_t chunk, std::size_t workers, Fn&& fn) {
  const std::size_t chunks = (n + chunk - 1) / chunk;
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (std::size_t c; (c = next.fetch_add(1)) < chunks;) {
      try {
        fn(c, c * chunk, std::min(n, (c + 1) * chunk));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (workers <= 1 || chunks <= 1) {
    run();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, chunks); ++w) pool.emplace_back(run);
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

/// Iterative signed-gradient attack. With steps = 1, step = eps, no MI/DI it is fgsm_step.
template <Scalar T>
AdversarialBatch<T> ifgsm(const Model<T>& m, const PathConfig& path, const Tensor<T>& x, std::span<const int> y,
                          const AttackConfig& cfg) {
  cfg.validate();
  validate_path(path, m.sites());
  if (x.rank() != 4 || x.dim(0) != y.size()) throw InvalidArgument("ifgsm: image/label count mismatch");
  for (int label : y)
    if (label < 0 || static_cast<std::size_t>(label) >= m.spec().classes)
      throw InvalidArgument("ifgsm: label " + std::to_string(label) + " out of range");
  AdversarialBatch<T> out{x, x, std::vector<int>(y.begin(), y.end()), {}, {}, 0, 0.0};
  const std::size_t n = x.dim(0), stride = n ? x.size() / n : 0;
  std::vector<std::size_t> violations((n + cfg.chunk_size - 1) / cfg.chunk_size, 0);
  std::vector<double> max_linf(violations.size(), 0.0);
  const T eta = static_cast<T>(cfg.eta());

  detail::for_each_chunk(n, cfg.chunk_size, cfg.workers, [&](std::size_t chunk, std::size_t b, std::size_t e) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(chunk)};
    std::mt19937_64 rng(seq);
    const Tensor<T> x0 = x.slice(b, e);
    const std::span<const int> yc = y.subspan(b, e - b);
    Tensor<T> adv = x0;
    Tensor<T> accum(x0.shape());
    const std::size_t per = stride;
    for (std::size_t t = 0; t < cfg.steps; ++t) {
      Tensor<T> grad;
      if (cfg.di_probability > 0) {
        DiTransform di(adv.shape(), cfg.di_probability, cfg.di_min_scale, rng);
        grad = di.adjoint(input_gradient(m, path, di.apply(adv), yc));
      } else {
        grad = input_gradient(m, path, adv, yc);
      }
      if (cfg.momentum > 0) {
        for (std::size_t i = 0; i < e - b; ++i) {
          double l1 = 0;
          for (std::size_t k = 0; k < per; ++k) l1 += std::abs(static_cast<double>(grad[i * per + k]));
          const T inv = l1 > 0 ? static_cast<T>(1.0 / l1) : T(0);
          for (std::size_t k = 0; k < per; ++k)
            accum[i * per + k] = static_cast<T>(cfg.momentum) * accum[i * per + k] + grad[i * per + k] * inv;
        }
        grad = accum;
      }
      const Tensor<T> s = sign(grad);
      for (std::size_t i = 0; i < adv.size(); ++i) adv[i] += eta * s[i];
      adv = project_linf(adv, x0, cfg.epsilon, cfg.lower, cfg.upper);
      detail::record_constraints(adv, x0, cfg, violations[chunk], max_linf[chunk]);
    }
    std::copy(adv.storage().begin(), adv.storage().end(), out.x_adv.data() + b * stride);
  });
  for (std::size_t c = 0; c < violations.size(); ++c) {
    out.constraint_violations += violations[c];
    out.max_linf = std::max(out.max_linf, max_linf[c]);
  }
  return out;
}

struct AsrOptions {
  bool only_clean_correct = false;  // restrict to examples the victim classifies correctly when clean
};

/// Fraction of adversarial examples the victim misclassifies (argmax ties -> lowest class).
template <Scalar T, Scalar U>
double attack_success_rate(const Model<U>& victim, AdversarialBatch<T>& batch, const std::string& victim_name = "victim",
                           AsrOptions opts = {}) {
  if (batch.y.empty()) throw InvalidArgument("attack_success_rate: empty batch");
  const auto& s = victim.spec();
  if (batch.x_adv.dim(1) != s.channels || batch.x_adv.dim(2) != s.height || batch.x_adv.dim(3) != s.width)
    throw ConfigError("victim '" + victim_name + "' input shape does not match the batch");
  const auto pred = predict(victim, batch.x_adv.template cast<U>());
  std::vector<int> clean;
  if (opts.only_clean_correct) clean = predict(victim, batch.x.template cast<U>());
  batch.success.assign(pred.size(), 0);
  batch.success_model = victim_name;
  std::size_t hits = 0, counted = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    batch.success[i] = pred[i] != batch.y[i];
    if (opts.only_clean_correct && clean[i] != batch.y[i]) continue;
    ++counted;
    hits += batch.success[i];
  }
  return counted ? static_cast<double>(hits) / static_cast<double>(counted) : 0.0;
}

template <Scalar T>
Container batch_container(const AdversarialBatch<T>& b, const AttackConfig& cfg, const std::string& path_hash_hex) {
  Container c;
  c.header = {{"kind", "adversarial-batch"}, {"attack", cfg}, {"path_hash", path_hash_hex}};
  c.tensors.emplace_back("x", b.x.template cast<float>());
  c.tensors.emplace_back("x_adv", b.x_adv.template cast<float>());
  c.tensors.emplace_back("y", labels_tensor(b.y));
  return c;
}

inline AdversarialBatch<float> batch_from_container(const Container& c) {
  if (c.header.value("kind", "") != "adversarial-batch") throw FormatError("container is not an adversarial batch");
  AdversarialBatch<float> b;
  b.x = c.tensor("x");
  b.x_adv = c.tensor("x_adv");
  b.y = labels_from_tensor(c.tensor("y"));
  if (b.x.shape() != b.x_adv.shape() || b.x.dim(0) != b.y.size()) throw FormatError("adversarial batch tensors disagree in shape");
  return b;
}

}  // namespace pas

#endif  // PAS_ATTACKS_HPP
