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

#ifndef PAS_TRAIN_HPP
#define PAS_TRAIN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "pas/common.hpp"
#include "pas/dataset.hpp"
#include "pas/model.hpp"
#include "pas/ops.hpp"

namespace pas {

struct TrainConfig {
  std::size_t epochs = 12;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 1;

  void validate() const {
    if (epochs == 0 || batch_size == 0 || !(learning_rate > 0) || !(momentum > 0) || !(weight_decay > 0))
      throw ConfigError("train config: epochs, batch size, learning rate, momentum and weight decay must be positive");
  }
};

struct TrainMetrics {
  std::vector<double> epoch_loss;        // mean train loss per epoch
  std::vector<double> heldout_accuracy;  // per epoch; empty when no held-out set was given
  std::vector<double> first_epoch_batch_loss;
};

/// Predicted classes, evaluated in chunks of `batch`.
template <Scalar T>
std::vector<int> predict(const Model<T>& m, const Tensor<T>& images, std::size_t batch = 128) {
  std::vector<int> out;
  out.reserve(images.dim(0));
  for (std::size_t b = 0; b < images.dim(0); b += batch) {
    const auto pred = argmax_rows(forward(m, images.slice(b, std::min(images.dim(0), b + batch))).logits);
    out.insert(out.end(), pred.begin(), pred.end());
  }
  return out;
}

template <Scalar T>
double accuracy(const Model<T>& m, const Dataset& d) {
  if (d.size() == 0) throw InvalidArgument("accuracy: empty dataset");
  const auto pred = predict(m, d.images.template cast<T>());
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == d.labels[i];
  return static_cast<double>(ok) / static_cast<double>(d.size());
}

/// SGD with momentum, L2 weight decay on weights (not the head bias) and cosine
/// learning-rate decay over the run. Deterministic given cfg.seed.
template <Scalar T>
TrainMetrics train(Model<T>& m, const Dataset& data, const TrainConfig& cfg, const Dataset* heldout = nullptr,
                   const std::function<void(std::size_t, double, double)>& on_epoch = {}) {
  cfg.validate();
  if (data.size() == 0) throw InvalidArgument("train: empty dataset");
  TrainMetrics metrics;
  std::mt19937_64 rng(cfg.seed);
  std::vector<Tensor<T>> velocity;
  for (const auto& p : m.params()) velocity.emplace_back(p.value.shape());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const Tensor<T> images = data.images.template cast<T>();
  const std::size_t stride = images.size() / data.size();
  const std::size_t steps_per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  const double total_steps = static_cast<double>(cfg.epochs * steps_per_epoch);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    for (std::size_t b = 0; b < data.size(); b += cfg.batch_size, ++step) {
      const std::size_t n = std::min(cfg.batch_size, data.size() - b);
      Shape s = images.shape();
      s[0] = n;
      Tensor<T> x(s);
      std::vector<int> y(n);
      for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(images.data() + order[b + i] * stride, stride, x.data() + i * stride);
        y[i] = data.labels[order[b + i]];
      }
      auto fw = forward(m, x);
      auto loss = softmax_cross_entropy(fw.logits, y);
      loss_sum += static_cast<double>(loss.loss) * static_cast<double>(n);
      if (epoch == 0) metrics.first_epoch_batch_loss.push_back(loss.loss);
      auto grads = backward_standard(m, fw.tape, loss.grad_logits);
      const double lr = 0.5 * cfg.learning_rate * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total_steps));
      for (std::size_t i = 0; i < m.params().size(); ++i) {
        auto& p = m.params()[i].value;
        auto& v = velocity[i];
        const auto& g = grads.params[i];
        const T wd = i == m.head_bias() ? T(0) : static_cast<T>(cfg.weight_decay);
        for (std::size_t k = 0; k < p.size(); ++k) {
          v[k] = static_cast<T>(cfg.momentum) * v[k] + g[k] + wd * p[k];
          p[k] -= static_cast<T>(lr) * v[k];
        }
      }
    }
    metrics.epoch_loss.push_back(loss_sum / static_cast<double>(data.size()));
    const double acc = heldout && heldout->size() ? accuracy(m, *heldout) : -1.0;
    if (acc >= 0) metrics.heldout_accuracy.push_back(acc);
    if (on_epoch) on_epoch(epoch, metrics.epoch_loss.back(), acc);
  }
  return metrics;
}

}  // namespace pas

#endif  // PAS_TRAIN_HPP
