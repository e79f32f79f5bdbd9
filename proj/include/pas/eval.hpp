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

#ifndef PAS_EVAL_HPP
#define PAS_EVAL_HPP

// Transfer matrices, integrated-gradients attribution and gamma-vs-depth reports.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pas/attacks.hpp"
#include "pas/checkpoint.hpp"
#include "pas/common.hpp"
#include "pas/dataset.hpp"
#include "pas/model.hpp"
#include "pas/reparam.hpp"

namespace pas {

struct TransferMatrix {
  std::vector<std::string> rows;     // "<surrogate>/<attack>" labels
  std::vector<std::string> columns;  // victim names
  std::vector<std::vector<double>> cells;
  nlohmann::json metadata;

  double at(std::size_t r, std::size_t c) const { return cells.at(r).at(c); }
};

template <Scalar T>
struct TransferRow {
  std::string name;
  const Model<T>* surrogate = nullptr;
  PathConfig path;
  AttackConfig attack;
};

template <Scalar T>
struct Victim {
  std::string name;
  const Model<T>* model = nullptr;
};

/// ASR of every victim on the same adversarial batch.
template <Scalar T>
std::vector<double> score_batch(AdversarialBatch<T>& batch, std::span<const Victim<T>> victims, AsrOptions opts = {}) {
  std::vector<double> out;
  for (const auto& v : victims) out.push_back(attack_success_rate(*v.model, batch, v.name, opts));
  return out;
}

/// One adversarial batch per row, scored against every victim column.
template <Scalar T>
TransferMatrix transfer_matrix(std::span<const TransferRow<T>> rows, std::span<const Victim<T>> victims,
                               const Dataset& data, AsrOptions opts = {},
                               std::vector<AdversarialBatch<T>>* batches = nullptr) {
  TransferMatrix tm;
  for (const auto& v : victims) {
    const auto& s = v.model->spec();
    if (data.images.dim(1) != s.channels || data.images.dim(2) != s.height || data.images.dim(3) != s.width)
      throw ConfigError("victim '" + v.name + "' expects input " + shape_str(s.input_shape(1)) + ", data is " +
                        shape_str(data.images.shape()));
    tm.columns.push_back(v.name);
  }
  const Tensor<T> x = data.images.template cast<T>();
  nlohmann::json row_meta = nlohmann::json::array();
  for (const auto& r : rows) {
    auto batch = ifgsm(*r.surrogate, r.path, x, data.labels, r.attack);
    tm.rows.push_back(r.name);
    tm.cells.push_back(score_batch<T>(batch, victims, opts));
    row_meta.push_back({{"name", r.name}, {"attack", r.attack}, {"path_hash", path_hash(r.surrogate->sites(), r.path)}});
    if (batches) batches->push_back(std::move(batch));
  }
  tm.metadata = {{"rows", row_meta}, {"examples", data.size()}, {"only_clean_correct", opts.only_clean_correct}};
  return tm;
}

inline void write_transfer_csv(std::ostream& os, const TransferMatrix& tm) {
  os << "row";
  for (const auto& c : tm.columns) os << ',' << c;
  os << '\n';
  for (std::size_t r = 0; r < tm.rows.size(); ++r) {
    os << tm.rows[r];
    for (double v : tm.cells[r]) os << ',' << format_shortest(v);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------

struct AttributionConfig {
  std::size_t steps = 64;
};

/// Gradient of logit `target` with respect to one image (batch of 1), through `path`.
template <Scalar T>
Tensor<T> logit_gradient(const Model<T>& m, const PathConfig& path, const Tensor<T>& x, std::size_t target) {
  auto fw = forward(m, x);
  Tensor<T> g(fw.logits.shape());
  for (std::size_t i = 0; i < x.dim(0); ++i) g[i * m.spec().classes + target] = T(1);
  return backward_with_path(m, fw.tape, g, path);
}

/// Integrated gradients against the all-zero baseline, right Riemann sum with cfg.steps
/// points. Each point is its own forward pass so the sparsity estimates are per point.
template <Scalar T>
Tensor<T> integrated_gradients(const Model<T>& m, const PathConfig& path, const Tensor<T>& x, std::size_t target,
                               const AttributionConfig& cfg = {}) {
  if (cfg.steps < 1) throw InvalidArgument("integrated_gradients: steps must be >= 1");
  if (x.rank() != 4 || x.dim(0) != 1) throw InvalidArgument("integrated_gradients: expects a single image (1,C,H,W)");
  if (target >= m.spec().classes) throw InvalidArgument("integrated_gradients: target class out of range");
  Tensor<T> total(x.shape());
  bool all_zero = std::all_of(x.values().begin(), x.values().end(), [](T v) { return v == T(0); });
  if (all_zero) return total;
  for (std::size_t k = 1; k <= cfg.steps; ++k) {
    const T a = static_cast<T>(static_cast<double>(k) / static_cast<double>(cfg.steps));
    Tensor<T> point = scaled(x, a);
    axpy(total, logit_gradient(m, path, point, target));
  }
  for (std::size_t i = 0; i < total.size(); ++i) total[i] = x[i] * total[i] / static_cast<T>(cfg.steps);
  return total;
}

struct GammaDepthRow {
  std::size_t site_id;
  double depth_fraction;
  SiteKind kind;
  std::string layer_name;
  double gamma;
};

template <Scalar T>
std::vector<GammaDepthRow> gamma_depth_report(const Model<T>& m, const PathConfig& path) {
  validate_path(path, m.sites());
  std::vector<GammaDepthRow> rows;
  for (const auto& s : m.sites()) rows.push_back({s.site_id, s.depth_fraction, s.kind, s.layer_name, path.gamma(s.site_id)});
  return rows;
}

inline void write_gamma_depth_csv(std::ostream& os, const std::vector<GammaDepthRow>& rows) {
  os << "site_id,depth_fraction,kind,layer_name,gamma\n";
  for (const auto& r : rows)
    os << r.site_id << ',' << format_shortest(r.depth_fraction) << ',' << to_string(r.kind) << ',' << r.layer_name << ','
       << format_shortest(r.gamma) << '\n';
}

struct Heatmap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> raw;           // per-pixel sum over channels of |attribution|
  std::vector<std::uint8_t> pixels;  // min-max normalized to [0,255]
};

template <Scalar T>
Heatmap make_heatmap(const Tensor<T>& attribution) {
  Shape s = attribution.shape();
  if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
  if (s.size() != 3) throw InvalidArgument("heatmap: attribution must be (C,H,W) or (1,C,H,W)");
  Heatmap h{s[2], s[1], std::vector<double>(s[1] * s[2], 0.0), {}};
  for (std::size_t c = 0; c < s[0]; ++c)
    for (std::size_t p = 0; p < h.raw.size(); ++p) h.raw[p] += std::abs(static_cast<double>(attribution[c * h.raw.size() + p]));
  const auto [lo, hi] = std::minmax_element(h.raw.begin(), h.raw.end());
  const double range = *hi - *lo;
  h.pixels.resize(h.raw.size());
  for (std::size_t p = 0; p < h.raw.size(); ++p)
    h.pixels[p] = range > 0 ? static_cast<std::uint8_t>(std::lround(255.0 * (h.raw[p] - *lo) / range)) : 0;
  return h;
}

inline std::string encode_pgm(const Heatmap& h) {
  std::string out = "P5\n" + std::to_string(h.width) + " " + std::to_string(h.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(h.pixels.data()), h.pixels.size());
  return out;
}

/// Writes `pgm_path` (binary P5) and a CSV of the unnormalized values next to it.
template <Scalar T>
Heatmap export_heatmap(const Tensor<T>& attribution, const std::filesystem::path& pgm_path) {
  Heatmap h = make_heatmap(attribution);
  write_file_bytes(pgm_path, encode_pgm(h));
  std::ostringstream csv;
  for (std::size_t y = 0; y < h.height; ++y) {
    for (std::size_t x = 0; x < h.width; ++x) csv << (x ? "," : "") << format_shortest(h.raw[y * h.width + x]);
    csv << '\n';
  }
  auto csv_path = pgm_path;
  csv_path.replace_extension(".csv");
  write_file_bytes(csv_path, csv.str());
  return h;
}

}  // namespace pas

#endif  // PAS_EVAL_HPP
