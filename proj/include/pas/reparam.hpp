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

#ifndef PAS_REPARAM_HPP
#define PAS_REPARAM_HPP

// Gamma-weighted rewiring of the backward pass. The forward pass is never
// altered: every decomposition below only changes which terms carry gradient.
//
//   conv       k = I + (k - I)            grad = bwd(I) + g * bwd(k - I)
//   activation relu(z) = a(z + relu(-z)) + (1 - a) relu(z)
//                                         grad = l * g_out + (1 - l) * g_out * mask,  l = g * a
//   residual   z + f(z)                   grad = g_out + g * bwd_f(g_out)
//
// where g is the site's decay weight and a is the sparsity estimate
// ||mask||_2 / ||z||_2.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pas/common.hpp"
#include "pas/ops.hpp"
#include "pas/tensor.hpp"

namespace pas {

enum class SiteKind { conv, activation, residual };

inline std::string_view to_string(SiteKind k) {
  switch (k) {
    case SiteKind::conv: return "conv";
    case SiteKind::activation: return "activation";
    case SiteKind::residual: return "residual";
  }
  return "?";
}

inline SiteKind parse_site_kind(std::string_view s) {
  if (s == "conv") return SiteKind::conv;
  if (s == "activation") return SiteKind::activation;
  if (s == "residual") return SiteKind::residual;
  throw FormatError("unknown site kind '" + std::string(s) + "'");
}

/// One reparameterizable position in the forward graph. Ids follow topological order.
struct SiteDescriptor {
  std::size_t site_id = 0;
  SiteKind kind = SiteKind::conv;
  std::string layer_name;
  double depth_fraction = 0.0;

  friend bool operator==(const SiteDescriptor&, const SiteDescriptor&) = default;
};

/// Decay weight per site (the searched object).
struct PathConfig {
  std::map<std::size_t, double> gammas;

  double gamma(std::size_t site) const {
    auto it = gammas.find(site);
    if (it == gammas.end()) throw InvalidArgument("path has no gamma for site " + std::to_string(site));
    return it->second;
  }

  friend bool operator==(const PathConfig&, const PathConfig&) = default;
};

/// Conv and residual sites at 1, activation sites at 0: ordinary backpropagation.
inline PathConfig identity_path_config(const std::vector<SiteDescriptor>& sites) {
  PathConfig p;
  for (const auto& s : sites) p.gammas[s.site_id] = s.kind == SiteKind::activation ? 0.0 : 1.0;
  return p;
}

/// Throws InvalidArgument listing every site of `sites` the path does not cover, or whose gamma is outside [0,1].
inline void validate_path(const PathConfig& path, const std::vector<SiteDescriptor>& sites) {
  std::string missing;
  for (const auto& s : sites) {
    auto it = path.gammas.find(s.site_id);
    if (it == path.gammas.end()) {
      missing += (missing.empty() ? "" : ",") + std::to_string(s.site_id);
    } else if (!(it->second >= 0.0 && it->second <= 1.0)) {
      throw InvalidArgument("gamma for site " + std::to_string(s.site_id) + " outside [0,1]");
    }
  }
  if (!missing.empty()) throw InvalidArgument("path is missing site_ids: " + missing);
}

inline void check_gamma(const char* op, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw InvalidArgument(std::string(op) + ": gamma " + std::to_string(gamma) + " outside [0,1]");
}

/// Skip kernel: 1 at the spatial centre for every (out, in) pair, 0 elsewhere.
template <Scalar T>
Tensor<T> make_skip_kernel(const ConvSpec& spec) {
  if (spec.kernel_h % 2 == 0 || spec.kernel_w % 2 == 0)
    throw UnsupportedConfiguration("skip kernel needs odd kernel size, got " + std::to_string(spec.kernel_h) + "x" +
                                   std::to_string(spec.kernel_w));
  Tensor<T> k(spec.kernel_shape());
  const std::size_t ch = spec.kernel_h / 2, cw = spec.kernel_w / 2;
  for (std::size_t o = 0; o < spec.out_channels; ++o)
    for (std::size_t c = 0; c < spec.in_channels; ++c) k.at(o, c, ch, cw) = T(1);
  return k;
}

/// gamma * k + (1 - gamma) * I. Exactly k at gamma = 1 and exactly I at gamma = 0.
template <Scalar T>
Tensor<T> blend_with_skip_kernel(const Tensor<T>& kernel, const Tensor<T>& skip, double gamma) {
  Tensor<T> k(kernel.shape());
  const T g = static_cast<T>(gamma), rest = static_cast<T>(1.0 - gamma);
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = g * kernel[i] + rest * skip[i];
  return k;
}

/// bwd(grad_out; I) + gamma * bwd(grad_out; k - I), evaluated as a single transposed
/// convolution with the blended kernel (equal by linearity in the kernel).
template <Scalar T>
Tensor<T> skipconv_backward_input(const Tensor<T>& grad_out, const Shape& input_shape, const Tensor<T>& kernel,
                                  const ConvSpec& spec, double gamma) {
  check_gamma("skipconv_backward_input", gamma);
  if (gamma == 1.0) return conv2d_backward_input(grad_out, kernel, spec, input_shape);
  const Tensor<T> skip = make_skip_kernel<T>(spec);
  if (gamma == 0.0) return conv2d_backward_input(grad_out, skip, spec, input_shape);
  return conv2d_backward_input(grad_out, blend_with_skip_kernel(kernel, skip, gamma), spec, input_shape);
}

/// ||mask||_2 / ||z||_2 over the flattened tensor, clamped to [0,1]; 0 when z is all zeros.
template <Scalar T>
double linrelu_alpha(const Tensor<T>& preactivation, const Tensor<T>& mask) {
  double zz = 0, mm = 0;
  for (std::size_t i = 0; i < preactivation.size(); ++i) {
    zz += static_cast<double>(preactivation[i]) * static_cast<double>(preactivation[i]);
    mm += static_cast<double>(mask[i]) * static_cast<double>(mask[i]);
  }
  if (zz == 0.0) return 0.0;
  return std::clamp(std::sqrt(mm) / std::sqrt(zz), 0.0, 1.0);
}

template <Scalar T>
struct ActivationSiteRecord {
  Tensor<T> mask;
  double alpha_hat = 0.0;

  friend bool operator==(const ActivationSiteRecord&, const ActivationSiteRecord&) = default;
};

template <Scalar T>
Tensor<T> linrelu_backward(const Tensor<T>& grad_out, const ActivationSiteRecord<T>& record, double gamma) {
  check_gamma("linrelu_backward", gamma);
  if (grad_out.shape() != record.mask.shape()) throw InvalidArgument("linrelu_backward: grad/mask shape mismatch");
  const T lambda = static_cast<T>(gamma * record.alpha_hat);
  const T rest = T(1) - lambda;
  Tensor<T> g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = lambda * grad_out[i] + rest * grad_out[i] * record.mask[i];
  return g;
}

/// grad_out + gamma * branch_backward(grad_out). The branch is skipped entirely at gamma = 0.
template <Scalar T, typename BranchBackward>
Tensor<T> skipgrad_backward(const Tensor<T>& grad_out, BranchBackward&& branch_backward, double gamma) {
  check_gamma("skipgrad_backward", gamma);
  Tensor<T> g = grad_out;
  if (gamma == 0.0) return g;
  const Tensor<T> branch = branch_backward(grad_out);
  if (branch.shape() != grad_out.shape()) throw InvalidArgument("skipgrad_backward: branch gradient shape mismatch");
  axpy(g, branch, static_cast<T>(gamma));
  return g;
}

// ---------------------------------------------------------------------------
// Path file format
//
//   #pas-path v1
//   site_id<TAB>kind<TAB>layer_name<TAB>gamma
//
// gamma uses the shortest decimal that round-trips to the same double.

inline std::string format_shortest(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

inline void write_path_config(std::ostream& os, const std::vector<SiteDescriptor>& sites, const PathConfig& path) {
  validate_path(path, sites);
  os << "#pas-path v1\n";
  for (const auto& s : sites)
    os << s.site_id << '\t' << to_string(s.kind) << '\t' << s.layer_name << '\t' << format_shortest(path.gamma(s.site_id))
       << '\n';
}

inline std::string path_config_text(const std::vector<SiteDescriptor>& sites, const PathConfig& path) {
  std::ostringstream os;
  write_path_config(os, sites, path);
  return os.str();
}

struct ParsedPath {
  PathConfig path;
  std::vector<SiteDescriptor> sites;  // depth_fraction left at 0; the model owns it
};

inline ParsedPath read_path_config(std::istream& is) {
  ParsedPath out;
  std::string line;
  std::int64_t offset = 0;
  if (!std::getline(is, line) || line != "#pas-path v1") throw FormatError("path file: missing '#pas-path v1' header", 0);
  offset += static_cast<std::int64_t>(line.size()) + 1;
  while (std::getline(is, line)) {
    const std::int64_t line_offset = offset;
    offset += static_cast<std::int64_t>(line.size()) + 1;
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (std::size_t pos; (pos = rest.find('\t')) != std::string_view::npos; rest.remove_prefix(pos + 1))
      fields.push_back(rest.substr(0, pos));
    fields.push_back(rest);
    if (fields.size() != 4) throw FormatError("path file: expected 4 tab-separated fields", line_offset);
    SiteDescriptor s;
    double gamma = 0;
    auto r1 = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), s.site_id);
    auto r2 = std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(), gamma);
    if (r1.ec != std::errc{} || r1.ptr != fields[0].data() + fields[0].size() || r2.ec != std::errc{} ||
        r2.ptr != fields[3].data() + fields[3].size())
      throw FormatError("path file: malformed number", line_offset);
    s.kind = parse_site_kind(fields[1]);
    s.layer_name = std::string(fields[2]);
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw FormatError("path file: gamma outside [0,1]", line_offset);
    if (!out.path.gammas.emplace(s.site_id, gamma).second) throw FormatError("path file: duplicate site id", line_offset);
    out.sites.push_back(std::move(s));
  }
  return out;
}

/// Check a parsed path against a model's sites (same ids, kinds and names).
inline void check_path_matches(const ParsedPath& parsed, const std::vector<SiteDescriptor>& sites) {
  validate_path(parsed.path, sites);
  if (parsed.sites.size() != sites.size())
    throw ConfigError("path file has " + std::to_string(parsed.sites.size()) + " sites, model has " +
                      std::to_string(sites.size()));
  for (const auto& p : parsed.sites) {
    const auto& s = sites.at(p.site_id);
    if (s.kind != p.kind || s.layer_name != p.layer_name)
      throw ConfigError("path site " + std::to_string(p.site_id) + " (" + p.layer_name + ") does not match model site " +
                        s.layer_name);
  }
}

/// FNV-1a 64 of the path text, as 16 hex digits.
inline std::string path_hash(const std::vector<SiteDescriptor>& sites, const PathConfig& path) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : path_config_text(sites, path)) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pas

#endif  // PAS_REPARAM_HPP
