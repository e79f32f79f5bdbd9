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

#ifndef PAS_OPS_HPP
#define PAS_OPS_HPP

// Forward/backward primitives. Convolutions lower to im2col + GEMM; every
// backward is the exact adjoint of its forward.

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pas/common.hpp"
#include "pas/tensor.hpp"

namespace pas {

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;

  Shape kernel_shape() const { return {out_channels, in_channels, kernel_h, kernel_w}; }

  std::size_t out_size(std::size_t in, std::size_t kernel) const {
    if (stride == 0) throw InvalidArgument("conv: stride must be positive");
    if (in + 2 * padding < kernel)
      throw InvalidArgument("conv: kernel " + std::to_string(kernel) + " larger than padded input " +
                            std::to_string(in + 2 * padding));
    return (in + 2 * padding - kernel) / stride + 1;
  }
  std::size_t out_h(std::size_t in_h) const { return out_size(in_h, kernel_h); }
  std::size_t out_w(std::size_t in_w) const { return out_size(in_w, kernel_w); }

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

inline void check_dim(const char* op, const char* what, std::size_t got, std::size_t want) {
  if (got != want)
    throw InvalidArgument(std::string(op) + ": " + what + " is " + std::to_string(got) + ", expected " +
                          std::to_string(want));
}

inline void check_input(const char* op, const Shape& in, const ConvSpec& spec) {
  if (in.size() != 4) throw InvalidArgument(std::string(op) + ": input must be rank 4 (N,C,H,W), got " + shape_str(in));
  check_dim(op, "input channel dimension (dim 1)", in[1], spec.in_channels);
}

inline void check_kernel(const char* op, const Shape& k, const ConvSpec& spec) {
  if (k.size() != 4) throw InvalidArgument(std::string(op) + ": kernel must be rank 4 (O,I,KH,KW), got " + shape_str(k));
  check_dim(op, "kernel out-channel dimension (dim 0)", k[0], spec.out_channels);
  check_dim(op, "kernel in-channel dimension (dim 1)", k[1], spec.in_channels);
  check_dim(op, "kernel height (dim 2)", k[2], spec.kernel_h);
  check_dim(op, "kernel width (dim 3)", k[3], spec.kernel_w);
}

// col has shape (C*KH*KW) x (OH*OW) for one image.
template <typename T>
void im2col(const T* img, std::size_t c, std::size_t h, std::size_t w, const ConvSpec& s, std::size_t oh,
            std::size_t ow, T* col) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(s.padding);
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < s.kernel_w; ++kx, ++row) {
        T* dst = col + row * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst + oy * ow, dst + (oy + 1) * ow, T(0));
            continue;
          }
          const T* src = img + (ci * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s.stride + kx) - pad;
            dst[oy * ow + ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, std::size_t c, std::size_t h, std::size_t w, const ConvSpec& s, std::size_t oh,
            std::size_t ow, T* img) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(s.padding);
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < s.kernel_w; ++kx, ++row) {
        const T* src = col + row * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          T* dst = img + (ci * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s.stride + kx) - pad;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[ix] += src[oy * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Cross-correlation with symmetric zero padding: NCHW x OIHW -> NOHW.
template <Scalar T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernel, const ConvSpec& spec) {
  detail::check_input("conv2d_forward", input.shape(), spec);
  detail::check_kernel("conv2d_forward", kernel.shape(), spec);
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t oh = spec.out_h(h), ow = spec.out_w(w), p = oh * ow;
  const std::size_t ckk = c * spec.kernel_h * spec.kernel_w;
  Tensor<T> out({n, spec.out_channels, oh, ow});
  std::vector<T> col(ckk * p);
  detail::ConstMatMap<T> k(kernel.data(), static_cast<Eigen::Index>(spec.out_channels), static_cast<Eigen::Index>(ckk));
  for (std::size_t i = 0; i < n; ++i) {
    detail::im2col(input.data() + i * c * h * w, c, h, w, spec, oh, ow, col.data());
    detail::ConstMatMap<T> cm(col.data(), static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(p));
    detail::MatMap<T> om(out.data() + i * spec.out_channels * p, static_cast<Eigen::Index>(spec.out_channels),
                         static_cast<Eigen::Index>(p));
    om.noalias() = k * cm;
  }
  return out;
}

/// Adjoint of conv2d_forward with respect to its input (transposed convolution).
template <Scalar T>
Tensor<T> conv2d_backward_input(const Tensor<T>& grad_out, const Tensor<T>& kernel, const ConvSpec& spec,
                                const Shape& input_shape) {
  detail::check_input("conv2d_backward_input", input_shape, spec);
  detail::check_kernel("conv2d_backward_input", kernel.shape(), spec);
  const std::size_t n = input_shape[0], c = input_shape[1], h = input_shape[2], w = input_shape[3];
  const std::size_t oh = spec.out_h(h), ow = spec.out_w(w), p = oh * ow;
  const Shape expected{n, spec.out_channels, oh, ow};
  if (grad_out.shape() != expected)
    throw InvalidArgument("conv2d_backward_input: grad_out shape " + shape_str(grad_out.shape()) +
                          " does not match forward output shape " + shape_str(expected));
  const std::size_t ckk = c * spec.kernel_h * spec.kernel_w;
  Tensor<T> grad_in(input_shape);
  std::vector<T> col(ckk * p);
  detail::ConstMatMap<T> k(kernel.data(), static_cast<Eigen::Index>(spec.out_channels), static_cast<Eigen::Index>(ckk));
  for (std::size_t i = 0; i < n; ++i) {
    detail::ConstMatMap<T> gm(grad_out.data() + i * spec.out_channels * p,
                              static_cast<Eigen::Index>(spec.out_channels), static_cast<Eigen::Index>(p));
    detail::MatMap<T> cm(col.data(), static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(p));
    cm.noalias() = k.transpose() * gm;
    detail::col2im(col.data(), c, h, w, spec, oh, ow, grad_in.data() + i * c * h * w);
  }
  return grad_in;
}

/// Adjoint of conv2d_forward with respect to its kernel.
template <Scalar T>
Tensor<T> conv2d_backward_kernel(const Tensor<T>& grad_out, const Tensor<T>& input, const ConvSpec& spec) {
  detail::check_input("conv2d_backward_kernel", input.shape(), spec);
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t oh = spec.out_h(h), ow = spec.out_w(w), p = oh * ow;
  const Shape expected{n, spec.out_channels, oh, ow};
  if (grad_out.shape() != expected)
    throw InvalidArgument("conv2d_backward_kernel: grad_out shape " + shape_str(grad_out.shape()) +
                          " does not match forward output shape " + shape_str(expected));
  const std::size_t ckk = c * spec.kernel_h * spec.kernel_w;
  Tensor<T> grad_k(spec.kernel_shape());
  std::vector<T> col(ckk * p);
  detail::MatMap<T> gk(grad_k.data(), static_cast<Eigen::Index>(spec.out_channels), static_cast<Eigen::Index>(ckk));
  for (std::size_t i = 0; i < n; ++i) {
    detail::im2col(input.data() + i * c * h * w, c, h, w, spec, oh, ow, col.data());
    detail::ConstMatMap<T> cm(col.data(), static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(p));
    detail::ConstMatMap<T> gm(grad_out.data() + i * spec.out_channels * p,
                              static_cast<Eigen::Index>(spec.out_channels), static_cast<Eigen::Index>(p));
    gk.noalias() += gm * cm.transpose();
  }
  return grad_k;
}

template <Scalar T>
struct ReluResult {
  Tensor<T> output;
  Tensor<T> mask;  // 1 where input > 0, else 0
};

template <Scalar T>
ReluResult<T> relu_forward(const Tensor<T>& input) {
  ReluResult<T> r{Tensor<T>(input.shape()), Tensor<T>(input.shape())};
  for (std::size_t i = 0; i < input.size(); ++i) {
    const bool on = input[i] > T(0);
    r.output[i] = on ? input[i] : T(0);
    r.mask[i] = on ? T(1) : T(0);
  }
  return r;
}

template <Scalar T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& mask) {
  if (grad_out.shape() != mask.shape()) throw InvalidArgument("relu_backward: grad/mask shape mismatch");
  Tensor<T> g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * mask[i];
  return g;
}

/// y = x W^T + b for x: (N,F), W: (O,F), b: (O).
template <Scalar T>
Tensor<T> linear_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (input.rank() != 2 || weight.rank() != 2) throw InvalidArgument("linear_forward: input and weight must be rank 2");
  detail::check_dim("linear_forward", "weight in-feature dimension (dim 1)", weight.dim(1), input.dim(1));
  detail::check_dim("linear_forward", "bias length", bias.size(), weight.dim(0));
  const auto n = static_cast<Eigen::Index>(input.dim(0)), f = static_cast<Eigen::Index>(input.dim(1)),
             o = static_cast<Eigen::Index>(weight.dim(0));
  Tensor<T> out({input.dim(0), weight.dim(0)});
  detail::MatMap<T> om(out.data(), n, o);
  om.noalias() = detail::ConstMatMap<T>(input.data(), n, f) * detail::ConstMatMap<T>(weight.data(), o, f).transpose();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < o; ++j) om(i, j) += bias[static_cast<std::size_t>(j)];
  return out;
}

template <Scalar T>
struct LinearGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <Scalar T>
Tensor<T> linear_backward_input(const Tensor<T>& grad_out, const Tensor<T>& weight) {
  if (grad_out.rank() != 2) throw InvalidArgument("linear_backward: grad_out must be rank 2");
  detail::check_dim("linear_backward", "grad_out feature dimension (dim 1)", grad_out.dim(1), weight.dim(0));
  const auto n = static_cast<Eigen::Index>(grad_out.dim(0)), o = static_cast<Eigen::Index>(weight.dim(0)),
             f = static_cast<Eigen::Index>(weight.dim(1));
  Tensor<T> gi({grad_out.dim(0), weight.dim(1)});
  detail::MatMap<T>(gi.data(), n, f).noalias() =
      detail::ConstMatMap<T>(grad_out.data(), n, o) * detail::ConstMatMap<T>(weight.data(), o, f);
  return gi;
}

template <Scalar T>
LinearGrads<T> linear_backward(const Tensor<T>& grad_out, const Tensor<T>& input, const Tensor<T>& weight) {
  LinearGrads<T> g{linear_backward_input(grad_out, weight), Tensor<T>(weight.shape()), Tensor<T>({weight.dim(0)})};
  detail::check_dim("linear_backward", "input batch dimension (dim 0)", input.dim(0), grad_out.dim(0));
  const auto n = static_cast<Eigen::Index>(grad_out.dim(0)), o = static_cast<Eigen::Index>(weight.dim(0)),
             f = static_cast<Eigen::Index>(weight.dim(1));
  detail::ConstMatMap<T> gm(grad_out.data(), n, o);
  detail::MatMap<T>(g.weight.data(), o, f).noalias() = gm.transpose() * detail::ConstMatMap<T>(input.data(), n, f);
  for (Eigen::Index j = 0; j < o; ++j) g.bias[static_cast<std::size_t>(j)] = gm.col(j).sum();
  return g;
}

/// Spatial mean: (N,C,H,W) -> (N,C).
template <Scalar T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& input) {
  if (input.rank() != 4) throw InvalidArgument("global_avg_pool: input must be rank 4, got " + shape_str(input.shape()));
  const std::size_t nc = input.dim(0) * input.dim(1), hw = input.dim(2) * input.dim(3);
  Tensor<T> out({input.dim(0), input.dim(1)});
  for (std::size_t i = 0; i < nc; ++i) {
    T s = 0;
    for (std::size_t j = 0; j < hw; ++j) s += input[i * hw + j];
    out[i] = s / static_cast<T>(hw);
  }
  return out;
}

template <Scalar T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& grad_out, const Shape& input_shape) {
  if (input_shape.size() != 4 || grad_out.shape() != Shape{input_shape[0], input_shape[1]})
    throw InvalidArgument("global_avg_pool_backward: grad_out shape " + shape_str(grad_out.shape()) +
                          " does not match input " + shape_str(input_shape));
  const std::size_t nc = input_shape[0] * input_shape[1], hw = input_shape[2] * input_shape[3];
  Tensor<T> g(input_shape);
  for (std::size_t i = 0; i < nc; ++i) {
    const T v = grad_out[i] / static_cast<T>(hw);
    for (std::size_t j = 0; j < hw; ++j) g[i * hw + j] = v;
  }
  return g;
}

template <Scalar T>
struct LossResult {
  T loss;
  Tensor<T> grad_logits;
};

/// Mean softmax cross-entropy over the batch and its gradient (softmax - onehot) / N.
template <Scalar T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw InvalidArgument("softmax_cross_entropy: logits must be rank 2 (N,C)");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  detail::check_dim("softmax_cross_entropy", "label count", labels.size(), n);
  LossResult<T> r{T(0), Tensor<T>(logits.shape())};
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw InvalidArgument("softmax_cross_entropy: label " + std::to_string(y) + " out of range for " +
                            std::to_string(c) + " classes");
    const T* row = logits.data() + i * c;
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double z = 0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
    const double log_z = mx + std::log(z);
    total += log_z - static_cast<double>(row[y]);
    for (std::size_t j = 0; j < c; ++j) {
      const double p = std::exp(static_cast<double>(row[j]) - log_z);
      r.grad_logits[i * c + j] = static_cast<T>((p - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) / n);
    }
  }
  r.loss = static_cast<T>(total / static_cast<double>(n));
  return r;
}

/// Element-wise sign with sign(0) = 0.
template <Scalar T>
Tensor<T> sign(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = static_cast<T>((input[i] > T(0)) - (input[i] < T(0)));
  return out;
}

/// Row-wise argmax; ties resolve to the lowest index.
template <Scalar T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (logits[i * c + j] > logits[i * c + best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace pas

#endif  // PAS_OPS_HPP
