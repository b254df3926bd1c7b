// SPDX-License-Identifier: Apache-2.0
//
// Encoder building blocks with hand-derived backward passes.
//
// Layers do not cache activations: backward() takes the same input that was
// given to forward(). Parameter gradients accumulate until zero_grad().

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdn/kernels/geometry.hpp"
#include "gdn/param.hpp"
#include "gdn/random.hpp"
#include "gdn/tensor.hpp"

namespace gdn {

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  // Square odd kernel; weights (out_c, in_c, k, k), bias per output channel.
  Conv2d(std::size_t in_c, std::size_t out_c, std::size_t k, std::size_t stride = 1, std::size_t pad = 0,
         std::size_t dilation = 1);

  [[nodiscard]] kernels::ConvGeometry geometry(const Shape4& in) const;

  BasicTensor<T> forward(const BasicTensor<T>& x) const;
  // Returns grad_x (empty when want_grad_x is false) and accumulates weight/bias gradients.
  BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_y, bool want_grad_x = true);

  // He-uniform weights, zero bias.
  void init_he(Rng& rng);
  void zero_grad();
  void collect(ParamList<T>& out, const std::string& name, const std::string& group);

  [[nodiscard]] std::size_t in_channels() const { return in_c_; }
  [[nodiscard]] std::size_t out_channels() const { return out_c_; }
  [[nodiscard]] std::size_t kernel() const { return k_; }
  [[nodiscard]] std::size_t dilation() const { return dilation_; }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  std::size_t in_c_ = 0, out_c_ = 0, k_ = 1, stride_ = 1, pad_ = 0, dilation_ = 1;
};

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x);

// Gradient gate taken from the forward input (or output, equivalently): x > 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_y);

// 2x2 / stride-2 max pooling. Odd trailing rows/columns are replicate-padded;
// ties go to the lowest flat input index.
template <typename T>
struct MaxPoolResult {
  BasicTensor<T> y;
  std::vector<std::uint32_t> argmax;  // flat index into the input, per output element
  Shape4 in_shape;
};

template <typename T>
MaxPoolResult<T> maxpool2_forward(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> maxpool2_backward(const MaxPoolResult<T>& fwd, const BasicTensor<T>& grad_y);

// Fully-connected layer on row-batched inputs (batch x in_dim).
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in_dim, std::size_t out_dim);

  BasicMatrix<T> forward(const BasicMatrix<T>& x) const;
  BasicMatrix<T> backward(const BasicMatrix<T>& x, const BasicMatrix<T>& grad_y);

  // Glorot-uniform weights, zero bias.
  void init_glorot(Rng& rng);
  void zero_grad();
  void collect(ParamList<T>& out, const std::string& name, const std::string& group);

  [[nodiscard]] std::size_t in_dim() const { return in_; }
  [[nodiscard]] std::size_t out_dim() const { return out_; }

  Parameter<T> weight;  // (1, 1, out, in)
  Parameter<T> bias;    // (1, 1, 1, out)

 private:
  std::size_t in_ = 0, out_ = 0;
};

// Learnable transposed convolution ("backwards convolution") followed by a
// symmetric center crop; an odd leftover pixel goes to the bottom/right.
template <typename T>
class TransposedConv2d {
 public:
  TransposedConv2d() = default;
  TransposedConv2d(std::size_t in_c, std::size_t out_c, std::size_t k, std::size_t stride);

  [[nodiscard]] kernels::TconvGeometry geometry(const Shape4& in) const;

  BasicTensor<T> forward(const BasicTensor<T>& x, std::size_t target_h, std::size_t target_w) const;
  BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_y, bool want_grad_x = true);

  // Per-channel bilinear kernels on the diagonal (in_c == out_c), zero elsewhere.
  void init_bilinear();
  void zero_grad();
  void collect(ParamList<T>& out, const std::string& name, const std::string& group);

  [[nodiscard]] std::size_t stride() const { return stride_; }
  [[nodiscard]] std::size_t kernel() const { return k_; }

  Parameter<T> weight;  // (in_c, out_c, k, k)

 private:
  void check_target(const Shape4& in, std::size_t target_h, std::size_t target_w) const;

  std::size_t in_c_ = 0, out_c_ = 0, k_ = 1, stride_ = 1;
};

// 1-D bilinear upsampling kernel taps of length k for stride (k + 1) / 2.
std::vector<double> bilinear_kernel_1d(std::size_t k);

}  // namespace gdn
