// SPDX-License-Identifier: Apache-2.0
//
// Learnable global interpolation ("global deconvolution") and the fixed
// bilinear baseline.
//
// Every feature map x_c (h x w) is mapped to y_c = Kh * x_c * Kw^T with
// Kh (H_max x h) and Kw (W_max x w) shared across channels and batch items.
// Smaller inputs are handled by running the same product with the top-left
// blocks of Kh and Kw (a SubsetView); rows are not re-normalized.

#pragma once

#include <string>

#include "gdn/param.hpp"
#include "gdn/random.hpp"
#include "gdn/tensor.hpp"

namespace gdn {

enum class Activation { kNone, kRelu };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

// Output extent (out_h, out_w) produced from coarse extent (in_h, in_w).
struct SubsetView {
  std::size_t out_h = 0;
  std::size_t out_w = 0;
  std::size_t in_h = 0;
  std::size_t in_w = 0;

  friend bool operator==(const SubsetView&, const SubsetView&) = default;
};

template <typename T>
class GlobalDeconv {
 public:
  GlobalDeconv() = default;
  GlobalDeconv(std::size_t max_out_h, std::size_t max_out_w, std::size_t in_h, std::size_t in_w,
               Activation activation = Activation::kNone);

  [[nodiscard]] std::size_t max_out_h() const { return max_out_h_; }
  [[nodiscard]] std::size_t max_out_w() const { return max_out_w_; }
  [[nodiscard]] std::size_t in_h() const { return in_h_; }
  [[nodiscard]] std::size_t in_w() const { return in_w_; }
  [[nodiscard]] Activation activation() const { return activation_; }
  [[nodiscard]] SubsetView full_view() const { return {max_out_h_, max_out_w_, in_h_, in_w_}; }

  // Requires x spatial dims == (in_h, in_w).
  BasicTensor<T> forward(const BasicTensor<T>& x) const;
  BasicTensor<T> forward_subset(const BasicTensor<T>& x, const SubsetView& view) const;

  // Returns grad_x; accumulates into Kh/Kw gradients (summed over batch, then channel).
  BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_y, bool want_grad_x = true);
  BasicTensor<T> backward_subset(const BasicTensor<T>& x, const BasicTensor<T>& grad_y, const SubsetView& view,
                                 bool want_grad_x = true);

  // Uniform in +-sqrt(6 / (rows + cols)) per matrix.
  void init_glorot(Rng& rng);
  // 1-D align-corners interpolation weights in both matrices.
  void init_bilinear();

  [[nodiscard]] BasicMatrix<T> kh() const;
  [[nodiscard]] BasicMatrix<T> kw() const;
  void set_kh(const BasicMatrix<T>& m);
  void set_kw(const BasicMatrix<T>& m);

  void zero_grad();
  void collect(ParamList<T>& out, const std::string& name, const std::string& group);

  Parameter<T> kh_param;  // (1, 1, H_max, h)
  Parameter<T> kw_param;  // (1, 1, W_max, w)

 private:
  void check_view(const Shape4& x, const SubsetView& view) const;

  std::size_t max_out_h_ = 0, max_out_w_ = 0, in_h_ = 0, in_w_ = 0;
  Activation activation_ = Activation::kNone;
};

// Pure product y_c = kh * x_c * kw^T, no activation.
template <typename T>
BasicTensor<T> global_interpolate(const BasicTensor<T>& x, const BasicMatrix<T>& kh, const BasicMatrix<T>& kw);

// Fixed align-corners bilinear upsampling computed per output pixel from its
// four neighbours. target must be >= source in both axes.
template <typename T>
BasicTensor<T> bilinear_fixed(const BasicTensor<T>& x, std::size_t target_h, std::size_t target_w);

template <typename T>
BasicTensor<T> bilinear_fixed_backward(const BasicTensor<T>& grad_y, std::size_t in_h, std::size_t in_w);

// out x in matrix of 1-D align-corners interpolation weights.
template <typename T>
BasicMatrix<T> bilinear_matrix(std::size_t out, std::size_t in);

}  // namespace gdn
