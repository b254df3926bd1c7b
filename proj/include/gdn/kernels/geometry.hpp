// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gdn::kernels {

// Cross-correlation geometry for one batch item.
struct ConvGeometry {
  std::size_t in_c = 1, in_h = 1, in_w = 1;
  std::size_t out_c = 1;
  std::size_t k_h = 1, k_w = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t dilation = 1;

  [[nodiscard]] std::size_t extent_h() const { return (k_h - 1) * dilation + 1; }
  [[nodiscard]] std::size_t extent_w() const { return (k_w - 1) * dilation + 1; }
  [[nodiscard]] std::size_t out_h() const { return (in_h + 2 * pad - extent_h()) / stride + 1; }
  [[nodiscard]] std::size_t out_w() const { return (in_w + 2 * pad - extent_w()) / stride + 1; }
  [[nodiscard]] std::size_t patch() const { return in_c * k_h * k_w; }

  void validate() const {
    if (stride == 0 || dilation == 0) throw std::invalid_argument("stride and dilation must be >= 1");
    if (in_h + 2 * pad < extent_h() || in_w + 2 * pad < extent_w()) {
      throw std::invalid_argument("kernel extent " + std::to_string(extent_h()) + "x" +
                                  std::to_string(extent_w()) + " larger than padded input " +
                                  std::to_string(in_h + 2 * pad) + "x" + std::to_string(in_w + 2 * pad));
    }
  }
};

// Transposed convolution without padding: the full (uncropped) output is
// ((h - 1) * stride + k) per spatial axis.
struct TconvGeometry {
  std::size_t in_c = 1, in_h = 1, in_w = 1;
  std::size_t out_c = 1;
  std::size_t k = 1;
  std::size_t stride = 1;

  [[nodiscard]] std::size_t full_h() const { return (in_h - 1) * stride + k; }
  [[nodiscard]] std::size_t full_w() const { return (in_w - 1) * stride + k; }

  // The adjoint convolution: maps the full output back to the input grid.
  [[nodiscard]] ConvGeometry adjoint() const {
    return ConvGeometry{out_c, full_h(), full_w(), in_c, k, k, stride, 0, 1};
  }
};

// Separable global interpolation y = Kh * x * Kw^T applied to `maps` planes.
struct GlobalDeconvGeometry {
  std::size_t maps = 1;
  std::size_t in_h = 1, in_w = 1;
  std::size_t out_h = 1, out_w = 1;
};

}  // namespace gdn::kernels
