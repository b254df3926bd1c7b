// SPDX-License-Identifier: Apache-2.0
//
// Plain-loop reference kernels. These are the oracle path for the parallel
// kernels and are never called from the training loop.

#pragma once

#include <span>

#include "gdn/kernels/geometry.hpp"

namespace gdn::kernels::serial {

// c (m x n) = a (m x k) * b (k x n), row-major.
template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
            std::size_t n);

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::size_t batch, std::span<const T> x, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> y);

// grad_x is overwritten (skipped when empty); grad_w and grad_b accumulate.
template <typename T>
void conv2d_backward(const ConvGeometry& g, std::size_t batch, std::span<const T> x, std::span<const T> weight,
                     std::span<const T> grad_y, std::span<T> grad_x, std::span<T> grad_w, std::span<T> grad_b);

// Weight layout (in_c, out_c, k, k). Produces the full uncropped output.
template <typename T>
void tconv2d_forward(const TconvGeometry& g, std::size_t batch, std::span<const T> x, std::span<const T> weight,
                     std::span<T> y);

template <typename T>
void tconv2d_backward(const TconvGeometry& g, std::size_t batch, std::span<const T> x, std::span<const T> weight,
                      std::span<const T> grad_y, std::span<T> grad_x, std::span<T> grad_w);

// kh is (out_h x in_h), kw is (out_w x in_w).
template <typename T>
void global_deconv_forward(const GlobalDeconvGeometry& g, std::span<const T> x, std::span<const T> kh,
                           std::span<const T> kw, std::span<T> y);

// grad_x overwritten; grad_kh and grad_kw accumulate in map order.
template <typename T>
void global_deconv_backward(const GlobalDeconvGeometry& g, std::span<const T> x, std::span<const T> kh,
                            std::span<const T> kw, std::span<const T> grad_y, std::span<T> grad_x,
                            std::span<T> grad_kh, std::span<T> grad_kw);

}  // namespace gdn::kernels::serial
