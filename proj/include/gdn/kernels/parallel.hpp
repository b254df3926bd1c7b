// SPDX-License-Identifier: Apache-2.0
//
// OpenMP + Eigen GEMM kernels used by the layers. Signatures mirror
// gdn/kernels/serial.hpp.
//
// Work is split over batch items (or feature maps). Parameter gradients are
// computed into per-item buffers and then summed in item order, so results do
// not depend on the thread count.

#pragma once

#include <span>

#include "gdn/kernels/geometry.hpp"

namespace gdn::kernels {

// Thin row-major GEMM wrapper: c = alpha * op(a) * op(b) + beta * c.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

void set_num_threads(int n);
int max_threads();

namespace parallel {

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
            std::size_t n);

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::size_t batch, std::span<const T> x, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> y);

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::size_t batch, std::span<const T> x, std::span<const T> weight,
                     std::span<const T> grad_y, std::span<T> grad_x, std::span<T> grad_w, std::span<T> grad_b);

template <typename T>
void tconv2d_forward(const TconvGeometry& g, std::size_t batch, std::span<const T> x, std::span<const T> weight,
                     std::span<T> y);

template <typename T>
void tconv2d_backward(const TconvGeometry& g, std::size_t batch, std::span<const T> x, std::span<const T> weight,
                      std::span<const T> grad_y, std::span<T> grad_x, std::span<T> grad_w);

template <typename T>
void global_deconv_forward(const GlobalDeconvGeometry& g, std::span<const T> x, std::span<const T> kh,
                           std::span<const T> kw, std::span<T> y);

template <typename T>
void global_deconv_backward(const GlobalDeconvGeometry& g, std::span<const T> x, std::span<const T> kh,
                            std::span<const T> kw, std::span<const T> grad_y, std::span<T> grad_x,
                            std::span<T> grad_kh, std::span<T> grad_kw);

}  // namespace parallel
}  // namespace gdn::kernels
