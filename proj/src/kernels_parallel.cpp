// SPDX-License-Identifier: Apache-2.0
#include "gdn/kernels/parallel.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gdn::kernels {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstView = Eigen::Map<const RowMat<T>, Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename T>
using View = Eigen::Map<RowMat<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

// col[(ic, ky, kx), (oy, ox)] = x[ic, oy*s - p + ky*d, ox*s - p + kx*d], zero outside.
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const auto ih = static_cast<long>(g.in_h), iw = static_cast<long>(g.in_w);
  for (std::size_t ic = 0; ic < g.in_c; ++ic) {
    const T* xc = x + ic * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.k_h; ++ky) {
      for (std::size_t kx = 0; kx < g.k_w; ++kx) {
        T* row = col + ((ic * g.k_h + ky) * g.k_w + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky * g.dilation) - static_cast<long>(g.pad);
          T* dst = row + oy * ow;
          if (iy < 0 || iy >= ih) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = xc + iy * g.in_w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx * g.dilation) - static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= iw) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates col back into x (x must be zeroed by the caller).
template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* x) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const auto ih = static_cast<long>(g.in_h), iw = static_cast<long>(g.in_w);
  for (std::size_t ic = 0; ic < g.in_c; ++ic) {
    T* xc = x + ic * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.k_h; ++ky) {
      for (std::size_t kx = 0; kx < g.k_w; ++kx) {
        const T* row = col + ((ic * g.k_h + ky) * g.k_w + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky * g.dilation) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= ih) continue;
          T* dst = xc + iy * g.in_w;
          const T* src = row + oy * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx * g.dilation) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < iw) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.k_h == 1 && g.k_w == 1 && g.stride == 1 && g.pad == 0;
}

// Sums `count` buffers of length `len` stored back to back into out, in buffer order.
template <typename T>
void reduce_ordered(const std::vector<T>& partial, std::size_t count, std::size_t len, std::span<T> out) {
  for (std::size_t b = 0; b < count; ++b) {
    const T* src = partial.data() + b * len;
    for (std::size_t i = 0; i < len; ++i) out[i] += src[i];
  }
}

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  if (m == 0 || n == 0) return;
  View<T> cm(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n), Eigen::OuterStride<>(ldc));
  if (beta == T(0)) {
    cm.setZero();
  } else if (beta != T(1)) {
    cm *= beta;
  }
  if (k == 0) return;
  const auto rows_a = static_cast<Eigen::Index>(trans_a ? k : m), cols_a = static_cast<Eigen::Index>(trans_a ? m : k);
  const auto rows_b = static_cast<Eigen::Index>(trans_b ? n : k), cols_b = static_cast<Eigen::Index>(trans_b ? k : n);
  ConstView<T> am(a, rows_a, cols_a, Eigen::OuterStride<>(lda));
  ConstView<T> bm(b, rows_b, cols_b, Eigen::OuterStride<>(ldb));
  if (trans_a && trans_b) {
    cm.noalias() += alpha * am.transpose() * bm.transpose();
  } else if (trans_a) {
    cm.noalias() += alpha * am.transpose() * bm;
  } else if (trans_b) {
    cm.noalias() += alpha * am * bm.transpose();
  } else {
    cm.noalias() += alpha * am * bm;
  }
}

void set_num_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace parallel {

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
            std::size_t n) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    std::fill(c.begin(), c.end(), T(0));
    return;
  }
  gemm<T>(false, false, m, n, k, T(1), a.data(), k, b.data(), n, T(0), c.data(), n);
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::size_t batch, std::span<const T> x, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> y) {
  const std::size_t plane_out = g.out_h() * g.out_w();
  const std::size_t in_len = g.in_c * g.in_h * g.in_w;
  const std::size_t out_len = g.out_c * plane_out;
  const bool pointwise = is_pointwise(g);
#pragma omp parallel
  {
    std::vector<T> col(pointwise ? 0 : g.patch() * plane_out);
#pragma omp for schedule(static)
    for (long ln = 0; ln < static_cast<long>(batch); ++ln) {
      const auto n = static_cast<std::size_t>(ln);
      const T* xn = x.data() + n * in_len;
      T* yn = y.data() + n * out_len;
      const T* cols = xn;
      if (!pointwise) {
        im2col(g, xn, col.data());
        cols = col.data();
      }
      gemm<T>(false, false, g.out_c, plane_out, g.patch(), T(1), weight.data(), g.patch(), cols, plane_out, T(0),
              yn, plane_out);
      if (!bias.empty()) {
        for (std::size_t oc = 0; oc < g.out_c; ++oc) {
          T* row = yn + oc * plane_out;
          for (std::size_t p = 0; p < plane_out; ++p) row[p] += bias[oc];
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::size_t batch, std::span<const T> x, std::span<const T> weight,
                     std::span<const T> grad_y, std::span<T> grad_x, std::span<T> grad_w, std::span<T> grad_b) {
  const std::size_t plane_out = g.out_h() * g.out_w();
  const std::size_t in_len = g.in_c * g.in_h * g.in_w;
  const std::size_t out_len = g.out_c * plane_out;
  const std::size_t w_len = g.out_c * g.patch();
  const bool pointwise = is_pointwise(g);
  const bool want_w = !grad_w.empty();
  const bool want_x = !grad_x.empty();

  std::vector<T> partial_w(want_w ? batch * w_len : 0);
  std::vector<T> partial_b(grad_b.empty() ? 0 : batch * g.out_c);

#pragma omp parallel
  {
    std::vector<T> col(pointwise ? 0 : g.patch() * plane_out);
    std::vector<T> gcol(pointwise || !want_x ? 0 : g.patch() * plane_out);
#pragma omp for schedule(static)
    for (long ln = 0; ln < static_cast<long>(batch); ++ln) {
      const auto n = static_cast<std::size_t>(ln);
      const T* xn = x.data() + n * in_len;
      const T* gyn = grad_y.data() + n * out_len;
      if (want_w) {
        const T* cols = xn;
        if (!pointwise) {
          im2col(g, xn, col.data());
          cols = col.data();
        }
        gemm<T>(false, true, g.out_c, g.patch(), plane_out, T(1), gyn, plane_out, cols, plane_out, T(0),
                partial_w.data() + n * w_len, g.patch());
      }
      if (!partial_b.empty()) {
        for (std::size_t oc = 0; oc < g.out_c; ++oc) {
          T s = 0;
          const T* row = gyn + oc * plane_out;
          for (std::size_t p = 0; p < plane_out; ++p) s += row[p];
          partial_b[n * g.out_c + oc] = s;
        }
      }
      if (want_x) {
        T* gxn = grad_x.data() + n * in_len;
        if (pointwise) {
          gemm<T>(true, false, g.patch(), plane_out, g.out_c, T(1), weight.data(), g.patch(), gyn, plane_out,
                  T(0), gxn, plane_out);
        } else {
          gemm<T>(true, false, g.patch(), plane_out, g.out_c, T(1), weight.data(), g.patch(), gyn, plane_out,
                  T(0), gcol.data(), plane_out);
          std::fill(gxn, gxn + in_len, T(0));
          col2im(g, gcol.data(), gxn);
        }
      }
    }
  }
  if (want_w) reduce_ordered(partial_w, batch, w_len, grad_w);
  if (!partial_b.empty()) reduce_ordered(partial_b, batch, g.out_c, grad_b);
}

template <typename T>
void tconv2d_forward(const TconvGeometry& g, std::size_t batch, std::span<const T> x, std::span<const T> weight,
                     std::span<T> y) {
  const ConvGeometry adj = g.adjoint();
  const std::size_t plane_in = g.in_h * g.in_w;
  const std::size_t okk = g.out_c * g.k * g.k;
  const std::size_t in_len = g.in_c * plane_in;
  const std::size_t out_len = g.out_c * g.full_h() * g.full_w();
#pragma omp parallel
  {
    std::vector<T> col(okk * plane_in);
#pragma omp for schedule(static)
    for (long ln = 0; ln < static_cast<long>(batch); ++ln) {
      const auto n = static_cast<std::size_t>(ln);
      // col = W^T x_n with W viewed as (in_c x out_c*k*k)
      gemm<T>(true, false, okk, plane_in, g.in_c, T(1), weight.data(), okk, x.data() + n * in_len, plane_in, T(0),
              col.data(), plane_in);
      T* yn = y.data() + n * out_len;
      std::fill(yn, yn + out_len, T(0));
      col2im(adj, col.data(), yn);
    }
  }
}

template <typename T>
void tconv2d_backward(const TconvGeometry& g, std::size_t batch, std::span<const T> x, std::span<const T> weight,
                      std::span<const T> grad_y, std::span<T> grad_x, std::span<T> grad_w) {
  const ConvGeometry adj = g.adjoint();
  const std::size_t plane_in = g.in_h * g.in_w;
  const std::size_t okk = g.out_c * g.k * g.k;
  const std::size_t in_len = g.in_c * plane_in;
  const std::size_t out_len = g.out_c * g.full_h() * g.full_w();
  const std::size_t w_len = g.in_c * okk;
  const bool want_w = !grad_w.empty();
  std::vector<T> partial_w(want_w ? batch * w_len : 0);
#pragma omp parallel
  {
    std::vector<T> gcol(okk * plane_in);
#pragma omp for schedule(static)
    for (long ln = 0; ln < static_cast<long>(batch); ++ln) {
      const auto n = static_cast<std::size_t>(ln);
      im2col(adj, grad_y.data() + n * out_len, gcol.data());
      if (!grad_x.empty()) {
        gemm<T>(false, false, g.in_c, plane_in, okk, T(1), weight.data(), okk, gcol.data(), plane_in, T(0),
                grad_x.data() + n * in_len, plane_in);
      }
      if (want_w) {
        gemm<T>(false, true, g.in_c, okk, plane_in, T(1), x.data() + n * in_len, plane_in, gcol.data(), plane_in,
                T(0), partial_w.data() + n * w_len, okk);
      }
    }
  }
  if (want_w) reduce_ordered(partial_w, batch, w_len, grad_w);
}

template <typename T>
void global_deconv_forward(const GlobalDeconvGeometry& g, std::span<const T> x, std::span<const T> kh,
                           std::span<const T> kw, std::span<T> y) {
  const std::size_t in_len = g.in_h * g.in_w;
  const std::size_t out_len = g.out_h * g.out_w;
#pragma omp parallel
  {
    std::vector<T> tmp(g.in_h * g.out_w);
#pragma omp for schedule(static)
    for (long lm = 0; lm < static_cast<long>(g.maps); ++lm) {
      const auto m = static_cast<std::size_t>(lm);
      // tmp = x_m Kw^T ; y_m = Kh tmp
      gemm<T>(false, true, g.in_h, g.out_w, g.in_w, T(1), x.data() + m * in_len, g.in_w, kw.data(), g.in_w, T(0),
              tmp.data(), g.out_w);
      gemm<T>(false, false, g.out_h, g.out_w, g.in_h, T(1), kh.data(), g.in_h, tmp.data(), g.out_w, T(0),
              y.data() + m * out_len, g.out_w);
    }
  }
}

template <typename T>
void global_deconv_backward(const GlobalDeconvGeometry& g, std::span<const T> x, std::span<const T> kh,
                            std::span<const T> kw, std::span<const T> grad_y, std::span<T> grad_x,
                            std::span<T> grad_kh, std::span<T> grad_kw) {
  const std::size_t in_len = g.in_h * g.in_w;
  const std::size_t out_len = g.out_h * g.out_w;
  const std::size_t kh_len = g.out_h * g.in_h;
  const std::size_t kw_len = g.out_w * g.in_w;
  const bool want_kh = !grad_kh.empty();
  const bool want_kw = !grad_kw.empty();
  std::vector<T> partial_kh(want_kh ? g.maps * kh_len : 0);
  std::vector<T> partial_kw(want_kw ? g.maps * kw_len : 0);
#pragma omp parallel
  {
    std::vector<T> fwd(g.in_h * g.out_w);
    std::vector<T> back(g.in_h * g.out_w);
#pragma omp for schedule(static)
    for (long lm = 0; lm < static_cast<long>(g.maps); ++lm) {
      const auto m = static_cast<std::size_t>(lm);
      const T* xm = x.data() + m * in_len;
      const T* gm = grad_y.data() + m * out_len;
      // back = Kh^T dy_m  (in_h x out_w)
      gemm<T>(true, false, g.in_h, g.out_w, g.out_h, T(1), kh.data(), g.in_h, gm, g.out_w, T(0), back.data(),
              g.out_w);
      if (!grad_x.empty()) {
        // dx_m = back Kw
        gemm<T>(false, false, g.in_h, g.in_w, g.out_w, T(1), back.data(), g.out_w, kw.data(), g.in_w, T(0),
                grad_x.data() + m * in_len, g.in_w);
      }
      if (want_kh) {
        // fwd = x_m Kw^T ; dKh_m = dy_m fwd^T
        gemm<T>(false, true, g.in_h, g.out_w, g.in_w, T(1), xm, g.in_w, kw.data(), g.in_w, T(0), fwd.data(),
                g.out_w);
        gemm<T>(false, true, g.out_h, g.in_h, g.out_w, T(1), gm, g.out_w, fwd.data(), g.out_w, T(0),
                partial_kh.data() + m * kh_len, g.in_h);
      }
      if (want_kw) {
        // dKw_m = back^T x_m
        gemm<T>(true, false, g.out_w, g.in_w, g.in_h, T(1), back.data(), g.out_w, xm, g.in_w, T(0),
                partial_kw.data() + m * kw_len, g.in_w);
      }
    }
  }
  if (want_kh) reduce_ordered(partial_kh, g.maps, kh_len, grad_kh);
  if (want_kw) reduce_ordered(partial_kw, g.maps, kw_len, grad_kw);
}

}  // namespace parallel

#define GDN_INSTANTIATE(T)                                                                                       \
  template void gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t, T, const T*, std::size_t, const T*,    \
                        std::size_t, T, T*, std::size_t);                                                        \
  template void parallel::matmul<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t,           \
                                    std::size_t, std::size_t);                                                   \
  template void parallel::conv2d_forward<T>(const ConvGeometry&, std::size_t, std::span<const T>,                \
                                            std::span<const T>, std::span<const T>, std::span<T>);               \
  template void parallel::conv2d_backward<T>(const ConvGeometry&, std::size_t, std::span<const T>,               \
                                             std::span<const T>, std::span<const T>, std::span<T>, std::span<T>, \
                                             std::span<T>);                                                      \
  template void parallel::tconv2d_forward<T>(const TconvGeometry&, std::size_t, std::span<const T>,              \
                                             std::span<const T>, std::span<T>);                                  \
  template void parallel::tconv2d_backward<T>(const TconvGeometry&, std::size_t, std::span<const T>,             \
                                              std::span<const T>, std::span<const T>, std::span<T>,              \
                                              std::span<T>);                                                     \
  template void parallel::global_deconv_forward<T>(const GlobalDeconvGeometry&, std::span<const T>,              \
                                                   std::span<const T>, std::span<const T>, std::span<T>);        \
  template void parallel::global_deconv_backward<T>(const GlobalDeconvGeometry&, std::span<const T>,             \
                                                    std::span<const T>, std::span<const T>, std::span<const T>,  \
                                                    std::span<T>, std::span<T>, std::span<T>);

GDN_INSTANTIATE(float)
GDN_INSTANTIATE(double)
#undef GDN_INSTANTIATE

}  // namespace gdn::kernels
