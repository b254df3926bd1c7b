// SPDX-License-Identifier: Apache-2.0
#include "gdn/kernels/serial.hpp"

#include <algorithm>
#include <vector>

namespace gdn::kernels::serial {

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m, std::size_t k,
            std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::size_t batch, std::span<const T> x, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> y) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const auto ih = static_cast<long>(g.in_h), iw = static_cast<long>(g.in_w);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t oc = 0; oc < g.out_c; ++oc) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          T s = bias.empty() ? T(0) : bias[oc];
          for (std::size_t ic = 0; ic < g.in_c; ++ic) {
            for (std::size_t ky = 0; ky < g.k_h; ++ky) {
              const long iy = static_cast<long>(oy * g.stride + ky * g.dilation) - static_cast<long>(g.pad);
              if (iy < 0 || iy >= ih) continue;
              for (std::size_t kx = 0; kx < g.k_w; ++kx) {
                const long ix = static_cast<long>(ox * g.stride + kx * g.dilation) - static_cast<long>(g.pad);
                if (ix < 0 || ix >= iw) continue;
                s += x[((n * g.in_c + ic) * g.in_h + iy) * g.in_w + ix] *
                     weight[((oc * g.in_c + ic) * g.k_h + ky) * g.k_w + kx];
              }
            }
          }
          y[((n * g.out_c + oc) * oh + oy) * ow + ox] = s;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::size_t batch, std::span<const T> x, std::span<const T> weight,
                     std::span<const T> grad_y, std::span<T> grad_x, std::span<T> grad_w, std::span<T> grad_b) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const auto ih = static_cast<long>(g.in_h), iw = static_cast<long>(g.in_w);
  if (!grad_x.empty()) std::fill(grad_x.begin(), grad_x.end(), T(0));
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t oc = 0; oc < g.out_c; ++oc) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const T gy = grad_y[((n * g.out_c + oc) * oh + oy) * ow + ox];
          if (!grad_b.empty()) grad_b[oc] += gy;
          for (std::size_t ic = 0; ic < g.in_c; ++ic) {
            for (std::size_t ky = 0; ky < g.k_h; ++ky) {
              const long iy = static_cast<long>(oy * g.stride + ky * g.dilation) - static_cast<long>(g.pad);
              if (iy < 0 || iy >= ih) continue;
              for (std::size_t kx = 0; kx < g.k_w; ++kx) {
                const long ix = static_cast<long>(ox * g.stride + kx * g.dilation) - static_cast<long>(g.pad);
                if (ix < 0 || ix >= iw) continue;
                const std::size_t xi = ((n * g.in_c + ic) * g.in_h + iy) * g.in_w + ix;
                const std::size_t wi = ((oc * g.in_c + ic) * g.k_h + ky) * g.k_w + kx;
                if (!grad_w.empty()) grad_w[wi] += gy * x[xi];
                if (!grad_x.empty()) grad_x[xi] += gy * weight[wi];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void tconv2d_forward(const TconvGeometry& g, std::size_t batch, std::span<const T> x, std::span<const T> weight,
                     std::span<T> y) {
  const std::size_t fh = g.full_h(), fw = g.full_w();
  std::fill(y.begin(), y.end(), T(0));
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t ic = 0; ic < g.in_c; ++ic) {
      for (std::size_t i = 0; i < g.in_h; ++i) {
        for (std::size_t j = 0; j < g.in_w; ++j) {
          const T v = x[((n * g.in_c + ic) * g.in_h + i) * g.in_w + j];
          for (std::size_t o = 0; o < g.out_c; ++o) {
            for (std::size_t a = 0; a < g.k; ++a) {
              for (std::size_t b = 0; b < g.k; ++b) {
                y[((n * g.out_c + o) * fh + i * g.stride + a) * fw + j * g.stride + b] +=
                    v * weight[((ic * g.out_c + o) * g.k + a) * g.k + b];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void tconv2d_backward(const TconvGeometry& g, std::size_t batch, std::span<const T> x, std::span<const T> weight,
                      std::span<const T> grad_y, std::span<T> grad_x, std::span<T> grad_w) {
  const std::size_t fh = g.full_h(), fw = g.full_w();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t ic = 0; ic < g.in_c; ++ic) {
      for (std::size_t i = 0; i < g.in_h; ++i) {
        for (std::size_t j = 0; j < g.in_w; ++j) {
          const std::size_t xi = ((n * g.in_c + ic) * g.in_h + i) * g.in_w + j;
          T s = 0;
          for (std::size_t o = 0; o < g.out_c; ++o) {
            for (std::size_t a = 0; a < g.k; ++a) {
              for (std::size_t b = 0; b < g.k; ++b) {
                const T gy = grad_y[((n * g.out_c + o) * fh + i * g.stride + a) * fw + j * g.stride + b];
                const std::size_t wi = ((ic * g.out_c + o) * g.k + a) * g.k + b;
                s += gy * weight[wi];
                if (!grad_w.empty()) grad_w[wi] += gy * x[xi];
              }
            }
          }
          if (!grad_x.empty()) grad_x[xi] = s;
        }
      }
    }
  }
}

template <typename T>
void global_deconv_forward(const GlobalDeconvGeometry& g, std::span<const T> x, std::span<const T> kh,
                           std::span<const T> kw, std::span<T> y) {
  std::vector<T> tmp(g.in_h * g.out_w);
  for (std::size_t m = 0; m < g.maps; ++m) {
    const T* xm = x.data() + m * g.in_h * g.in_w;
    T* ym = y.data() + m * g.out_h * g.out_w;
    // tmp = x_m * Kw^T
    for (std::size_t p = 0; p < g.in_h; ++p) {
      for (std::size_t j = 0; j < g.out_w; ++j) {
        T s = 0;
        for (std::size_t q = 0; q < g.in_w; ++q) s += xm[p * g.in_w + q] * kw[j * g.in_w + q];
        tmp[p * g.out_w + j] = s;
      }
    }
    // y_m = Kh * tmp
    for (std::size_t i = 0; i < g.out_h; ++i) {
      for (std::size_t j = 0; j < g.out_w; ++j) {
        T s = 0;
        for (std::size_t p = 0; p < g.in_h; ++p) s += kh[i * g.in_h + p] * tmp[p * g.out_w + j];
        ym[i * g.out_w + j] = s;
      }
    }
  }
}

template <typename T>
void global_deconv_backward(const GlobalDeconvGeometry& g, std::span<const T> x, std::span<const T> kh,
                            std::span<const T> kw, std::span<const T> grad_y, std::span<T> grad_x,
                            std::span<T> grad_kh, std::span<T> grad_kw) {
  std::vector<T> fwd(g.in_h * g.out_w);   // x_m * Kw^T
  std::vector<T> back(g.in_h * g.out_w);  // Kh^T * dy_m
  for (std::size_t m = 0; m < g.maps; ++m) {
    const T* xm = x.data() + m * g.in_h * g.in_w;
    const T* gm = grad_y.data() + m * g.out_h * g.out_w;
    for (std::size_t p = 0; p < g.in_h; ++p) {
      for (std::size_t j = 0; j < g.out_w; ++j) {
        T s = 0;
        for (std::size_t q = 0; q < g.in_w; ++q) s += xm[p * g.in_w + q] * kw[j * g.in_w + q];
        fwd[p * g.out_w + j] = s;
        T t = 0;
        for (std::size_t i = 0; i < g.out_h; ++i) t += kh[i * g.in_h + p] * gm[i * g.out_w + j];
        back[p * g.out_w + j] = t;
      }
    }
    if (!grad_x.empty()) {
      T* gx = grad_x.data() + m * g.in_h * g.in_w;
      for (std::size_t p = 0; p < g.in_h; ++p) {
        for (std::size_t q = 0; q < g.in_w; ++q) {
          T s = 0;
          for (std::size_t j = 0; j < g.out_w; ++j) s += back[p * g.out_w + j] * kw[j * g.in_w + q];
          gx[p * g.in_w + q] = s;
        }
      }
    }
    if (!grad_kh.empty()) {
      // dKh += dy_m * (x_m Kw^T)^T
      for (std::size_t i = 0; i < g.out_h; ++i) {
        for (std::size_t p = 0; p < g.in_h; ++p) {
          T s = 0;
          for (std::size_t j = 0; j < g.out_w; ++j) s += gm[i * g.out_w + j] * fwd[p * g.out_w + j];
          grad_kh[i * g.in_h + p] += s;
        }
      }
    }
    if (!grad_kw.empty()) {
      // dKw += (Kh^T dy_m)^T * x_m
      for (std::size_t j = 0; j < g.out_w; ++j) {
        for (std::size_t q = 0; q < g.in_w; ++q) {
          T s = 0;
          for (std::size_t p = 0; p < g.in_h; ++p) s += back[p * g.out_w + j] * xm[p * g.in_w + q];
          grad_kw[j * g.in_w + q] += s;
        }
      }
    }
  }
}

#define GDN_INSTANTIATE(T)                                                                                   \
  template void matmul<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t, std::size_t,    \
                          std::size_t);                                                                      \
  template void conv2d_forward<T>(const ConvGeometry&, std::size_t, std::span<const T>, std::span<const T>,  \
                                  std::span<const T>, std::span<T>);                                         \
  template void conv2d_backward<T>(const ConvGeometry&, std::size_t, std::span<const T>, std::span<const T>, \
                                   std::span<const T>, std::span<T>, std::span<T>, std::span<T>);            \
  template void tconv2d_forward<T>(const TconvGeometry&, std::size_t, std::span<const T>, std::span<const T>, \
                                   std::span<T>);                                                            \
  template void tconv2d_backward<T>(const TconvGeometry&, std::size_t, std::span<const T>,                   \
                                    std::span<const T>, std::span<const T>, std::span<T>, std::span<T>);     \
  template void global_deconv_forward<T>(const GlobalDeconvGeometry&, std::span<const T>, std::span<const T>, \
                                         std::span<const T>, std::span<T>);                                  \
  template void global_deconv_backward<T>(const GlobalDeconvGeometry&, std::span<const T>,                   \
                                          std::span<const T>, std::span<const T>, std::span<const T>,        \
                                          std::span<T>, std::span<T>, std::span<T>);

GDN_INSTANTIATE(float)
GDN_INSTANTIATE(double)
#undef GDN_INSTANTIATE

}  // namespace gdn::kernels::serial
