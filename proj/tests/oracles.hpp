// SPDX-License-Identifier: Apache-2.0
//
// Test-only reference implementations. Each one is written as the most literal
// loop over its definition and shares no code with the library kernels.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "gdn/random.hpp"
#include "gdn/tensor.hpp"

namespace oracle {

using gdn::ClassMap;
using gdn::Matrix;
using gdn::Shape4;
using gdn::Tensor;

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

// y[i][j] = sum_p sum_q Kh[i][p] x[p][q] Kw[j][q], per batch item and channel.
inline Tensor global_deconv(const Tensor& x, const Matrix& kh, const Matrix& kw) {
  Tensor y(Shape4{x.n(), x.c(), kh.rows(), kw.rows()});
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c)
      for (std::size_t i = 0; i < kh.rows(); ++i)
        for (std::size_t j = 0; j < kw.rows(); ++j) {
          double s = 0.0;
          for (std::size_t p = 0; p < x.h(); ++p)
            for (std::size_t q = 0; q < x.w(); ++q) s += kh(i, p) * x(n, c, p, q) * kw(j, q);
          y(n, c, i, j) = s;
        }
  return y;
}

// Align-corners bilinear resampling evaluated pointwise from the four nearest
// source pixels.
inline Tensor bilinear_resample(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  auto coord = [](std::size_t i, std::size_t out, std::size_t in) {
    return out == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
  };
  Tensor y(Shape4{x.n(), x.c(), out_h, out_w});
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c)
      for (std::size_t i = 0; i < out_h; ++i)
        for (std::size_t j = 0; j < out_w; ++j) {
          const double sy = coord(i, out_h, x.h());
          const double sx = coord(j, out_w, x.w());
          const auto y0 = std::min(static_cast<std::size_t>(std::floor(sy)), x.h() - 1);
          const auto x0 = std::min(static_cast<std::size_t>(std::floor(sx)), x.w() - 1);
          const auto y1 = std::min(y0 + 1, x.h() - 1);
          const auto x1 = std::min(x0 + 1, x.w() - 1);
          const double fy = sy - static_cast<double>(y0);
          const double fx = sx - static_cast<double>(x0);
          y(n, c, i, j) = (1 - fy) * (1 - fx) * x(n, c, y0, x0) + (1 - fy) * fx * x(n, c, y0, x1) +
                          fy * (1 - fx) * x(n, c, y1, x0) + fy * fx * x(n, c, y1, x1);
        }
  return y;
}

// Classic 2x bilinear upsampling with half-pixel centers and edge clamping.
inline Tensor bilinear_2x_half_pixel(const Tensor& x) {
  Tensor y(Shape4{x.n(), x.c(), 2 * x.h(), 2 * x.w()});
  auto tap = [](std::size_t o, std::size_t in, std::size_t& lo, std::size_t& hi, double& f) {
    const double s = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    const double fl = std::floor(s);
    f = s - fl;
    const auto clamp = [in](double v) {
      return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(in - 1)));
    };
    lo = clamp(fl);
    hi = clamp(fl + 1);
  };
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c)
      for (std::size_t i = 0; i < y.h(); ++i)
        for (std::size_t j = 0; j < y.w(); ++j) {
          std::size_t i0, i1, j0, j1;
          double fi, fj;
          tap(i, x.h(), i0, i1, fi);
          tap(j, x.w(), j0, j1, fj);
          y(n, c, i, j) = (1 - fi) * (1 - fj) * x(n, c, i0, j0) + (1 - fi) * fj * x(n, c, i0, j1) +
                          fi * (1 - fj) * x(n, c, i1, j0) + fi * fj * x(n, c, i1, j1);
        }
  return y;
}

// Cross-correlation by sliding window; weight is (out_c, in_c, k, k), bias has out_c entries.
inline Tensor conv2d(const Tensor& x, const Tensor& weight, const std::vector<double>& bias, std::size_t stride,
                     std::size_t pad, std::size_t dilation) {
  const std::size_t k = weight.h();
  const std::size_t ext = (k - 1) * dilation + 1;
  const std::size_t oh = (x.h() + 2 * pad - ext) / stride + 1;
  const std::size_t ow = (x.w() + 2 * pad - ext) / stride + 1;
  Tensor y(Shape4{x.n(), weight.n(), oh, ow});
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t o = 0; o < weight.n(); ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double s = bias.empty() ? 0.0 : bias[o];
          for (std::size_t c = 0; c < x.c(); ++c)
            for (std::size_t a = 0; a < k; ++a)
              for (std::size_t b = 0; b < k; ++b) {
                const auto r = static_cast<std::ptrdiff_t>(i * stride + a * dilation) - static_cast<std::ptrdiff_t>(pad);
                const auto q = static_cast<std::ptrdiff_t>(j * stride + b * dilation) - static_cast<std::ptrdiff_t>(pad);
                if (r < 0 || q < 0 || r >= static_cast<std::ptrdiff_t>(x.h()) || q >= static_cast<std::ptrdiff_t>(x.w()))
                  continue;
                s += weight(o, c, a, b) * x(n, c, static_cast<std::size_t>(r), static_cast<std::size_t>(q));
              }
          y(n, o, i, j) = s;
        }
  return y;
}

// Zero-interleaved kernel: a dilated k x k kernel as a dense ((k-1)d+1)^2 kernel.
inline Tensor dilate_kernel(const Tensor& w, std::size_t d) {
  const std::size_t ext = (w.h() - 1) * d + 1;
  Tensor out(Shape4{w.n(), w.c(), ext, ext});
  for (std::size_t o = 0; o < w.n(); ++o)
    for (std::size_t c = 0; c < w.c(); ++c)
      for (std::size_t a = 0; a < w.h(); ++a)
        for (std::size_t b = 0; b < w.w(); ++b) out(o, c, a * d, b * d) = w(o, c, a, b);
  return out;
}

// IoU per class from explicit pixel sets: |pred==c and gt==c| / |pred==c or gt==c|.
inline std::vector<std::optional<double>> per_class_iou(const std::vector<ClassMap>& preds,
                                                        const std::vector<ClassMap>& gts, std::size_t labels) {
  std::vector<std::optional<double>> iou(labels);
  for (std::size_t c = 0; c < labels; ++c) {
    std::uint64_t inter = 0, uni = 0;
    for (std::size_t k = 0; k < preds.size(); ++k)
      for (std::size_t p = 0; p < gts[k].data.size(); ++p) {
        if (gts[k].data[p] == ClassMap::kIgnore) continue;
        const bool in_pred = preds[k].data[p] == c;
        const bool in_gt = gts[k].data[p] == c;
        inter += (in_pred && in_gt) ? 1 : 0;
        uni += (in_pred || in_gt) ? 1 : 0;
      }
    if (uni > 0) iou[c] = static_cast<double>(inter) / static_cast<double>(uni);
  }
  return iou;
}

inline double mean_iou(const std::vector<ClassMap>& preds, const std::vector<ClassMap>& gts, std::size_t labels) {
  double sum = 0.0;
  std::size_t defined = 0;
  for (const auto& v : per_class_iou(preds, gts, labels)) {
    if (!v) continue;
    sum += *v;
    ++defined;
  }
  return defined == 0 ? 0.0 : sum / static_cast<double>(defined);
}

// Max over each cell of an n x n grid with floor(i*h/n) boundaries; (level, channel, cell) order.
inline std::vector<double> spp(const Tensor& x, std::size_t n_item, const std::vector<std::size_t>& levels) {
  std::vector<double> out;
  for (std::size_t n : levels)
    for (std::size_t c = 0; c < x.c(); ++c)
      for (std::size_t ci = 0; ci < n; ++ci)
        for (std::size_t cj = 0; cj < n; ++cj) {
          const std::size_t r0 = ci * x.h() / n, r1 = std::max((ci + 1) * x.h() / n, r0 + 1);
          const std::size_t q0 = cj * x.w() / n, q1 = std::max((cj + 1) * x.w() / n, q0 + 1);
          double m = -std::numeric_limits<double>::infinity();
          for (std::size_t r = r0; r < r1; ++r)
            for (std::size_t q = q0; q < q1; ++q) m = std::max(m, x(n_item, c, r, q));
          out.push_back(m);
        }
  return out;
}

// Heavy-ball SGD on one scalar: v = mu v - lr (g + wd theta); theta += v.
struct ScalarSgd {
  double theta, v = 0.0, lr, mu, wd;
  void step(double g) {
    v = mu * v - lr * (g + wd * theta);
    theta += v;
  }
};

inline Tensor random_tensor(Shape4 s, gdn::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline Matrix random_matrix(std::size_t r, std::size_t c, gdn::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (auto& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}

inline ClassMap random_map(std::size_t h, std::size_t w, std::size_t labels, gdn::Rng& rng) {
  ClassMap m(h, w);
  for (auto& v : m.data) v = static_cast<std::uint8_t>(rng.below(labels));
  return m;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace oracle
