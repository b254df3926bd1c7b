// SPDX-License-Identifier: Apache-2.0
#include "gdn/layers.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "gdn/kernels/parallel.hpp"

namespace gdn {

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::size_t in_c, std::size_t out_c, std::size_t k, std::size_t stride, std::size_t pad,
                  std::size_t dilation)
    : weight(Shape4{out_c, in_c, k, k}),
      bias(Shape4{1, 1, 1, out_c}),
      in_c_(in_c),
      out_c_(out_c),
      k_(k),
      stride_(stride),
      pad_(pad),
      dilation_(dilation) {
  if (k % 2 == 0) throw std::invalid_argument("Conv2d: kernel size must be odd, got " + std::to_string(k));
  if (stride == 0 || dilation == 0) throw std::invalid_argument("Conv2d: stride and dilation must be >= 1");
}

template <typename T>
kernels::ConvGeometry Conv2d<T>::geometry(const Shape4& in) const {
  if (in.c != in_c_) {
    throw ShapeError("Conv2d: input has " + std::to_string(in.c) + " channels, layer expects " +
                     std::to_string(in_c_));
  }
  kernels::ConvGeometry g{in_c_, in.h, in.w, out_c_, k_, k_, stride_, pad_, dilation_};
  g.validate();
  return g;
}

template <typename T>
BasicTensor<T> Conv2d<T>::forward(const BasicTensor<T>& x) const {
  const auto g = geometry(x.shape());
  BasicTensor<T> y(Shape4{x.n(), out_c_, g.out_h(), g.out_w()});
  kernels::parallel::conv2d_forward<T>(g, x.n(), x.values(), weight.value.values(), bias.value.values(),
                                       y.values());
  debug_check_finite(y, "conv2d forward");
  return y;
}

template <typename T>
BasicTensor<T> Conv2d<T>::backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_y, bool want_grad_x) {
  const auto g = geometry(x.shape());
  const Shape4 expect{x.n(), out_c_, g.out_h(), g.out_w()};
  if (grad_y.shape() != expect) {
    throw ShapeError("Conv2d backward: grad_y " + to_string(grad_y.shape()) + " expected " + to_string(expect));
  }
  BasicTensor<T> gx;
  if (want_grad_x) gx = BasicTensor<T>(x.shape());
  kernels::parallel::conv2d_backward<T>(g, x.n(), x.values(), weight.value.values(), grad_y.values(),
                                        gx.values(), weight.grad.values(), bias.grad.values());
  return gx;
}

template <typename T>
void Conv2d<T>::init_he(Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in_c_ * k_ * k_));
  for (T& v : weight.value.values()) v = static_cast<T>(rng.uniform(-limit, limit));
  bias.value.fill(T(0));
}

template <typename T>
void Conv2d<T>::zero_grad() {
  weight.zero_grad();
  bias.zero_grad();
}

template <typename T>
void Conv2d<T>::collect(ParamList<T>& out, const std::string& name, const std::string& group) {
  out.push_back(weight.ref(name + ".weight", group));
  out.push_back(bias.ref(name + ".bias", group));
}

// ---------------------------------------------------------------- ReLU

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  auto in = x.values();
  auto out = y.values();
  const auto len = static_cast<long>(in.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < len; ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
  return y;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_y) {
  if (x.shape() != grad_y.shape()) {
    throw ShapeError("relu backward: " + to_string(x.shape()) + " vs " + to_string(grad_y.shape()));
  }
  BasicTensor<T> gx(x.shape());
  auto in = x.values();
  auto g = grad_y.values();
  auto out = gx.values();
  const auto len = static_cast<long>(in.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < len; ++i) out[i] = in[i] > T(0) ? g[i] : T(0);
  return gx;
}

// ---------------------------------------------------------------- MaxPool

template <typename T>
MaxPoolResult<T> maxpool2_forward(const BasicTensor<T>& x) {
  const std::size_t oh = (x.h() + 1) / 2, ow = (x.w() + 1) / 2;
  if (x.size() > std::numeric_limits<std::uint32_t>::max()) throw ShapeError("maxpool: input too large");
  MaxPoolResult<T> r{BasicTensor<T>(Shape4{x.n(), x.c(), oh, ow}), std::vector<std::uint32_t>(x.n() * x.c() * oh * ow),
                     x.shape()};
  const std::size_t maps = x.n() * x.c();
  const std::size_t ih = x.h(), iw = x.w();
#pragma omp parallel for schedule(static)
  for (long lm = 0; lm < static_cast<long>(maps); ++lm) {
    const auto m = static_cast<std::size_t>(lm);
    const T* xm = x.data() + m * ih * iw;
    T* ym = r.y.data() + m * oh * ow;
    std::uint32_t* am = r.argmax.data() + m * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        // Window rows/cols clamped to the input: replicate padding.
        const std::size_t r0 = 2 * i, r1 = std::min(2 * i + 1, ih - 1);
        const std::size_t c0 = 2 * j, c1 = std::min(2 * j + 1, iw - 1);
        std::size_t best = r0 * iw + c0;
        T best_v = xm[best];
        const std::size_t cand[3] = {r0 * iw + c1, r1 * iw + c0, r1 * iw + c1};
        for (std::size_t idx : cand) {
          if (xm[idx] > best_v || (xm[idx] == best_v && idx < best)) {
            best_v = xm[idx];
            best = idx;
          }
        }
        ym[i * ow + j] = best_v;
        am[i * ow + j] = static_cast<std::uint32_t>(m * ih * iw + best);
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> maxpool2_backward(const MaxPoolResult<T>& fwd, const BasicTensor<T>& grad_y) {
  if (grad_y.shape() != fwd.y.shape()) {
    throw ShapeError("maxpool backward: grad_y " + to_string(grad_y.shape()) + " expected " +
                     to_string(fwd.y.shape()));
  }
  BasicTensor<T> gx(fwd.in_shape);
  // Windows never overlap except through replicate padding, which can route
  // two outputs to the same input, so this loop stays serial.
  for (std::size_t i = 0; i < fwd.argmax.size(); ++i) gx.values()[fwd.argmax[i]] += grad_y.values()[i];
  return gx;
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(std::size_t in_dim, std::size_t out_dim)
    : weight(Shape4{1, 1, out_dim, in_dim}), bias(Shape4{1, 1, 1, out_dim}), in_(in_dim), out_(out_dim) {}

template <typename T>
BasicMatrix<T> Linear<T>::forward(const BasicMatrix<T>& x) const {
  if (x.cols() != in_) {
    throw ShapeError("Linear: input width " + std::to_string(x.cols()) + ", expected " + std::to_string(in_));
  }
  BasicMatrix<T> y(x.rows(), out_);
  if (x.rows() == 0) return y;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t o = 0; o < out_; ++o) y(r, o) = bias.value.values()[o];
  kernels::gemm<T>(false, true, x.rows(), out_, in_, T(1), x.data(), in_, weight.value.data(), in_, T(1), y.data(),
                   out_);
  return y;
}

template <typename T>
BasicMatrix<T> Linear<T>::backward(const BasicMatrix<T>& x, const BasicMatrix<T>& grad_y) {
  if (x.cols() != in_ || grad_y.cols() != out_ || grad_y.rows() != x.rows()) {
    throw ShapeError("Linear backward: shape mismatch");
  }
  BasicMatrix<T> gx(x.rows(), in_);
  if (x.rows() == 0) return gx;
  // dW += dy^T x ; db += colsum(dy) ; dx = dy W
  kernels::gemm<T>(true, false, out_, in_, x.rows(), T(1), grad_y.data(), out_, x.data(), in_, T(1),
                   weight.grad.data(), in_);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t o = 0; o < out_; ++o) bias.grad.values()[o] += grad_y(r, o);
  kernels::gemm<T>(false, false, x.rows(), in_, out_, T(1), grad_y.data(), out_, weight.value.data(), in_, T(0),
                   gx.data(), in_);
  return gx;
}

template <typename T>
void Linear<T>::init_glorot(Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in_ + out_));
  for (T& v : weight.value.values()) v = static_cast<T>(rng.uniform(-limit, limit));
  bias.value.fill(T(0));
}

template <typename T>
void Linear<T>::zero_grad() {
  weight.zero_grad();
  bias.zero_grad();
}

template <typename T>
void Linear<T>::collect(ParamList<T>& out, const std::string& name, const std::string& group) {
  out.push_back(weight.ref(name + ".weight", group));
  out.push_back(bias.ref(name + ".bias", group));
}

// ---------------------------------------------------------------- TransposedConv2d

std::vector<double> bilinear_kernel_1d(std::size_t k) {
  const double factor = static_cast<double>((k + 1) / 2);
  const double center = (k % 2 == 1) ? factor - 1.0 : factor - 0.5;
  std::vector<double> taps(k);
  for (std::size_t a = 0; a < k; ++a) taps[a] = 1.0 - std::abs(static_cast<double>(a) - center) / factor;
  return taps;
}

template <typename T>
TransposedConv2d<T>::TransposedConv2d(std::size_t in_c, std::size_t out_c, std::size_t k, std::size_t stride)
    : weight(Shape4{in_c, out_c, k, k}), in_c_(in_c), out_c_(out_c), k_(k), stride_(stride) {
  if (stride == 0) throw std::invalid_argument("TransposedConv2d: stride must be >= 1");
}

template <typename T>
kernels::TconvGeometry TransposedConv2d<T>::geometry(const Shape4& in) const {
  if (in.c != in_c_) {
    throw ShapeError("TransposedConv2d: input has " + std::to_string(in.c) + " channels, layer expects " +
                     std::to_string(in_c_));
  }
  return kernels::TconvGeometry{in_c_, in.h, in.w, out_c_, k_, stride_};
}

template <typename T>
void TransposedConv2d<T>::check_target(const Shape4& in, std::size_t target_h, std::size_t target_w) const {
  const auto g = geometry(in);
  if (target_h == 0 || target_w == 0 || target_h > g.full_h() || target_w > g.full_w()) {
    throw ShapeError("TransposedConv2d: target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                     " exceeds producible extent " + std::to_string(g.full_h()) + "x" + std::to_string(g.full_w()));
  }
}

template <typename T>
BasicTensor<T> TransposedConv2d<T>::forward(const BasicTensor<T>& x, std::size_t target_h,
                                            std::size_t target_w) const {
  check_target(x.shape(), target_h, target_w);
  const auto g = geometry(x.shape());
  const std::size_t fh = g.full_h(), fw = g.full_w();
  BasicTensor<T> full(Shape4{x.n(), out_c_, fh, fw});
  kernels::parallel::tconv2d_forward<T>(g, x.n(), x.values(), weight.value.values(), full.values());
  const std::size_t top = (fh - target_h) / 2, left = (fw - target_w) / 2;
  BasicTensor<T> y(Shape4{x.n(), out_c_, target_h, target_w});
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < out_c_; ++c)
      for (std::size_t i = 0; i < target_h; ++i)
        for (std::size_t j = 0; j < target_w; ++j) y(n, c, i, j) = full(n, c, top + i, left + j);
  return y;
}

template <typename T>
BasicTensor<T> TransposedConv2d<T>::backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_y,
                                             bool want_grad_x) {
  const std::size_t th = grad_y.h(), tw = grad_y.w();
  check_target(x.shape(), th, tw);
  if (grad_y.n() != x.n() || grad_y.c() != out_c_) throw ShapeError("TransposedConv2d backward: shape mismatch");
  const auto g = geometry(x.shape());
  const std::size_t fh = g.full_h(), fw = g.full_w();
  const std::size_t top = (fh - th) / 2, left = (fw - tw) / 2;
  BasicTensor<T> full(Shape4{x.n(), out_c_, fh, fw});
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < out_c_; ++c)
      for (std::size_t i = 0; i < th; ++i)
        for (std::size_t j = 0; j < tw; ++j) full(n, c, top + i, left + j) = grad_y(n, c, i, j);
  BasicTensor<T> gx;
  if (want_grad_x) gx = BasicTensor<T>(x.shape());
  kernels::parallel::tconv2d_backward<T>(g, x.n(), x.values(), weight.value.values(), full.values(), gx.values(),
                                         weight.grad.values());
  return gx;
}

template <typename T>
void TransposedConv2d<T>::init_bilinear() {
  const auto taps = bilinear_kernel_1d(k_);
  weight.value.fill(T(0));
  for (std::size_t c = 0; c < std::min(in_c_, out_c_); ++c)
    for (std::size_t a = 0; a < k_; ++a)
      for (std::size_t b = 0; b < k_; ++b) weight.value(c, c, a, b) = static_cast<T>(taps[a] * taps[b]);
}

template <typename T>
void TransposedConv2d<T>::zero_grad() {
  weight.zero_grad();
}

template <typename T>
void TransposedConv2d<T>::collect(ParamList<T>& out, const std::string& name, const std::string& group) {
  out.push_back(weight.ref(name + ".weight", group));
}

#define GDN_INSTANTIATE(T)                                                                    \
  template class Conv2d<T>;                                                                   \
  template class Linear<T>;                                                                   \
  template class TransposedConv2d<T>;                                                         \
  template BasicTensor<T> relu_forward<T>(const BasicTensor<T>&);                             \
  template BasicTensor<T> relu_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&);     \
  template MaxPoolResult<T> maxpool2_forward<T>(const BasicTensor<T>&);                       \
  template BasicTensor<T> maxpool2_backward<T>(const MaxPoolResult<T>&, const BasicTensor<T>&);

GDN_INSTANTIATE(float)
GDN_INSTANTIATE(double)
#undef GDN_INSTANTIATE

}  // namespace gdn
