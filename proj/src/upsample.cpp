// SPDX-License-Identifier: Apache-2.0
#include "gdn/upsample.hpp"

#include <cmath>
#include <stdexcept>

#include "gdn/kernels/parallel.hpp"

namespace gdn {

std::string to_string(Activation a) { return a == Activation::kRelu ? "relu" : "none"; }

Activation parse_activation(const std::string& s) {
  if (s == "none") return Activation::kNone;
  if (s == "relu") return Activation::kRelu;
  throw std::invalid_argument("unknown activation '" + s + "' (expected none|relu)");
}

namespace {

// Align-corners source coordinate of output index i: lower neighbour and weight of the upper one.
struct Tap {
  std::size_t lo;
  double frac;
};

Tap align_corners_tap(std::size_t i, std::size_t out, std::size_t in) {
  if (in == 1 || out == 1) return {0, 0.0};
  const double src = static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
  auto lo = static_cast<std::size_t>(std::floor(src));
  if (lo >= in - 1) lo = in - 2;
  return {lo, src - static_cast<double>(lo)};
}

template <typename T>
void apply_relu(BasicTensor<T>& y) {
  for (T& v : y.values()) v = v > T(0) ? v : T(0);
}

}  // namespace

template <typename T>
BasicMatrix<T> bilinear_matrix(std::size_t out, std::size_t in) {
  BasicMatrix<T> k(out, in);
  for (std::size_t i = 0; i < out; ++i) {
    const Tap t = align_corners_tap(i, out, in);
    k(i, t.lo) += static_cast<T>(1.0 - t.frac);
    if (in > 1) k(i, t.lo + 1) += static_cast<T>(t.frac);
  }
  return k;
}

template <typename T>
BasicTensor<T> global_interpolate(const BasicTensor<T>& x, const BasicMatrix<T>& kh, const BasicMatrix<T>& kw) {
  if (kh.cols() != x.h() || kw.cols() != x.w()) {
    throw ShapeError("global_interpolate: input " + to_string(x.shape()) + " vs Kh " + std::to_string(kh.rows()) +
                     "x" + std::to_string(kh.cols()) + ", Kw " + std::to_string(kw.rows()) + "x" +
                     std::to_string(kw.cols()));
  }
  BasicTensor<T> y(Shape4{x.n(), x.c(), kh.rows(), kw.rows()});
  const kernels::GlobalDeconvGeometry g{x.n() * x.c(), x.h(), x.w(), kh.rows(), kw.rows()};
  kernels::parallel::global_deconv_forward<T>(g, x.values(), kh.values(), kw.values(), y.values());
  return y;
}

template <typename T>
GlobalDeconv<T>::GlobalDeconv(std::size_t max_out_h, std::size_t max_out_w, std::size_t in_h, std::size_t in_w,
                              Activation activation)
    : kh_param(Shape4{1, 1, max_out_h, in_h}),
      kw_param(Shape4{1, 1, max_out_w, in_w}),
      max_out_h_(max_out_h),
      max_out_w_(max_out_w),
      in_h_(in_h),
      in_w_(in_w),
      activation_(activation) {
  if (max_out_h < in_h || max_out_w < in_w) {
    throw std::invalid_argument("GlobalDeconv: output extent must be >= input extent (upsampling only)");
  }
}

template <typename T>
BasicMatrix<T> GlobalDeconv<T>::kh() const {
  auto v = kh_param.value.values();
  return BasicMatrix<T>(max_out_h_, in_h_, std::vector<T>(v.begin(), v.end()));
}

template <typename T>
BasicMatrix<T> GlobalDeconv<T>::kw() const {
  auto v = kw_param.value.values();
  return BasicMatrix<T>(max_out_w_, in_w_, std::vector<T>(v.begin(), v.end()));
}

template <typename T>
void GlobalDeconv<T>::set_kh(const BasicMatrix<T>& m) {
  if (m.rows() != max_out_h_ || m.cols() != in_h_) throw ShapeError("set_kh: shape mismatch");
  std::copy(m.values().begin(), m.values().end(), kh_param.value.values().begin());
}

template <typename T>
void GlobalDeconv<T>::set_kw(const BasicMatrix<T>& m) {
  if (m.rows() != max_out_w_ || m.cols() != in_w_) throw ShapeError("set_kw: shape mismatch");
  std::copy(m.values().begin(), m.values().end(), kw_param.value.values().begin());
}

template <typename T>
void GlobalDeconv<T>::check_view(const Shape4& x, const SubsetView& v) const {
  if (v.out_h > max_out_h_ || v.out_w > max_out_w_ || v.in_h > in_h_ || v.in_w > in_w_) {
    throw ShapeError("subset view " + std::to_string(v.out_h) + "x" + std::to_string(v.out_w) + " from " +
                     std::to_string(v.in_h) + "x" + std::to_string(v.in_w) + " exceeds stored matrices (H_max=" +
                     std::to_string(max_out_h_) + ", W_max=" + std::to_string(max_out_w_) +
                     ", h=" + std::to_string(in_h_) + ", w=" + std::to_string(in_w_) + ")");
  }
  if (v.out_h == 0 || v.out_w == 0 || v.in_h == 0 || v.in_w == 0) throw ShapeError("subset view has a zero extent");
  if (x.h != v.in_h || x.w != v.in_w) {
    throw ShapeError("subset view expects coarse input " + std::to_string(v.in_h) + "x" + std::to_string(v.in_w) +
                     ", got " + to_string(x));
  }
}

template <typename T>
BasicTensor<T> GlobalDeconv<T>::forward(const BasicTensor<T>& x) const {
  if (x.h() != in_h_ || x.w() != in_w_) {
    throw ShapeError("GlobalDeconv: input " + to_string(x.shape()) + " does not match coarse extent " +
                     std::to_string(in_h_) + "x" + std::to_string(in_w_) + "; use a subset view");
  }
  return forward_subset(x, full_view());
}

template <typename T>
BasicTensor<T> GlobalDeconv<T>::forward_subset(const BasicTensor<T>& x, const SubsetView& view) const {
  check_view(x.shape(), view);
  auto y = global_interpolate(x, kh().block(view.out_h, view.in_h), kw().block(view.out_w, view.in_w));
  if (activation_ == Activation::kRelu) apply_relu(y);
  debug_check_finite(y, "global deconvolution");
  return y;
}

template <typename T>
BasicTensor<T> GlobalDeconv<T>::backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_y, bool want_grad_x) {
  return backward_subset(x, grad_y, full_view(), want_grad_x);
}

template <typename T>
BasicTensor<T> GlobalDeconv<T>::backward_subset(const BasicTensor<T>& x, const BasicTensor<T>& grad_y,
                                                const SubsetView& view, bool want_grad_x) {
  check_view(x.shape(), view);
  const Shape4 expect{x.n(), x.c(), view.out_h, view.out_w};
  if (grad_y.shape() != expect) {
    throw ShapeError("GlobalDeconv backward: grad_y " + to_string(grad_y.shape()) + " expected " + to_string(expect));
  }
  const auto kh_s = kh().block(view.out_h, view.in_h);
  const auto kw_s = kw().block(view.out_w, view.in_w);

  const BasicTensor<T>* gy = &grad_y;
  BasicTensor<T> gated;
  if (activation_ == Activation::kRelu) {
    const auto pre = global_interpolate(x, kh_s, kw_s);
    gated = BasicTensor<T>(grad_y.shape());
    for (std::size_t i = 0; i < gated.size(); ++i)
      gated.values()[i] = pre.values()[i] > T(0) ? grad_y.values()[i] : T(0);
    gy = &gated;
  }

  BasicTensor<T> gx;
  if (want_grad_x) gx = BasicTensor<T>(x.shape());
  BasicMatrix<T> gkh(view.out_h, view.in_h), gkw(view.out_w, view.in_w);
  const kernels::GlobalDeconvGeometry g{x.n() * x.c(), view.in_h, view.in_w, view.out_h, view.out_w};
  kernels::parallel::global_deconv_backward<T>(g, x.values(), kh_s.values(), kw_s.values(), gy->values(),
                                               gx.values(), gkh.values(), gkw.values());
  for (std::size_t i = 0; i < view.out_h; ++i)
    for (std::size_t p = 0; p < view.in_h; ++p) kh_param.grad(0, 0, i, p) += gkh(i, p);
  for (std::size_t j = 0; j < view.out_w; ++j)
    for (std::size_t q = 0; q < view.in_w; ++q) kw_param.grad(0, 0, j, q) += gkw(j, q);
  return gx;
}

template <typename T>
void GlobalDeconv<T>::init_glorot(Rng& rng) {
  const double lh = std::sqrt(6.0 / static_cast<double>(max_out_h_ + in_h_));
  for (T& v : kh_param.value.values()) v = static_cast<T>(rng.uniform(-lh, lh));
  const double lw = std::sqrt(6.0 / static_cast<double>(max_out_w_ + in_w_));
  for (T& v : kw_param.value.values()) v = static_cast<T>(rng.uniform(-lw, lw));
}

template <typename T>
void GlobalDeconv<T>::init_bilinear() {
  set_kh(bilinear_matrix<T>(max_out_h_, in_h_));
  set_kw(bilinear_matrix<T>(max_out_w_, in_w_));
}

template <typename T>
void GlobalDeconv<T>::zero_grad() {
  kh_param.zero_grad();
  kw_param.zero_grad();
}

template <typename T>
void GlobalDeconv<T>::collect(ParamList<T>& out, const std::string& name, const std::string& group) {
  out.push_back(kh_param.ref(name + ".kh", group));
  out.push_back(kw_param.ref(name + ".kw", group));
}

template <typename T>
BasicTensor<T> bilinear_fixed(const BasicTensor<T>& x, std::size_t target_h, std::size_t target_w) {
  if (target_h < x.h() || target_w < x.w()) {
    throw ShapeError("bilinear_fixed: target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                     " is smaller than source " + std::to_string(x.h()) + "x" + std::to_string(x.w()));
  }
  BasicTensor<T> y(Shape4{x.n(), x.c(), target_h, target_w});
  const std::size_t maps = x.n() * x.c();
  const std::size_t ih = x.h(), iw = x.w();
#pragma omp parallel for schedule(static)
  for (long lm = 0; lm < static_cast<long>(maps); ++lm) {
    const auto m = static_cast<std::size_t>(lm);
    const T* xm = x.data() + m * ih * iw;
    T* ym = y.data() + m * target_h * target_w;
    for (std::size_t i = 0; i < target_h; ++i) {
      const Tap ty = align_corners_tap(i, target_h, ih);
      const std::size_t r1 = ih > 1 ? ty.lo + 1 : 0;
      for (std::size_t j = 0; j < target_w; ++j) {
        const Tap tx = align_corners_tap(j, target_w, iw);
        const std::size_t c1 = iw > 1 ? tx.lo + 1 : 0;
        const double top = (1.0 - tx.frac) * xm[ty.lo * iw + tx.lo] + tx.frac * xm[ty.lo * iw + c1];
        const double bot = (1.0 - tx.frac) * xm[r1 * iw + tx.lo] + tx.frac * xm[r1 * iw + c1];
        ym[i * target_w + j] = static_cast<T>((1.0 - ty.frac) * top + ty.frac * bot);
      }
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> bilinear_fixed_backward(const BasicTensor<T>& grad_y, std::size_t in_h, std::size_t in_w) {
  if (grad_y.h() < in_h || grad_y.w() < in_w) throw ShapeError("bilinear_fixed_backward: bad extents");
  BasicTensor<T> gx(Shape4{grad_y.n(), grad_y.c(), in_h, in_w});
  const std::size_t maps = grad_y.n() * grad_y.c();
  const std::size_t oh = grad_y.h(), ow = grad_y.w();
#pragma omp parallel for schedule(static)
  for (long lm = 0; lm < static_cast<long>(maps); ++lm) {
    const auto m = static_cast<std::size_t>(lm);
    const T* gm = grad_y.data() + m * oh * ow;
    T* xm = gx.data() + m * in_h * in_w;
    for (std::size_t i = 0; i < oh; ++i) {
      const Tap ty = align_corners_tap(i, oh, in_h);
      const std::size_t r1 = in_h > 1 ? ty.lo + 1 : 0;
      for (std::size_t j = 0; j < ow; ++j) {
        const Tap tx = align_corners_tap(j, ow, in_w);
        const std::size_t c1 = in_w > 1 ? tx.lo + 1 : 0;
        const double g = gm[i * ow + j];
        xm[ty.lo * in_w + tx.lo] += static_cast<T>(g * (1.0 - ty.frac) * (1.0 - tx.frac));
        xm[ty.lo * in_w + c1] += static_cast<T>(g * (1.0 - ty.frac) * tx.frac);
        xm[r1 * in_w + tx.lo] += static_cast<T>(g * ty.frac * (1.0 - tx.frac));
        xm[r1 * in_w + c1] += static_cast<T>(g * ty.frac * tx.frac);
      }
    }
  }
  return gx;
}

#define GDN_INSTANTIATE(T)                                                                                      \
  template class GlobalDeconv<T>;                                                                               \
  template BasicTensor<T> global_interpolate<T>(const BasicTensor<T>&, const BasicMatrix<T>&,                   \
                                                const BasicMatrix<T>&);                                         \
  template BasicTensor<T> bilinear_fixed<T>(const BasicTensor<T>&, std::size_t, std::size_t);                   \
  template BasicTensor<T> bilinear_fixed_backward<T>(const BasicTensor<T>&, std::size_t, std::size_t);          \
  template BasicMatrix<T> bilinear_matrix<T>(std::size_t, std::size_t);

GDN_INSTANTIATE(float)
GDN_INSTANTIATE(double)
#undef GDN_INSTANTIATE

}  // namespace gdn
