// SPDX-License-Identifier: Apache-2.0
#include "gdn/heads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gdn {

LossReport combined_loss(double seg, double label, double lambda_label) {
  if (!(lambda_label >= 0.0)) throw std::invalid_argument("lambda_label must be >= 0");
  return LossReport{seg, label, seg + lambda_label * label, lambda_label};
}

template <typename T>
BasicTensor<T> softmax_pixelwise(const BasicTensor<T>& logits) {
  BasicTensor<T> probs(logits.shape());
  const std::size_t plane = logits.h() * logits.w();
  const std::size_t ch = logits.c();
  for (std::size_t n = 0; n < logits.n(); ++n) {
    const T* in = logits.data() + n * ch * plane;
    T* out = probs.data() + n * ch * plane;
#pragma omp parallel for schedule(static)
    for (long lp = 0; lp < static_cast<long>(plane); ++lp) {
      const auto p = static_cast<std::size_t>(lp);
      T mx = in[p];
      for (std::size_t c = 1; c < ch; ++c) mx = std::max(mx, in[c * plane + p]);
      T sum = 0;
      for (std::size_t c = 0; c < ch; ++c) {
        const T e = std::exp(in[c * plane + p] - mx);
        out[c * plane + p] = e;
        sum += e;
      }
      for (std::size_t c = 0; c < ch; ++c) out[c * plane + p] /= sum;
    }
  }
  return probs;
}

namespace {

template <typename T>
void check_gt(const BasicTensor<T>& probs, std::span<const ClassMap> gt) {
  if (gt.size() != probs.n()) {
    throw ShapeError("seg_loss: " + std::to_string(gt.size()) + " ground-truth maps for batch of " +
                     std::to_string(probs.n()));
  }
  for (const auto& g : gt) {
    if (g.h != probs.h() || g.w != probs.w()) throw ShapeError("seg_loss: ground-truth map size mismatch");
    for (std::uint8_t v : g.data) {
      if (v != ClassMap::kIgnore && v >= probs.c()) {
        throw std::out_of_range("seg_loss: class " + std::to_string(v) + " outside [0, " +
                                std::to_string(probs.c() - 1) + "]");
      }
    }
  }
}

std::size_t counted_pixels(std::span<const ClassMap> gt) {
  std::size_t n = 0;
  for (const auto& g : gt)
    for (std::uint8_t v : g.data) n += v != ClassMap::kIgnore;
  return n;
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

template <typename T>
double seg_loss(const BasicTensor<T>& probs, std::span<const ClassMap> gt) {
  check_gt(probs, gt);
  const std::size_t count = counted_pixels(gt);
  if (count == 0) return 0.0;
  const std::size_t plane = probs.h() * probs.w();
  double sum = 0.0;
  for (std::size_t n = 0; n < probs.n(); ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      const std::uint8_t cls = gt[n].data[p];
      if (cls == ClassMap::kIgnore) continue;
      const double q = static_cast<double>(probs.data()[(n * probs.c() + cls) * plane + p]);
      sum -= std::log(std::max(q, std::numeric_limits<double>::min()));
    }
  }
  return sum / static_cast<double>(count);
}

template <typename T>
BasicTensor<T> seg_loss_backward(const BasicTensor<T>& probs, std::span<const ClassMap> gt) {
  check_gt(probs, gt);
  BasicTensor<T> grad(probs.shape());
  const std::size_t count = counted_pixels(gt);
  if (count == 0) return grad;
  const T inv = T(1) / static_cast<T>(count);
  const std::size_t plane = probs.h() * probs.w();
  for (std::size_t n = 0; n < probs.n(); ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      const std::uint8_t cls = gt[n].data[p];
      if (cls == ClassMap::kIgnore) continue;
      for (std::size_t c = 0; c < probs.c(); ++c) {
        const std::size_t i = (n * probs.c() + c) * plane + p;
        grad.data()[i] = (probs.data()[i] - (c == cls ? T(1) : T(0))) * inv;
      }
    }
  }
  return grad;
}

double label_loss(std::span<const double> scores, std::span<const std::uint8_t> presence) {
  if (scores.size() != presence.size()) {
    throw ShapeError("label_loss: " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(presence.size()) + " labels");
  }
  if (scores.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    // -[p log s(z) + (1-p) log(1 - s(z))] = p softplus(-z) + (1-p) softplus(z)
    sum += presence[c] ? softplus(-scores[c]) : softplus(scores[c]);
  }
  return sum / static_cast<double>(scores.size());
}

std::vector<double> label_loss_backward(std::span<const double> scores, std::span<const std::uint8_t> presence) {
  if (scores.size() != presence.size()) throw ShapeError("label_loss_backward: length mismatch");
  std::vector<double> g(scores.size());
  for (std::size_t c = 0; c < scores.size(); ++c) {
    g[c] = (sigmoid(scores[c]) - (presence[c] ? 1.0 : 0.0)) / static_cast<double>(scores.size());
  }
  return g;
}

template <typename T>
double label_loss_batch(const BasicMatrix<T>& scores, const std::vector<std::vector<std::uint8_t>>& presence) {
  if (presence.size() != scores.rows()) throw ShapeError("label_loss_batch: batch size mismatch");
  if (scores.rows() == 0) return 0.0;
  double sum = 0.0;
  std::vector<double> row(scores.cols());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    for (std::size_t c = 0; c < scores.cols(); ++c) row[c] = static_cast<double>(scores(r, c));
    sum += label_loss(row, presence[r]);
  }
  return sum / static_cast<double>(scores.rows());
}

template <typename T>
BasicMatrix<T> label_loss_batch_backward(const BasicMatrix<T>& scores,
                                         const std::vector<std::vector<std::uint8_t>>& presence) {
  if (presence.size() != scores.rows()) throw ShapeError("label_loss_batch_backward: batch size mismatch");
  BasicMatrix<T> g(scores.rows(), scores.cols());
  std::vector<double> row(scores.cols());
  const double inv_batch = scores.rows() == 0 ? 0.0 : 1.0 / static_cast<double>(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    for (std::size_t c = 0; c < scores.cols(); ++c) row[c] = static_cast<double>(scores(r, c));
    const auto gr = label_loss_backward(row, presence[r]);
    for (std::size_t c = 0; c < scores.cols(); ++c) g(r, c) = static_cast<T>(gr[c] * inv_batch);
  }
  return g;
}

std::vector<std::uint8_t> labels_from_mask(const ClassMap& g, std::size_t num_classes) {
  std::vector<std::uint8_t> presence(num_classes, 0);
  for (std::uint8_t v : g.data) {
    if (v == 0 || v == ClassMap::kIgnore) continue;
    if (v <= num_classes) presence[v - 1] = 1;
  }
  return presence;
}

// ---------------------------------------------------------------- SPP

std::size_t spp_length(std::size_t channels, std::span<const std::size_t> levels) {
  std::size_t bins = 0;
  for (std::size_t n : levels) bins += n * n;
  return channels * bins;
}

template <typename T>
SppResult<T> spp_forward(const BasicTensor<T>& x, std::span<const std::size_t> levels) {
  if (levels.empty()) throw std::invalid_argument("spp: no pyramid levels");
  const std::size_t top = *std::max_element(levels.begin(), levels.end());
  if (x.h() < top || x.w() < top) {
    throw ShapeError("spp: input " + std::to_string(x.h()) + "x" + std::to_string(x.w()) +
                     " smaller than the largest grid " + std::to_string(top));
  }
  if (std::find(levels.begin(), levels.end(), std::size_t{0}) != levels.end()) {
    throw std::invalid_argument("spp: level 0 is not a grid");
  }
  const std::size_t len = spp_length(x.c(), levels);
  SppResult<T> r{BasicMatrix<T>(x.n(), len), std::vector<std::uint32_t>(x.n() * len), x.shape()};
  const std::size_t h = x.h(), w = x.w();
  for (std::size_t b = 0; b < x.n(); ++b) {
    std::size_t k = 0;
    for (std::size_t n : levels) {
      for (std::size_t c = 0; c < x.c(); ++c) {
        const std::size_t base = (b * x.c() + c) * h * w;
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t r0 = i * h / n, r1 = (i + 1) * h / n;
          for (std::size_t j = 0; j < n; ++j, ++k) {
            const std::size_t c0 = j * w / n, c1 = (j + 1) * w / n;
            std::size_t best = base + r0 * w + c0;
            for (std::size_t y = r0; y < r1; ++y)
              for (std::size_t xx = c0; xx < c1; ++xx)
                if (x.data()[base + y * w + xx] > x.data()[best]) best = base + y * w + xx;
            r.pooled(b, k) = x.data()[best];
            r.argmax[b * len + k] = static_cast<std::uint32_t>(best);
          }
        }
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> spp_backward(const SppResult<T>& fwd, const BasicMatrix<T>& grad_pooled) {
  if (grad_pooled.rows() != fwd.pooled.rows() || grad_pooled.cols() != fwd.pooled.cols()) {
    throw ShapeError("spp backward: gradient shape mismatch");
  }
  BasicTensor<T> gx(fwd.in_shape);
  for (std::size_t i = 0; i < fwd.argmax.size(); ++i) gx.values()[fwd.argmax[i]] += grad_pooled.values()[i];
  return gx;
}

// ---------------------------------------------------------------- LabelHead

template <typename T>
LabelHead<T>::LabelHead(std::size_t in_channels, std::size_t hidden, std::size_t num_classes)
    : fc1(in_channels, hidden), fc2(hidden, hidden), fc3(hidden, num_classes) {}

template <typename T>
typename LabelHead<T>::Trace LabelHead<T>::forward(const BasicTensor<T>& features) const {
  Trace t;
  t.in_shape = features.shape();
  t.pooled = BasicMatrix<T>(features.n(), features.c());
  const std::size_t plane = features.h() * features.w();
  for (std::size_t n = 0; n < features.n(); ++n) {
    for (std::size_t c = 0; c < features.c(); ++c) {
      T s = 0;
      for (T v : features.plane(n, c)) s += v;
      t.pooled(n, c) = s / static_cast<T>(plane);
    }
  }
  auto relu = [](BasicMatrix<T> m) {
    for (T& v : m.values()) v = v > T(0) ? v : T(0);
    return m;
  };
  t.a1 = fc1.forward(t.pooled);
  t.h1 = relu(t.a1);
  t.a2 = fc2.forward(t.h1);
  t.h2 = relu(t.a2);
  t.scores = fc3.forward(t.h2);
  return t;
}

template <typename T>
BasicTensor<T> LabelHead<T>::backward(const Trace& t, const BasicMatrix<T>& grad_scores) {
  auto gate = [](BasicMatrix<T> g, const BasicMatrix<T>& pre) {
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!(pre.values()[i] > T(0))) g.values()[i] = T(0);
    return g;
  };
  auto g2 = gate(fc3.backward(t.h2, grad_scores), t.a2);
  auto g1 = gate(fc2.backward(t.h1, g2), t.a1);
  auto gp = fc1.backward(t.pooled, g1);
  BasicTensor<T> gx(t.in_shape);
  const T inv = T(1) / static_cast<T>(t.in_shape.h * t.in_shape.w);
  for (std::size_t n = 0; n < t.in_shape.n; ++n)
    for (std::size_t c = 0; c < t.in_shape.c; ++c)
      for (T& v : gx.plane(n, c)) v = gp(n, c) * inv;
  return gx;
}

template <typename T>
void LabelHead<T>::init(Rng& rng) {
  fc1.init_glorot(rng);
  fc2.init_glorot(rng);
  fc3.init_glorot(rng);
}

template <typename T>
void LabelHead<T>::zero_grad() {
  fc1.zero_grad();
  fc2.zero_grad();
  fc3.zero_grad();
}

template <typename T>
void LabelHead<T>::collect(ParamList<T>& out, const std::string& name, const std::string& group) {
  fc1.collect(out, name + ".fc1", group);
  fc2.collect(out, name + ".fc2", group);
  fc3.collect(out, name + ".fc3", group);
}

// ---------------------------------------------------------------- RefineHead

std::string to_string(RefineKind k) { return k == RefineKind::kSpp ? "spp" : "plain"; }

RefineKind parse_refine_kind(const std::string& s) {
  if (s == "spp") return RefineKind::kSpp;
  if (s == "plain") return RefineKind::kPlain;
  throw std::invalid_argument("unknown refine head '" + s + "' (expected spp|plain)");
}

template <typename T>
RefineHead<T>::RefineHead(RefineKind kind, std::size_t in_channels, std::size_t out_channels, std::size_t coarse_h,
                          std::size_t coarse_w, std::vector<std::size_t> levels)
    : fc(kind == RefineKind::kSpp ? spp_length(in_channels, levels) : in_channels * coarse_h * coarse_w,
         out_channels * coarse_h * coarse_w),
      kind_(kind),
      in_c_(in_channels),
      out_c_(out_channels),
      coarse_h_(coarse_h),
      coarse_w_(coarse_w),
      levels_(std::move(levels)) {}

template <typename T>
typename RefineHead<T>::Trace RefineHead<T>::forward(const BasicTensor<T>& features) const {
  Trace t;
  t.in_shape = features.shape();
  if (features.c() != in_c_) throw ShapeError("RefineHead: channel mismatch");
  if (kind_ == RefineKind::kSpp) {
    t.spp = spp_forward(features, levels_);
    t.output = fc.forward(t.spp.pooled);
  } else {
    if (features.h() > coarse_h_ || features.w() > coarse_w_) {
      throw ShapeError("RefineHead: features larger than the trained coarse extent");
    }
    t.input = BasicMatrix<T>(features.n(), in_c_ * coarse_h_ * coarse_w_);
    for (std::size_t n = 0; n < features.n(); ++n)
      for (std::size_t c = 0; c < in_c_; ++c)
        for (std::size_t i = 0; i < features.h(); ++i)
          for (std::size_t j = 0; j < features.w(); ++j)
            t.input(n, (c * coarse_h_ + i) * coarse_w_ + j) = features(n, c, i, j);
    t.output = fc.forward(t.input);
  }
  return t;
}

template <typename T>
BasicTensor<T> RefineHead<T>::output_map(const Trace& t, std::size_t h, std::size_t w) const {
  if (h > coarse_h_ || w > coarse_w_) throw ShapeError("RefineHead: requested map larger than trained extent");
  BasicTensor<T> m(Shape4{t.output.rows(), out_c_, h, w});
  for (std::size_t n = 0; n < t.output.rows(); ++n)
    for (std::size_t c = 0; c < out_c_; ++c)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) m(n, c, i, j) = t.output(n, (c * coarse_h_ + i) * coarse_w_ + j);
  return m;
}

template <typename T>
BasicTensor<T> RefineHead<T>::backward(const Trace& t, const BasicTensor<T>& grad_map) {
  BasicMatrix<T> g(t.output.rows(), t.output.cols());
  for (std::size_t n = 0; n < grad_map.n(); ++n)
    for (std::size_t c = 0; c < out_c_; ++c)
      for (std::size_t i = 0; i < grad_map.h(); ++i)
        for (std::size_t j = 0; j < grad_map.w(); ++j)
          g(n, (c * coarse_h_ + i) * coarse_w_ + j) = grad_map(n, c, i, j);
  if (kind_ == RefineKind::kSpp) {
    return spp_backward(t.spp, fc.backward(t.spp.pooled, g));
  }
  const auto gin = fc.backward(t.input, g);
  BasicTensor<T> gx(t.in_shape);
  for (std::size_t n = 0; n < t.in_shape.n; ++n)
    for (std::size_t c = 0; c < in_c_; ++c)
      for (std::size_t i = 0; i < t.in_shape.h; ++i)
        for (std::size_t j = 0; j < t.in_shape.w; ++j) gx(n, c, i, j) = gin(n, (c * coarse_h_ + i) * coarse_w_ + j);
  return gx;
}

template <typename T>
void RefineHead<T>::init(Rng& rng) {
  fc.init_glorot(rng);
}

template <typename T>
void RefineHead<T>::zero_grad() {
  fc.zero_grad();
}

template <typename T>
void RefineHead<T>::collect(ParamList<T>& out, const std::string& name, const std::string& group) {
  fc.collect(out, name + ".fc", group);
}

#define GDN_INSTANTIATE(T)                                                                                       \
  template BasicTensor<T> softmax_pixelwise<T>(const BasicTensor<T>&);                                           \
  template double seg_loss<T>(const BasicTensor<T>&, std::span<const ClassMap>);                                 \
  template BasicTensor<T> seg_loss_backward<T>(const BasicTensor<T>&, std::span<const ClassMap>);                \
  template double label_loss_batch<T>(const BasicMatrix<T>&, const std::vector<std::vector<std::uint8_t>>&);     \
  template BasicMatrix<T> label_loss_batch_backward<T>(const BasicMatrix<T>&,                                    \
                                                       const std::vector<std::vector<std::uint8_t>>&);           \
  template SppResult<T> spp_forward<T>(const BasicTensor<T>&, std::span<const std::size_t>);                     \
  template BasicTensor<T> spp_backward<T>(const SppResult<T>&, const BasicMatrix<T>&);                           \
  template class LabelHead<T>;                                                                                   \
  template class RefineHead<T>;

GDN_INSTANTIATE(float)
GDN_INSTANTIATE(double)
#undef GDN_INSTANTIATE

}  // namespace gdn
