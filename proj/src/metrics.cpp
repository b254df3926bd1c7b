// SPDX-License-Identifier: Apache-2.0
#include "gdn/metrics.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

namespace gdn {

void ConfusionMatrix::accumulate(const ClassMap& pred, const ClassMap& gt) {
  if (pred.h != gt.h || pred.w != gt.w) {
    throw ShapeError("confusion: prediction " + std::to_string(pred.h) + "x" + std::to_string(pred.w) +
                     " vs ground truth " + std::to_string(gt.h) + "x" + std::to_string(gt.w));
  }
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    const std::uint8_t t = gt.data[i];
    if (t == ClassMap::kIgnore) continue;
    const std::uint8_t p = pred.data[i];
    if (t >= k_ || p >= k_) {
      throw std::out_of_range("confusion: class " + std::to_string(t >= k_ ? t : p) + " outside [0, " +
                              std::to_string(k_ - 1) + "]");
    }
    ++counts_[t * k_ + p];
  }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw ShapeError("confusion: merging matrices of different sizes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::vector<std::optional<double>> ConfusionMatrix::per_class_iou() const {
  std::vector<std::optional<double>> iou(k_);
  for (std::size_t c = 0; c < k_; ++c) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < k_; ++j) {
      row += (*this)(c, j);
      col += (*this)(j, c);
    }
    const std::uint64_t tp = (*this)(c, c);
    const std::uint64_t denom = row + col - tp;
    if (denom > 0) iou[c] = static_cast<double>(tp) / static_cast<double>(denom);
  }
  return iou;
}

double ConfusionMatrix::mean_iou() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : per_class_iou()) {
    if (!v) continue;
    sum += *v;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double ConfusionMatrix::pixel_accuracy() const {
  const std::uint64_t t = total();
  if (t == 0) throw std::domain_error("pixel accuracy of an empty confusion matrix");
  std::uint64_t diag = 0;
  for (std::size_t c = 0; c < k_; ++c) diag += (*this)(c, c);
  return static_cast<double>(diag) / static_cast<double>(t);
}

template <typename T>
ClassMap argmax_classes(const BasicTensor<T>& scores, std::size_t n) {
  ClassMap m(scores.h(), scores.w());
  const std::size_t plane = scores.h() * scores.w();
  const T* base = scores.data() + n * scores.c() * plane;
  for (std::size_t p = 0; p < plane; ++p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.c(); ++c)
      if (base[c * plane + p] > base[best * plane + p]) best = c;
    m.data[p] = static_cast<std::uint8_t>(best);
  }
  return m;
}

template ClassMap argmax_classes<float>(const BasicTensor<float>&, std::size_t);
template ClassMap argmax_classes<double>(const BasicTensor<double>&, std::size_t);

}  // namespace gdn
