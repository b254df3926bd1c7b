// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gdn/tensor.hpp"

namespace gdn {

// counts(c, c') = pixels of true class c predicted as c'. Class 0 is
// background and takes part in every score. Ignore-labelled ground-truth
// pixels are skipped.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_labels = 0) : k_(num_labels), counts_(num_labels * num_labels, 0) {}

  void accumulate(const ClassMap& pred, const ClassMap& gt);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

  [[nodiscard]] std::size_t size() const { return k_; }
  [[nodiscard]] std::uint64_t operator()(std::size_t truth, std::size_t pred) const { return counts_[truth * k_ + pred]; }
  std::uint64_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * k_ + pred]; }
  [[nodiscard]] std::uint64_t total() const;

  // nullopt for a class absent from both prediction and truth.
  [[nodiscard]] std::vector<std::optional<double>> per_class_iou() const;
  // Mean over classes with a defined IoU; 0 when none is defined.
  [[nodiscard]] double mean_iou() const;
  // Throws on an empty matrix.
  [[nodiscard]] double pixel_accuracy() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

// Per-pixel argmax over channels of item n; ties go to the lower class index.
template <typename T>
ClassMap argmax_classes(const BasicTensor<T>& scores, std::size_t n);

}  // namespace gdn
