// SPDX-License-Identifier: Apache-2.0
//
// Segmentation and multi-label losses, plus the auxiliary heads: the 3-layer
// label head (global average of the coarse score map) and the refinement head
// (spatial pyramid pooling + one fully-connected layer on the encoder features).
//
// Channel 0 of the segmentation logits is background. Presence vectors and
// label scores cover classes 1..C only.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gdn/layers.hpp"
#include "gdn/param.hpp"
#include "gdn/tensor.hpp"

namespace gdn {

struct LossReport {
  double seg_loss = 0.0;
  double label_loss = 0.0;
  double combined = 0.0;
  double lambda_label = 0.0;
};

LossReport combined_loss(double seg, double label, double lambda_label);

template <typename T>
BasicTensor<T> softmax_pixelwise(const BasicTensor<T>& logits);

// Mean of -log p(true class) over all non-ignored pixels of the batch.
// gt holds one map per batch item.
template <typename T>
double seg_loss(const BasicTensor<T>& probs, std::span<const ClassMap> gt);

// Gradient w.r.t. the logits that produced probs: (probs - onehot) / |I|.
template <typename T>
BasicTensor<T> seg_loss_backward(const BasicTensor<T>& probs, std::span<const ClassMap> gt);

// Sigmoid + mean binary cross-entropy for one image.
double label_loss(std::span<const double> scores, std::span<const std::uint8_t> presence);
std::vector<double> label_loss_backward(std::span<const double> scores, std::span<const std::uint8_t> presence);

// Batched form: rows of scores are images; the loss is averaged over images.
template <typename T>
double label_loss_batch(const BasicMatrix<T>& scores, const std::vector<std::vector<std::uint8_t>>& presence);
template <typename T>
BasicMatrix<T> label_loss_batch_backward(const BasicMatrix<T>& scores,
                                         const std::vector<std::vector<std::uint8_t>>& presence);

// presence[c - 1] = 1 iff some pixel equals class c (1 <= c <= num_classes).
std::vector<std::uint8_t> labels_from_mask(const ClassMap& g, std::size_t num_classes);

// ---------------------------------------------------------------- SPP

std::size_t spp_length(std::size_t channels, std::span<const std::size_t> levels);

template <typename T>
struct SppResult {
  BasicMatrix<T> pooled;  // batch x spp_length, ordered (level, channel, cell)
  std::vector<std::uint32_t> argmax;
  Shape4 in_shape;
};

template <typename T>
SppResult<T> spp_forward(const BasicTensor<T>& x, std::span<const std::size_t> levels);

template <typename T>
BasicTensor<T> spp_backward(const SppResult<T>& fwd, const BasicMatrix<T>& grad_pooled);

// ---------------------------------------------------------------- heads

// Global average of the coarse features followed by three fully-connected
// layers (ReLU between), ending in one score per non-background class.
template <typename T>
class LabelHead {
 public:
  struct Trace {
    Shape4 in_shape;
    BasicMatrix<T> pooled, a1, h1, a2, h2, scores;
  };

  LabelHead() = default;
  LabelHead(std::size_t in_channels, std::size_t hidden, std::size_t num_classes);

  Trace forward(const BasicTensor<T>& features) const;
  BasicTensor<T> backward(const Trace& trace, const BasicMatrix<T>& grad_scores);

  void init(Rng& rng);
  void zero_grad();
  void collect(ParamList<T>& out, const std::string& name, const std::string& group);

  Linear<T> fc1, fc2, fc3;
};

enum class RefineKind { kSpp, kPlain };

std::string to_string(RefineKind k);
RefineKind parse_refine_kind(const std::string& s);

// Fully-connected refinement of the coarse score map from the whole feature
// map. kSpp pools the features with a spatial pyramid first (fixed-length for
// any input); kPlain flattens features zero-padded to the trained coarse extent.
// The output is a (classes, coarse_h, coarse_w) map; smaller inputs take its
// top-left block.
template <typename T>
class RefineHead {
 public:
  struct Trace {
    Shape4 in_shape;
    SppResult<T> spp;
    BasicMatrix<T> input;
    BasicMatrix<T> output;
  };

  RefineHead() = default;
  RefineHead(RefineKind kind, std::size_t in_channels, std::size_t out_channels, std::size_t coarse_h,
             std::size_t coarse_w, std::vector<std::size_t> levels);

  Trace forward(const BasicTensor<T>& features) const;
  // Refinement map cropped to (h, w).
  BasicTensor<T> output_map(const Trace& trace, std::size_t h, std::size_t w) const;
  BasicTensor<T> backward(const Trace& trace, const BasicTensor<T>& grad_map);

  void init(Rng& rng);
  void zero_grad();
  void collect(ParamList<T>& out, const std::string& name, const std::string& group);

  [[nodiscard]] RefineKind kind() const { return kind_; }
  [[nodiscard]] const std::vector<std::size_t>& levels() const { return levels_; }

  Linear<T> fc;

 private:
  RefineKind kind_ = RefineKind::kSpp;
  std::size_t in_c_ = 0, out_c_ = 0, coarse_h_ = 0, coarse_w_ = 0;
  std::vector<std::size_t> levels_;
};

}  // namespace gdn
