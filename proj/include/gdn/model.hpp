// SPDX-License-Identifier: Apache-2.0
//
// The desk-scale segmentation network: a 4-block convolutional encoder
// (x16 downsampling, widths 16-32-64-64), a 1x1 score layer producing the
// coarse (classes + background) map, and one of three upsamplers (fixed
// bilinear, learned transposed convolution, global deconvolution). Optional
// heads: the multi-label head on the coarse score map and the refinement head
// whose output is added to the coarse scores.
//
// Parameter groups: encoder, score, upsample, label_head, refine_head.

#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gdn/config.hpp"
#include "gdn/heads.hpp"
#include "gdn/layers.hpp"
#include "gdn/upsample.hpp"

namespace gdn {

inline constexpr std::size_t kDownsample = 16;

struct ModelSpec {
  Variant variant = Variant::kGlobalDeconv;
  std::size_t num_classes = 6;  // excluding background
  std::size_t canvas = 128;     // maximum input height/width
  std::size_t encoder_dilation = 1;
  Activation gd_activation = Activation::kNone;
  GdInit gd_init = GdInit::kGlorot;
  RefineKind refine_kind = RefineKind::kSpp;
  std::vector<std::size_t> spp_levels{1, 2, 3, 4, 5};
  std::size_t label_hidden = 64;
  std::array<double, 3> input_mean{0.0, 0.0, 0.0};    // subtracted from [0,1] pixels
  std::array<double, 3> input_stddev{1.0, 1.0, 1.0};  // then divided out

  static ModelSpec from_config(const RunConfig& c, std::size_t num_classes, std::size_t canvas);
  [[nodiscard]] std::size_t labels() const { return num_classes + 1; }
  [[nodiscard]] std::size_t coarse() const { return coarse_extent(canvas); }
  static std::size_t coarse_extent(std::size_t pixels);
};

template <typename T>
class Segmenter {
 public:
  struct BlockTrace {
    BasicTensor<T> x, h1, h2;  // conv1 input, relu outputs
    MaxPoolResult<T> pool;
  };
  struct Trace {
    Shape4 input;
    std::array<BlockTrace, 4> blocks;
    BasicTensor<T> coarse;  // score layer output (+ refinement when present)
    std::optional<typename RefineHead<T>::Trace> refine;
    std::optional<typename LabelHead<T>::Trace> label;
    BasicTensor<T> logits;  // input resolution

    [[nodiscard]] const BasicTensor<T>& features() const { return blocks[3].pool.y; }
  };

  explicit Segmenter(ModelSpec spec);

  // Throws ShapeError naming H_max/W_max when x exceeds the trained canvas.
  // full_path runs the global deconvolution with the stored matrices as a
  // whole, which requires a full-size input.
  Trace forward(const BasicTensor<T>& x, bool with_label_head = true, bool full_path = false) const;

  // grad_label may be null. With through_encoder false only the upsampler and
  // the heads receive gradients.
  void backward(const Trace& t, const BasicTensor<T>& grad_logits, const BasicMatrix<T>* grad_label,
                bool through_encoder);

  void init(std::uint64_t seed);
  void zero_grad();
  ParamList<T> params();
  [[nodiscard]] std::vector<std::string> groups() const;

  [[nodiscard]] const ModelSpec& spec() const { return spec_; }
  [[nodiscard]] bool has_label_head() const { return uses_label_loss(spec_.variant); }
  [[nodiscard]] bool has_refine_head() const { return uses_refine_head(spec_.variant); }
  GlobalDeconv<T>& global_deconv() { return gd_; }
  const GlobalDeconv<T>& global_deconv() const { return gd_; }

 private:
  BasicTensor<T> upsample(const BasicTensor<T>& coarse, std::size_t out_h, std::size_t out_w, bool full_path) const;
  BasicTensor<T> upsample_backward(const BasicTensor<T>& coarse, const BasicTensor<T>& grad, bool want_grad_x);

  ModelSpec spec_;
  std::array<Conv2d<T>, 8> convs_;
  Conv2d<T> score_;
  GlobalDeconv<T> gd_;
  TransposedConv2d<T> tconv_;
  LabelHead<T> label_;
  RefineHead<T> refine_;
};

// ---------------------------------------------------------------- checkpoints
//
// <dir>/params.gdt    concatenated GDT1 records
// <dir>/params.index  header lines, then name<TAB>group<TAB>n,c,h,w<TAB>byte offset
// <dir>/config.cfg    the run configuration

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& dir, Segmenter<T>& model, const RunConfig& cfg);

struct CheckpointInfo {
  RunConfig config;
  ModelSpec spec;
};

CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir);

// Builds the model described by the checkpoint and loads its parameters.
template <typename T>
Segmenter<T> load_checkpoint(const std::filesystem::path& dir);

}  // namespace gdn
