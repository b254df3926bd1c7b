// SPDX-License-Identifier: Apache-2.0
#include "gdn/model.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "gdn/random.hpp"
#include "gdn/tensor_io.hpp"

namespace gdn {

namespace fs = std::filesystem;

namespace {
constexpr std::array<std::size_t, 5> kWidths{3, 16, 32, 64, 64};
constexpr std::uint64_t kInitStream = 0x1417;
}  // namespace

std::size_t ModelSpec::coarse_extent(std::size_t pixels) {
  for (std::size_t i = 0; i < 4; ++i) pixels = (pixels + 1) / 2;
  return pixels;
}

ModelSpec ModelSpec::from_config(const RunConfig& c, std::size_t num_classes, std::size_t canvas) {
  ModelSpec s;
  s.variant = c.variant;
  s.num_classes = num_classes;
  s.canvas = canvas;
  s.encoder_dilation = c.encoder_dilation;
  s.gd_activation = c.gd_activation;
  s.gd_init = c.gd_init;
  s.refine_kind = c.refine_kind;
  s.spp_levels = c.spp_levels;
  s.label_hidden = c.label_hidden;
  return s;
}

template <typename T>
Segmenter<T>::Segmenter(ModelSpec spec) : spec_(std::move(spec)) {
  if (spec_.num_classes < 1) throw std::invalid_argument("model needs at least one class");
  if (spec_.canvas < kDownsample) throw std::invalid_argument("canvas must be >= 16");
  for (std::size_t b = 0; b < 4; ++b) {
    const std::size_t d = b == 3 ? spec_.encoder_dilation : 1;
    convs_[2 * b] = Conv2d<T>(kWidths[b], kWidths[b + 1], 3, 1, d, d);
    convs_[2 * b + 1] = Conv2d<T>(kWidths[b + 1], kWidths[b + 1], 3, 1, d, d);
  }
  const std::size_t k = spec_.labels();
  const std::size_t coarse = spec_.coarse();
  score_ = Conv2d<T>(kWidths[4], k, 1);
  if (uses_global_deconv(spec_.variant)) {
    gd_ = GlobalDeconv<T>(spec_.canvas, spec_.canvas, coarse, coarse, spec_.gd_activation);
  } else if (spec_.variant == Variant::kTconvLearned) {
    tconv_ = TransposedConv2d<T>(k, k, 2 * kDownsample, kDownsample);
  }
  if (has_label_head()) label_ = LabelHead<T>(k, spec_.label_hidden, spec_.num_classes);
  if (has_refine_head()) refine_ = RefineHead<T>(spec_.refine_kind, kWidths[4], k, coarse, coarse, spec_.spp_levels);
}

template <typename T>
void Segmenter<T>::init(std::uint64_t seed) {
  Rng rng(derive_seed(seed, kInitStream));
  for (auto& c : convs_) c.init_he(rng);
  score_.init_he(rng);
  if (uses_global_deconv(spec_.variant)) {
    if (spec_.gd_init == GdInit::kBilinear) {
      gd_.init_bilinear();
    } else {
      gd_.init_glorot(rng);
    }
  } else if (spec_.variant == Variant::kTconvLearned) {
    tconv_.init_bilinear();
  }
  if (has_label_head()) label_.init(rng);
  if (has_refine_head()) refine_.init(rng);
}

template <typename T>
void Segmenter<T>::zero_grad() {
  for (auto& c : convs_) c.zero_grad();
  score_.zero_grad();
  if (uses_global_deconv(spec_.variant)) gd_.zero_grad();
  if (spec_.variant == Variant::kTconvLearned) tconv_.zero_grad();
  if (has_label_head()) label_.zero_grad();
  if (has_refine_head()) refine_.zero_grad();
}

template <typename T>
ParamList<T> Segmenter<T>::params() {
  ParamList<T> out;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].collect(out, "encoder.block" + std::to_string(i / 2 + 1) + ".conv" + std::to_string(i % 2 + 1),
                      "encoder");
  }
  score_.collect(out, "score", "score");
  if (uses_global_deconv(spec_.variant)) gd_.collect(out, "upsample.gd", "upsample");
  if (spec_.variant == Variant::kTconvLearned) tconv_.collect(out, "upsample.tconv", "upsample");
  if (has_label_head()) label_.collect(out, "label_head", "label_head");
  if (has_refine_head()) refine_.collect(out, "refine_head", "refine_head");
  return out;
}

template <typename T>
std::vector<std::string> Segmenter<T>::groups() const {
  std::vector<std::string> g{"encoder", "score"};
  if (spec_.variant != Variant::kBilinearFixed) g.push_back("upsample");
  if (has_label_head()) g.push_back("label_head");
  if (has_refine_head()) g.push_back("refine_head");
  return g;
}

template <typename T>
BasicTensor<T> Segmenter<T>::upsample(const BasicTensor<T>& coarse, std::size_t out_h, std::size_t out_w,
                                      bool full_path) const {
  if (uses_global_deconv(spec_.variant)) {
    if (full_path) {
      if (out_h != gd_.max_out_h() || out_w != gd_.max_out_w()) {
        throw ShapeError("full-matrix path needs a " + std::to_string(gd_.max_out_h()) + "x" +
                         std::to_string(gd_.max_out_w()) + " input");
      }
      return gd_.forward(coarse);
    }
    return gd_.forward_subset(coarse, SubsetView{out_h, out_w, coarse.h(), coarse.w()});
  }
  if (spec_.variant == Variant::kTconvLearned) return tconv_.forward(coarse, out_h, out_w);
  return bilinear_fixed(coarse, out_h, out_w);
}

template <typename T>
BasicTensor<T> Segmenter<T>::upsample_backward(const BasicTensor<T>& coarse, const BasicTensor<T>& grad,
                                               bool want_grad_x) {
  if (uses_global_deconv(spec_.variant)) {
    return gd_.backward_subset(coarse, grad, SubsetView{grad.h(), grad.w(), coarse.h(), coarse.w()}, want_grad_x);
  }
  if (spec_.variant == Variant::kTconvLearned) return tconv_.backward(coarse, grad, want_grad_x);
  if (!want_grad_x) return {};
  return bilinear_fixed_backward(grad, coarse.h(), coarse.w());
}

template <typename T>
typename Segmenter<T>::Trace Segmenter<T>::forward(const BasicTensor<T>& x, bool with_label_head,
                                                   bool full_path) const {
  if (x.c() != 3) throw ShapeError("model input must have 3 channels, got " + to_string(x.shape()));
  if (x.h() > spec_.canvas || x.w() > spec_.canvas) {
    throw ShapeError("input " + std::to_string(x.h()) + "x" + std::to_string(x.w()) +
                     " exceeds the trained maximum H_max=" + std::to_string(spec_.canvas) +
                     ", W_max=" + std::to_string(spec_.canvas));
  }
  Trace t;
  t.input = x.shape();
  const BasicTensor<T>* cur = &x;
  for (std::size_t b = 0; b < 4; ++b) {
    auto& bt = t.blocks[b];
    bt.x = *cur;
    bt.h1 = relu_forward(convs_[2 * b].forward(bt.x));
    bt.h2 = relu_forward(convs_[2 * b + 1].forward(bt.h1));
    bt.pool = maxpool2_forward(bt.h2);
    cur = &bt.pool.y;
  }
  const auto& feats = t.features();
  t.coarse = score_.forward(feats);
  if (has_refine_head()) {
    t.refine = refine_.forward(feats);
    const auto r = refine_.output_map(*t.refine, t.coarse.h(), t.coarse.w());
    for (std::size_t i = 0; i < r.size(); ++i) t.coarse.values()[i] += r.values()[i];
  }
  if (has_label_head() && with_label_head) t.label = label_.forward(t.coarse);
  t.logits = upsample(t.coarse, x.h(), x.w(), full_path);
  return t;
}

template <typename T>
void Segmenter<T>::backward(const Trace& t, const BasicTensor<T>& grad_logits, const BasicMatrix<T>* grad_label,
                            bool through_encoder) {
  if (grad_logits.shape() != t.logits.shape()) {
    throw ShapeError("model backward: grad " + to_string(grad_logits.shape()) + " vs logits " +
                     to_string(t.logits.shape()));
  }
  const bool need_coarse = through_encoder || has_refine_head();
  auto g_coarse = upsample_backward(t.coarse, grad_logits, need_coarse);
  if (grad_label != nullptr) {
    if (!t.label) throw std::logic_error("label gradient given but the forward pass skipped the label head");
    const auto g = label_.backward(*t.label, *grad_label);
    if (need_coarse)
      for (std::size_t i = 0; i < g.size(); ++i) g_coarse.values()[i] += g.values()[i];
  }

  const auto& feats = t.features();
  BasicTensor<T> g_feat(feats.shape());
  auto accumulate = [&](const BasicTensor<T>& g) {
    for (std::size_t i = 0; i < g.size(); ++i) g_feat.values()[i] += g.values()[i];
  };
  if (has_refine_head()) accumulate(refine_.backward(*t.refine, g_coarse));
  if (!through_encoder) return;

  accumulate(score_.backward(feats, g_coarse, true));
  BasicTensor<T> g = std::move(g_feat);
  for (std::size_t b = 4; b-- > 0;) {
    const auto& bt = t.blocks[b];
    g = maxpool2_backward(bt.pool, g);
    g = convs_[2 * b + 1].backward(bt.h1, relu_backward(bt.h2, g), true);
    g = convs_[2 * b].backward(bt.x, relu_backward(bt.h1, g), b > 0);
  }
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr const char* kFormatLine = "format: gdn-checkpoint 1";

struct IndexEntry {
  std::string group;
  Shape4 shape;
  std::uint64_t offset = 0;
};

struct Index {
  std::size_t num_classes = 0;
  std::size_t canvas = 0;
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> stddev{1.0, 1.0, 1.0};
  std::map<std::string, IndexEntry> entries;
};

Index read_index(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open " + path.string());
  Index idx;
  std::string line;
  bool format_ok = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line == kFormatLine) {
      format_ok = true;
    } else if (line.rfind("num_classes: ", 0) == 0) {
      idx.num_classes = std::stoul(line.substr(13));
    } else if (line.rfind("canvas: ", 0) == 0) {
      idx.canvas = std::stoul(line.substr(8));
    } else if (line.rfind("mean: ", 0) == 0) {
      if (std::sscanf(line.c_str() + 6, "%lf,%lf,%lf", &idx.mean[0], &idx.mean[1], &idx.mean[2]) != 3) {
        throw CheckpointError(path.string() + ": bad mean line");
      }
    } else if (line.rfind("stddev: ", 0) == 0) {
      if (std::sscanf(line.c_str() + 8, "%lf,%lf,%lf", &idx.stddev[0], &idx.stddev[1], &idx.stddev[2]) != 3) {
        throw CheckpointError(path.string() + ": bad stddev line");
      }
    } else {
      std::istringstream ss(line);
      std::string name, group, shape, offset;
      if (!std::getline(ss, name, '\t') || !std::getline(ss, group, '\t') || !std::getline(ss, shape, '\t') ||
          !std::getline(ss, offset)) {
        throw CheckpointError(path.string() + ": malformed line '" + line + "'");
      }
      Shape4 s;
      if (std::sscanf(shape.c_str(), "%zu,%zu,%zu,%zu", &s.n, &s.c, &s.h, &s.w) != 4) {
        throw CheckpointError(path.string() + ": bad shape '" + shape + "'");
      }
      idx.entries[name] = IndexEntry{group, s, std::stoull(offset)};
    }
  }
  if (!format_ok) throw CheckpointError(path.string() + ": missing format line");
  if (idx.num_classes == 0 || idx.canvas == 0) throw CheckpointError(path.string() + ": missing model header");
  return idx;
}

}  // namespace

template <typename T>
void save_checkpoint(const fs::path& dir, Segmenter<T>& model, const RunConfig& cfg) {
  fs::create_directories(dir);
  std::ofstream data(dir / "params.gdt", std::ios::binary);
  std::ofstream index(dir / "params.index");
  if (!data || !index) throw CheckpointError("cannot write checkpoint in " + dir.string());
  const auto& mean = model.spec().input_mean;
  const auto& sd = model.spec().input_stddev;
  char stats[256];
  std::snprintf(stats, sizeof stats, "mean: %.17g,%.17g,%.17g\nstddev: %.17g,%.17g,%.17g\n", mean[0], mean[1],
                mean[2], sd[0], sd[1], sd[2]);
  index << kFormatLine << "\nnum_classes: " << model.spec().num_classes << "\ncanvas: " << model.spec().canvas
        << "\n" << stats;
  std::uint64_t offset = 0;
  for (const auto& p : model.params()) {
    BasicTensor<T> t(p.shape, std::vector<T>(p.value.begin(), p.value.end()));
    write_gdt1(data, t);
    index << p.name << '\t' << p.group << '\t' << p.shape.n << ',' << p.shape.c << ',' << p.shape.h << ','
          << p.shape.w << '\t' << offset << '\n';
    offset += gdt1_record_bytes(p.shape);
  }
  if (!data || !index) throw CheckpointError("write failed for checkpoint in " + dir.string());
  save_config(dir / "config.cfg", cfg);
}

CheckpointInfo read_checkpoint_info(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw CheckpointError("checkpoint directory " + dir.string() + " not found");
  CheckpointInfo info;
  info.config = load_config(dir / "config.cfg");
  const auto idx = read_index(dir / "params.index");
  info.spec = ModelSpec::from_config(info.config, idx.num_classes, idx.canvas);
  info.spec.input_mean = idx.mean;
  info.spec.input_stddev = idx.stddev;
  return info;
}

template <typename T>
Segmenter<T> load_checkpoint(const fs::path& dir) {
  const auto info = read_checkpoint_info(dir);
  const auto idx = read_index(dir / "params.index");
  Segmenter<T> model(info.spec);
  std::ifstream data(dir / "params.gdt", std::ios::binary);
  if (!data) throw CheckpointError("cannot open " + (dir / "params.gdt").string());
  auto params = model.params();
  if (params.size() != idx.entries.size()) {
    throw CheckpointError("checkpoint/config mismatch: checkpoint holds " + std::to_string(idx.entries.size()) +
                          " tensors, model expects " + std::to_string(params.size()));
  }
  for (auto& p : params) {
    auto it = idx.entries.find(p.name);
    if (it == idx.entries.end()) throw CheckpointError("checkpoint/config mismatch: no tensor '" + p.name + "'");
    if (it->second.shape != p.shape) {
      throw CheckpointError("checkpoint/config mismatch: '" + p.name + "' is " + to_string(it->second.shape) +
                            ", model expects " + to_string(p.shape));
    }
    data.seekg(static_cast<std::streamoff>(it->second.offset));
    const auto t = read_gdt1<T>(data);
    if (t.shape() != p.shape) throw CheckpointError("checkpoint record for '" + p.name + "' disagrees with index");
    std::copy(t.values().begin(), t.values().end(), p.value.begin());
  }
  return model;
}

template class Segmenter<float>;
template class Segmenter<double>;
template void save_checkpoint<float>(const fs::path&, Segmenter<float>&, const RunConfig&);
template void save_checkpoint<double>(const fs::path&, Segmenter<double>&, const RunConfig&);
template Segmenter<float> load_checkpoint<float>(const fs::path&);
template Segmenter<double> load_checkpoint<double>(const fs::path&);

}  // namespace gdn
