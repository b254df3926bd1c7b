// SPDX-License-Identifier: Apache-2.0
#include "gdn/gradcheck_suites.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <ranges>
#include <stdexcept>

#include "gdn/heads.hpp"
#include "gdn/layers.hpp"
#include "gdn/optim.hpp"
#include "gdn/random.hpp"
#include "gdn/upsample.hpp"

namespace gdn {

namespace {

using Fn = std::function<double()>;

// Collects per-part maxima for one suite.
class Recorder {
 public:
  Recorder(std::string suite, const GradcheckOptions& opt) : suite_(std::move(suite)), opt_(opt) {}

  void check(const std::string& part, std::span<double> x, std::vector<double> analytic, const Fn& f) {
    for (double& a : analytic) a *= opt_.fault_scale;
    const auto r = gradcheck(f, x, analytic, opt_.eps);
    auto& s = parts_[part];
    s.name = suite_ + "." + part;
    s.coordinates += r.checked;
    s.max_rel_error = std::max(s.max_rel_error, r.max_rel_error);
  }

  void end_instance() {
    for (auto& [_, s] : parts_) ++s.instances;
  }

  void flush(std::vector<SuiteResult>& out) const {
    for (auto s : parts_ | std::views::values) {
      s.passed = s.max_rel_error <= opt_.tolerance;
      out.push_back(s);
    }
  }

 private:
  std::string suite_;
  const GradcheckOptions& opt_;
  std::map<std::string, SuiteResult> parts_;
};

std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

Tensor random_tensor(Rng& rng, Shape4 s, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.uniform(-1.0, 1.0);
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

// ---------------------------------------------------------------- suites

void suite_global_deconv(Rng& rng, Recorder& rec, Activation act) {
  const std::size_t h = pick(rng, 2, 4), w = pick(rng, 2, 4);
  const std::size_t H = pick(rng, h, 7), W = pick(rng, w, 7);
  GlobalDeconv<double> gd(H, W, h, w, act);
  gd.init_glorot(rng);
  Tensor x = random_tensor(rng, {pick(rng, 1, 2), pick(rng, 1, 3), h, w});
  const Tensor r = random_tensor(rng, {x.n(), x.c(), H, W});
  const Fn f = [&] { return dot(gd.forward(x).values(), r.values()); };
  gd.zero_grad();
  const auto gx = gd.backward(x, r);
  rec.check("grad_x", x.values(), to_vec(gx.values()), f);
  rec.check("grad_kh", gd.kh_param.value.values(), to_vec(gd.kh_param.grad.values()), f);
  rec.check("grad_kw", gd.kw_param.value.values(), to_vec(gd.kw_param.grad.values()), f);
}

void suite_global_deconv_subset(Rng& rng, Recorder& rec) {
  const std::size_t h = pick(rng, 2, 4), w = pick(rng, 2, 4);
  const std::size_t H = pick(rng, h, 7), W = pick(rng, w, 7);
  GlobalDeconv<double> gd(H, W, h, w);
  gd.init_glorot(rng);
  const SubsetView view{pick(rng, 1, H), pick(rng, 1, W), pick(rng, 1, h), pick(rng, 1, w)};
  Tensor x = random_tensor(rng, {1, pick(rng, 1, 2), view.in_h, view.in_w});
  const Tensor r = random_tensor(rng, {x.n(), x.c(), view.out_h, view.out_w});
  const Fn f = [&] { return dot(gd.forward_subset(x, view).values(), r.values()); };
  gd.zero_grad();
  const auto gx = gd.backward_subset(x, r, view);
  rec.check("grad_x", x.values(), to_vec(gx.values()), f);
  rec.check("grad_kh", gd.kh_param.value.values(), to_vec(gd.kh_param.grad.values()), f);
  rec.check("grad_kw", gd.kw_param.value.values(), to_vec(gd.kw_param.grad.values()), f);
}

void suite_global_deconv_seg_loss(Rng& rng, Recorder& rec) {
  const std::size_t h = pick(rng, 2, 3), w = pick(rng, 2, 3);
  const std::size_t H = pick(rng, h, 5), W = pick(rng, w, 5);
  const std::size_t labels = pick(rng, 2, 4);
  GlobalDeconv<double> gd(H, W, h, w);
  gd.init_glorot(rng);
  Tensor x = random_tensor(rng, {1, labels, h, w}, -2.0, 2.0);
  std::vector<ClassMap> gt{ClassMap(H, W)};
  for (auto& v : gt[0].data) v = static_cast<std::uint8_t>(rng.below(labels));
  const Fn f = [&] { return seg_loss(softmax_pixelwise(gd.forward(x)), std::span<const ClassMap>(gt)); };
  gd.zero_grad();
  const auto g = seg_loss_backward(softmax_pixelwise(gd.forward(x)), std::span<const ClassMap>(gt));
  const auto gx = gd.backward(x, g);
  rec.check("grad_x", x.values(), to_vec(gx.values()), f);
  rec.check("grad_kh", gd.kh_param.value.values(), to_vec(gd.kh_param.grad.values()), f);
  rec.check("grad_kw", gd.kw_param.value.values(), to_vec(gd.kw_param.grad.values()), f);
}

void suite_conv(Rng& rng, Recorder& rec) {
  const std::size_t k = rng.below(2) ? 3 : 1;
  const std::size_t dilation = pick(rng, 1, 2);
  const std::size_t pad = pick(rng, 0, dilation);
  const std::size_t stride = pick(rng, 1, 2);
  Conv2d<double> conv(pick(rng, 1, 3), pick(rng, 1, 3), k, stride, pad, dilation);
  conv.init_he(rng);
  for (double& b : conv.bias.value.values()) b = rng.uniform(-0.5, 0.5);
  const std::size_t extent = (k - 1) * dilation + 1;
  const std::size_t lo = extent > 2 * pad ? extent - 2 * pad : 1;
  Tensor x = random_tensor(rng, {pick(rng, 1, 2), conv.in_channels(), pick(rng, std::max<std::size_t>(lo, 3), 6),
                                 pick(rng, std::max<std::size_t>(lo, 3), 6)});
  const auto y0 = conv.forward(x);
  const Tensor r = random_tensor(rng, y0.shape());
  const Fn f = [&] { return dot(conv.forward(x).values(), r.values()); };
  conv.zero_grad();
  const auto gx = conv.backward(x, r);
  rec.check("grad_x", x.values(), to_vec(gx.values()), f);
  rec.check("grad_w", conv.weight.value.values(), to_vec(conv.weight.grad.values()), f);
  rec.check("grad_b", conv.bias.value.values(), to_vec(conv.bias.grad.values()), f);
}

void suite_tconv(Rng& rng, Recorder& rec) {
  const std::size_t stride = pick(rng, 1, 3);
  const std::size_t k = pick(rng, stride, 4);
  TransposedConv2d<double> tc(pick(rng, 1, 2), pick(rng, 1, 2), k, stride);
  for (double& v : tc.weight.value.values()) v = rng.uniform(-1.0, 1.0);
  Tensor x = random_tensor(rng, {pick(rng, 1, 2), tc.weight.value.n(), pick(rng, 2, 4), pick(rng, 2, 4)});
  const auto g = tc.geometry(x.shape());
  const std::size_t th = pick(rng, 1, g.full_h()), tw = pick(rng, 1, g.full_w());
  const Tensor r = random_tensor(rng, {x.n(), tc.weight.value.c(), th, tw});
  const Fn f = [&] { return dot(tc.forward(x, th, tw).values(), r.values()); };
  tc.zero_grad();
  const auto gx = tc.backward(x, r);
  rec.check("grad_x", x.values(), to_vec(gx.values()), f);
  rec.check("grad_w", tc.weight.value.values(), to_vec(tc.weight.grad.values()), f);
}

void suite_fc(Rng& rng, Recorder& rec) {
  Linear<double> fc(pick(rng, 1, 5), pick(rng, 1, 4));
  fc.init_glorot(rng);
  for (double& b : fc.bias.value.values()) b = rng.uniform(-0.5, 0.5);
  Matrix x = random_matrix(rng, pick(rng, 1, 3), fc.in_dim());
  const Matrix r = random_matrix(rng, x.rows(), fc.out_dim());
  const Fn f = [&] { return dot(fc.forward(x).values(), r.values()); };
  fc.zero_grad();
  const auto gx = fc.backward(x, r);
  rec.check("grad_x", x.values(), to_vec(gx.values()), f);
  rec.check("grad_w", fc.weight.value.values(), to_vec(fc.weight.grad.values()), f);
  rec.check("grad_b", fc.bias.value.values(), to_vec(fc.bias.grad.values()), f);
}

void suite_maxpool(Rng& rng, Recorder& rec) {
  Tensor x = random_tensor(rng, {pick(rng, 1, 2), pick(rng, 1, 2), pick(rng, 2, 7), pick(rng, 2, 7)});
  const auto fwd = maxpool2_forward(x);
  const Tensor r = random_tensor(rng, fwd.y.shape());
  const Fn f = [&] { return dot(maxpool2_forward(x).y.values(), r.values()); };
  rec.check("grad_x", x.values(), to_vec(maxpool2_backward(fwd, r).values()), f);
}

void suite_relu(Rng& rng, Recorder& rec) {
  Tensor x = random_tensor(rng, {1, pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5)});
  const Tensor r = random_tensor(rng, x.shape());
  const Fn f = [&] { return dot(relu_forward(x).values(), r.values()); };
  rec.check("grad_x", x.values(), to_vec(relu_backward(x, r).values()), f);
}

void suite_seg_loss(Rng& rng, Recorder& rec) {
  const std::size_t labels = pick(rng, 2, 4);
  Tensor logits = random_tensor(rng, {pick(rng, 1, 2), labels, pick(rng, 1, 3), pick(rng, 1, 3)}, -3.0, 3.0);
  std::vector<ClassMap> gt(logits.n(), ClassMap(logits.h(), logits.w()));
  for (auto& g : gt)
    for (auto& v : g.data) v = rng.below(6) == 0 ? ClassMap::kIgnore : static_cast<std::uint8_t>(rng.below(labels));
  const Fn f = [&] { return seg_loss(softmax_pixelwise(logits), std::span<const ClassMap>(gt)); };
  const auto g = seg_loss_backward(softmax_pixelwise(logits), std::span<const ClassMap>(gt));
  rec.check("grad_logits", logits.values(), to_vec(g.values()), f);
}

void suite_label_loss(Rng& rng, Recorder& rec) {
  const std::size_t classes = pick(rng, 1, 6);
  Matrix scores = random_matrix(rng, pick(rng, 1, 3), classes);
  for (double& v : scores.values()) v *= 4.0;
  std::vector<std::vector<std::uint8_t>> presence(scores.rows(), std::vector<std::uint8_t>(classes));
  for (auto& p : presence)
    for (auto& v : p) v = static_cast<std::uint8_t>(rng.below(2));
  const Fn f = [&] { return label_loss_batch(scores, presence); };
  rec.check("grad_scores", scores.values(), to_vec(label_loss_batch_backward(scores, presence).values()), f);
}

void suite_spp(Rng& rng, Recorder& rec) {
  const std::vector<std::size_t> levels{1, 2, 3};
  Tensor x = random_tensor(rng, {pick(rng, 1, 2), pick(rng, 1, 2), pick(rng, 3, 7), pick(rng, 3, 7)});
  const auto fwd = spp_forward(x, levels);
  const Matrix r = random_matrix(rng, fwd.pooled.rows(), fwd.pooled.cols());
  const Fn f = [&] { return dot(spp_forward(x, levels).pooled.values(), r.values()); };
  rec.check("grad_x", x.values(), to_vec(spp_backward(fwd, r).values()), f);
}

void suite_bilinear(Rng& rng, Recorder& rec) {
  const std::size_t h = pick(rng, 1, 4), w = pick(rng, 1, 4);
  const std::size_t H = pick(rng, h, 8), W = pick(rng, w, 8);
  Tensor x = random_tensor(rng, {1, pick(rng, 1, 2), h, w});
  const Tensor r = random_tensor(rng, {1, x.c(), H, W});
  const Fn f = [&] { return dot(bilinear_fixed(x, H, W).values(), r.values()); };
  rec.check("grad_x", x.values(), to_vec(bilinear_fixed_backward(r, h, w).values()), f);
}

void suite_label_head(Rng& rng, Recorder& rec) {
  LabelHead<double> head(pick(rng, 1, 4), pick(rng, 2, 5), pick(rng, 1, 4));
  head.init(rng);
  Tensor x = random_tensor(rng, {pick(rng, 1, 2), head.fc1.in_dim(), pick(rng, 1, 3), pick(rng, 1, 3)});
  const auto t = head.forward(x);
  const Matrix r = random_matrix(rng, t.scores.rows(), t.scores.cols());
  const Fn f = [&] { return dot(head.forward(x).scores.values(), r.values()); };
  head.zero_grad();
  const auto gx = head.backward(t, r);
  rec.check("grad_x", x.values(), to_vec(gx.values()), f);
  rec.check("grad_fc1", head.fc1.weight.value.values(), to_vec(head.fc1.weight.grad.values()), f);
  rec.check("grad_fc3", head.fc3.weight.value.values(), to_vec(head.fc3.weight.grad.values()), f);
}

void suite_refine_head(Rng& rng, Recorder& rec, RefineKind kind) {
  const std::size_t coarse = pick(rng, 3, 4);
  RefineHead<double> head(kind, pick(rng, 1, 2), pick(rng, 1, 3), coarse, coarse, {1, 2, 3});
  head.init(rng);
  const std::size_t h = kind == RefineKind::kSpp ? pick(rng, 3, coarse) : pick(rng, 1, coarse);
  const std::size_t w = kind == RefineKind::kSpp ? pick(rng, 3, coarse) : pick(rng, 1, coarse);
  Tensor x = random_tensor(rng, {pick(rng, 1, 2), head.fc.in_dim() / (kind == RefineKind::kSpp ? 14 : coarse * coarse),
                                 h, w});
  const auto t = head.forward(x);
  const Tensor r = random_tensor(rng, {x.n(), head.fc.out_dim() / (coarse * coarse), h, w});
  const Fn f = [&] { return dot(head.output_map(head.forward(x), h, w).values(), r.values()); };
  head.zero_grad();
  const auto gx = head.backward(t, r);
  rec.check("grad_x", x.values(), to_vec(gx.values()), f);
  rec.check("grad_w", head.fc.weight.value.values(), to_vec(head.fc.weight.grad.values()), f);
}

using SuiteFn = std::function<void(Rng&, Recorder&)>;

const std::vector<std::pair<std::string, SuiteFn>>& suites() {
  static const std::vector<std::pair<std::string, SuiteFn>> kSuites{
      {"global_deconv", [](Rng& r, Recorder& c) { suite_global_deconv(r, c, Activation::kNone); }},
      {"global_deconv_relu", [](Rng& r, Recorder& c) { suite_global_deconv(r, c, Activation::kRelu); }},
      {"global_deconv_subset", suite_global_deconv_subset},
      {"global_deconv_seg_loss", suite_global_deconv_seg_loss},
      {"conv", suite_conv},
      {"tconv", suite_tconv},
      {"fc", suite_fc},
      {"maxpool", suite_maxpool},
      {"relu", suite_relu},
      {"softmax_seg_loss", suite_seg_loss},
      {"sigmoid_label_loss", suite_label_loss},
      {"spp", suite_spp},
      {"bilinear_fixed", suite_bilinear},
      {"label_head", suite_label_head},
      {"refine_head_spp", [](Rng& r, Recorder& c) { suite_refine_head(r, c, RefineKind::kSpp); }},
      {"refine_head_plain", [](Rng& r, Recorder& c) { suite_refine_head(r, c, RefineKind::kPlain); }},
  };
  return kSuites;
}

}  // namespace

std::vector<std::string> gradcheck_suite_names() {
  std::vector<std::string> names;
  for (const auto& [n, _] : suites()) names.push_back(n);
  return names;
}

std::vector<SuiteResult> run_gradcheck_suites(const GradcheckOptions& opt) {
  for (const auto& name : opt.only) {
    const auto& all = suites();
    if (std::none_of(all.begin(), all.end(), [&](const auto& s) { return s.first == name; })) {
      throw std::invalid_argument("unknown gradcheck suite '" + name + "'");
    }
  }
  std::vector<SuiteResult> out;
  std::uint64_t stream = 0;
  for (const auto& [name, fn] : suites()) {
    ++stream;
    if (!opt.only.empty() && std::find(opt.only.begin(), opt.only.end(), name) == opt.only.end()) continue;
    Recorder rec(name, opt);
    for (std::size_t i = 0; i < opt.instances; ++i) {
      Rng rng(derive_seed(opt.seed, stream, i));
      fn(rng, rec);
      rec.end_instance();
    }
    rec.flush(out);
  }
  return out;
}

}  // namespace gdn
