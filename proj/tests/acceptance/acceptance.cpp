// SPDX-License-Identifier: Apache-2.0
//
// Acceptance runner: one PASS/FAIL line per criterion, exit code 3 when any
// requested criterion fails.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gdn/cli.hpp"
#include "gdn/config.hpp"
#include "gdn/data.hpp"
#include "gdn/gradcheck_suites.hpp"
#include "gdn/heads.hpp"
#include "gdn/metrics.hpp"
#include "gdn/pipeline.hpp"
#include "gdn/upsample.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace gdn;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail.clear();
    pass = false;
    detail += (detail.empty() ? "" : "; ") + why;
  }
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- 1

Outcome gradient_correctness() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = run_gradcheck_suites(GradcheckOptions{});
  const double secs = seconds_since(t0);
  const std::vector<std::string> required{
      "global_deconv.grad_x", "global_deconv.grad_kh", "global_deconv.grad_kw", "conv.", "tconv.", "fc.",
      "maxpool.", "softmax_seg_loss.", "sigmoid_label_loss.", "spp."};
  double worst = 0.0;
  std::size_t min_instances = SIZE_MAX;
  for (const auto& prefix : required) {
    bool seen = false;
    for (const auto& r : results) {
      if (r.name.rfind(prefix, 0) != 0) continue;
      seen = true;
      min_instances = std::min(min_instances, r.instances);
    }
    if (!seen) o.fail("no suite named " + prefix + "*");
  }
  for (const auto& r : results) {
    worst = std::max(worst, r.max_rel_error);
    if (!r.passed) o.fail(r.name + " error " + num(r.max_rel_error));
  }
  if (min_instances < 20) o.fail("only " + std::to_string(min_instances) + " instances");
  if (secs >= 120.0) o.fail("took " + num(secs) + " s");
  if (o.pass) {
    o.detail = std::to_string(results.size()) + " checks, worst relative error " + num(worst) + ", " +
               num(secs) + " s";
  }
  return o;
}

// ---------------------------------------------------------------- 2

Outcome bilinear_equivalence(Rng& rng) {
  Outcome o;
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    const std::size_t h = 2 + rng.below(15), w = 2 + rng.below(15);
    const std::size_t oh = h + rng.below(65 - h), ow = w + rng.below(65 - w);
    GlobalDeconv<double> gd(oh, ow, h, w);
    gd.init_bilinear();
    const auto x = oracle::random_tensor({2, 3, h, w}, rng);
    const double d = oracle::max_abs_diff(gd.forward(x).values(), oracle::bilinear_resample(x, oh, ow).values());
    worst = std::max(worst, d);
    if (d > 1e-12) o.fail(std::to_string(h) + "x" + std::to_string(w) + "->" + std::to_string(oh) + "x" +
                          std::to_string(ow) + " differs by " + num(d));
  }
  if (o.pass) o.detail = "10 shapes, max abs difference " + num(worst);
  return o;
}

// ---------------------------------------------------------------- 3

Outcome naive_oracle(Rng& rng) {
  Outcome o;
  double worst = 0.0;
  std::size_t views = 0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t h = 1 + rng.below(8), w = 1 + rng.below(8);
    const std::size_t oh = h + rng.below(24), ow = w + rng.below(24);
    GlobalDeconv<double> gd(oh, ow, h, w);
    gd.init_glorot(rng);
    const auto x = oracle::random_tensor({1 + rng.below(2), 1 + rng.below(3), h, w}, rng);
    const double d = oracle::max_abs_diff(gd.forward(x).values(), oracle::global_deconv(x, gd.kh(), gd.kw()).values());
    worst = std::max(worst, d);
    if (d > 1e-12) o.fail("four-loop oracle differs by " + num(d));

    for (int v = 0; v < 5; ++v, ++views) {
      SubsetView view;
      view.in_h = 1 + rng.below(h);
      view.in_w = 1 + rng.below(w);
      view.out_h = view.in_h + rng.below(oh - view.in_h + 1);
      view.out_w = view.in_w + rng.below(ow - view.in_w + 1);
      GlobalDeconv<double> sliced(view.out_h, view.out_w, view.in_h, view.in_w);
      Matrix kh(view.out_h, view.in_h), kw(view.out_w, view.in_w);
      const auto full_kh = gd.kh(), full_kw = gd.kw();
      for (std::size_t i = 0; i < view.out_h; ++i)
        for (std::size_t j = 0; j < view.in_h; ++j) kh(i, j) = full_kh(i, j);
      for (std::size_t i = 0; i < view.out_w; ++i)
        for (std::size_t j = 0; j < view.in_w; ++j) kw(i, j) = full_kw(i, j);
      sliced.set_kh(kh);
      sliced.set_kw(kw);
      const auto xs = oracle::random_tensor({1, 2, view.in_h, view.in_w}, rng);
      if (gd.forward_subset(xs, view) != sliced.forward(xs)) o.fail("subset view not bit-exact");
    }
  }
  if (o.pass) {
    o.detail = "20 instances, max abs difference " + num(worst) + "; " + std::to_string(views) +
               " subset views bit-exact";
  }
  return o;
}

// ---------------------------------------------------------------- 4

Outcome miou_oracle(Rng& rng) {
  Outcome o;
  for (int t = 0; t < 100; ++t) {
    const auto p = oracle::random_map(8, 8, 4, rng), g = oracle::random_map(8, 8, 4, rng);
    ConfusionMatrix cm(4);
    cm.accumulate(p, g);
    const double got = cm.mean_iou(), want = oracle::mean_iou({p}, {g}, 4);
    if (got != want) o.fail("pair " + std::to_string(t) + ": " + num(got) + " vs " + num(want));
  }
  ConfusionMatrix hand(2);
  hand.at(0, 0) = 3;
  hand.at(0, 1) = 1;
  hand.at(1, 0) = 1;
  hand.at(1, 1) = 3;
  if (std::abs(hand.mean_iou() - 0.6) > 1e-15) o.fail("hand case gives " + num(hand.mean_iou()));
  if (o.pass) o.detail = "100 random pairs exact; [[3,1],[1,3]] -> " + num(hand.mean_iou());
  return o;
}

// ---------------------------------------------------------------- 5

std::time_t parse_utc(const std::string& s) {
  std::tm tm{};
  std::istringstream in(s);
  in >> std::get_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return timegm(&tm);
}

Outcome directional_ablation(const fs::path& root, const fs::path& config_path) {
  Outcome o;
  fs::create_directories(root);
  const auto config_abs = fs::absolute(config_path);
  fs::current_path(root);
  RunConfig base = load_config(config_abs);
  if (!fs::exists(base.train_manifest) || !fs::exists(base.val_manifest)) {
    std::cerr << "generating the default synthetic benchmark under " << fs::absolute("data") << "\n";
    generate_dataset(SceneSpec{}, 800, 200, 200, "data", base.workers);
  }
  const auto train = read_manifest(base.train_manifest);
  const auto val = read_manifest(base.val_manifest);
  const auto first = read_ppm(train.dir / train.entries.front().image);
  if (train.entries.size() != 800 || val.entries.size() != 200 || train.num_classes() != 6 || first.h != 128 ||
      first.w != 128) {
    o.fail("benchmark is not 128px / 6 classes / 800 train / 200 val");
  }

  const std::vector<Variant> variants{Variant::kBilinearFixed, Variant::kGlobalDeconv, Variant::kGlobalDeconvLabel};
  const auto rows = run_ablation(base, variants, {0, 1, 2}, "ablation");
  std::map<Variant, double> mean;
  for (const auto& r : rows) mean[r.variant] = r.mean;

  for (Variant v : variants) {
    double secs = 0.0;
    for (int seed = 0; seed < 3; ++seed) {
      const auto m = read_run_manifest(fs::path("ablation") / to_string(v) / ("seed" + std::to_string(seed)) /
                                       "manifest.json");
      secs += static_cast<double>(parse_utc(m.finished) - parse_utc(m.started));
    }
    if (secs >= 30 * 60) o.fail(to_string(v) + " took " + num(secs / 60) + " min");
  }
  const double bl = mean[Variant::kBilinearFixed], gd = mean[Variant::kGlobalDeconv],
               gdl = mean[Variant::kGlobalDeconvLabel];
  if (!(gd >= bl)) o.fail("global-deconv " + num(gd) + " < bilinear-fixed " + num(bl));
  if (!(gdl >= gd - 0.005)) o.fail("global-deconv+label-loss " + num(gdl) + " < global-deconv - 0.005");
  if (o.pass) {
    o.detail = "mean val mIoU bilinear-fixed " + num(bl) + ", global-deconv " + num(gd) +
               ", global-deconv+label-loss " + num(gdl);
  }
  return o;
}

// ---------------------------------------------------------------- 6, 8 fixtures

struct SmallRun {
  GeneratedDataset data;
  RunConfig config;
};

SmallRun small_run(const fs::path& work) {
  SceneSpec spec;
  spec.canvas = 48;
  spec.num_classes = 3;
  SmallRun s;
  s.data = generate_dataset(spec, 24, 8, 8, work / "data");
  s.config.variant = Variant::kGlobalDeconvLabel;
  s.config.train_manifest = s.data.train.string();
  s.config.val_manifest = s.data.val.string();
  s.config.batch = 4;
  s.config.stage1_iters = 3;
  s.config.epochs = 2;
  s.config.label_hidden = 16;
  s.config.precision = Precision::kF64;
  s.config.workers = 1;
  return s;
}

RgbImage crop(const RgbImage& img, std::size_t h, std::size_t w) {
  RgbImage out(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.data[(y * w + x) * 3 + c] = img.data[(y * img.w + x) * 3 + c];
  return out;
}

// ---------------------------------------------------------------- 6

Outcome variable_size_inference(const SmallRun& run, const fs::path& work) {
  Outcome o;
  RunConfig cfg = run.config;
  cfg.out = (work / "infer_model").string();
  const auto man = train_model(cfg);
  const auto test = read_manifest(run.data.test);
  const auto full = read_ppm(test.dir / test.entries.front().image);

  const std::vector<std::pair<std::size_t, std::size_t>> sizes{{48, 48}, {36, 44}, {17, 48}, {48, 5}, {1, 1}, {33, 29}};
  for (const auto& [h, w] : sizes) {
    const auto path = work / ("crop_" + std::to_string(h) + "x" + std::to_string(w) + ".ppm");
    write_ppm(path, crop(full, h, w));
    std::ostringstream out, err;
    const int code = run_cli({"infer", "--checkpoint", man.best_checkpoint, "--image", path.string(), "--out",
                              (work / "masks").string()},
                             out, err);
    if (code != 0) {
      o.fail("infer exit " + std::to_string(code) + ": " + err.str());
      continue;
    }
    const auto mask = read_pgm(work / "masks" / (path.stem().string() + ".pgm"));
    if (mask.h != h || mask.w != w) {
      o.fail("mask " + std::to_string(mask.h) + "x" + std::to_string(mask.w) + " for " + std::to_string(h) + "x" +
             std::to_string(w));
    }
  }
  const auto subset = predict_probabilities({man.best_checkpoint}, full, false);
  const auto stored = predict_probabilities({man.best_checkpoint}, full, true);
  if (subset != stored) o.fail("subset and full paths differ at the trained size");
  if (o.pass) o.detail = std::to_string(sizes.size()) + " sizes up to 48x48; full-size paths bit-identical";
  return o;
}

// ---------------------------------------------------------------- 7

Outcome loss_spot_checks() {
  Outcome o;
  const std::vector<double> scores{std::log(0.8 / 0.2), std::log(0.3 / 0.7)};
  const std::vector<std::uint8_t> present{1, 0};
  const double label = label_loss(scores, present);
  if (std::abs(label - 0.28990) > 1e-4) o.fail("label loss " + num(label));

  Tensor logits({1, 3, 1, 2});
  const double p0[3] = {0.5, 0.3, 0.2}, p1[3] = {0.5, 0.25, 0.25};  // true-class 0.5 and 0.25
  for (std::size_t c = 0; c < 3; ++c) {
    logits(0, c, 0, 0) = std::log(p0[c]);
    logits(0, c, 0, 1) = std::log(p1[c]);
  }
  ClassMap gt(1, 2);
  gt.data = {0, 1};
  const std::vector<ClassMap> gts{gt};
  const double seg = seg_loss(softmax_pixelwise(logits), std::span<const ClassMap>(gts));
  if (std::abs(seg - 1.0397) > 1e-4) o.fail("seg loss " + num(seg));

  Tensor sure({1, 3, 1, 2});
  sure(0, 0, 0, 0) = 800.0;
  sure(0, 1, 0, 1) = 800.0;
  const double seg_perfect = seg_loss(softmax_pixelwise(sure), std::span<const ClassMap>(gts));
  const double label_perfect = label_loss(std::vector<double>{800.0, -800.0}, present);
  if (seg_perfect != 0.0) o.fail("perfect seg loss " + num(seg_perfect));
  if (label_perfect != 0.0) o.fail("perfect label loss " + num(label_perfect));
  if (o.pass) o.detail = "label " + num(label) + ", seg " + num(seg) + ", perfect predictions 0 and 0";
  return o;
}

// ---------------------------------------------------------------- 8

Outcome determinism(const SmallRun& run, const fs::path& work) {
  Outcome o;
  double loss[2], miou[2];
  for (int k = 0; k < 2; ++k) {
    RunConfig cfg = run.config;
    cfg.out = (work / ("repeat" + std::to_string(k))).string();
    const auto m = train_model(cfg);
    loss[k] = m.final_loss;
    miou[k] = evaluate_checkpoints({m.final_checkpoint}, run.data.val, 1).mean_iou;
  }
  if (std::abs(loss[0] - loss[1]) > 1e-12) o.fail("final loss " + num(loss[0]) + " vs " + num(loss[1]));
  if (std::abs(miou[0] - miou[1]) > 1e-12) o.fail("eval mIoU " + num(miou[0]) + " vs " + num(miou[1]));
  if (o.pass) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "final loss %.17g and eval mIoU %.17g in both runs", loss[0], miou[0]);
    o.detail = buf;
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks for the global deconvolution library"};
  std::string only = "1,2,3,4,5,6,7,8";
  fs::path work = fs::temp_directory_path() / "gdn_acceptance";
  fs::path ablation_root;
  fs::path ablation_config = "configs/ablation.cfg";
  std::uint64_t seed = 2024;
  app.add_option("--only", only, "comma-separated criteria to run");
  app.add_option("--work", work, "scratch directory for the small training runs");
  app.add_option("--ablation-root", ablation_root,
                 "directory holding data/ and ablation/ for criterion 5 (missing runs are trained)");
  app.add_option("--ablation-config", ablation_config, "ablation config, paths relative to the root");
  app.add_option("--seed", seed, "seed for the random oracle instances");
  CLI11_PARSE(app, argc, argv);

  std::set<int> wanted;
  std::istringstream list(only);
  for (std::string tok; std::getline(list, tok, ',');) {
    const int c = std::atoi(tok.c_str());
    if (c < 1 || c > 8) {
      std::cerr << "unknown criterion '" << tok << "'\n";
      return kExitUsage;
    }
    wanted.insert(c);
  }
  if (wanted.contains(5) && ablation_root.empty()) ablation_root = work / "ablation_root";

  work = fs::absolute(work);
  fs::remove_all(work / "small");
  fs::create_directories(work / "small");
  const bool need_small = wanted.contains(6) || wanted.contains(8);
  std::optional<SmallRun> small;

  const std::map<int, std::string> titles{
      {1, "gradient correctness"}, {2, "bilinear-equivalence oracle"},  {3, "naive-oracle equivalence"},
      {4, "mIoU oracle equivalence"}, {5, "directional ablation"},      {6, "variable-size inference"},
      {7, "loss-value spot checks"},  {8, "determinism"}};

  bool all_pass = true;
  Rng rng(seed);
  for (int c : wanted) {
    Outcome o;
    try {
      if (need_small && !small && (c == 6 || c == 8)) small = small_run(work / "small");
      switch (c) {
        case 1: o = gradient_correctness(); break;
        case 2: o = bilinear_equivalence(rng); break;
        case 3: o = naive_oracle(rng); break;
        case 4: o = miou_oracle(rng); break;
        case 5: o = directional_ablation(fs::absolute(ablation_root), ablation_config); break;
        case 6: o = variable_size_inference(*small, work / "small"); break;
        case 7: o = loss_spot_checks(); break;
        case 8: o = determinism(*small, work / "small"); break;
      }
    } catch (const std::exception& e) {
      o.fail(std::string("error: ") + e.what());
    }
    all_pass = all_pass && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c << " (" << titles.at(c) << "): " << o.detail
              << std::endl;
  }
  return all_pass ? kExitOk : kExitVerification;
}
