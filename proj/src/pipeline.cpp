// SPDX-License-Identifier: Apache-2.0
#include "gdn/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <variant>

#include "gdn/heads.hpp"
#include "gdn/kernels/parallel.hpp"
#include "gdn/model.hpp"
#include "gdn/optim.hpp"
#include "gdn/random.hpp"
#include "gdn/tensor_io.hpp"
#include "json.hpp"

#ifndef GDN_CODE_VERSION
#define GDN_CODE_VERSION "unknown"
#endif

namespace gdn {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string code_version() { return GDN_CODE_VERSION; }

namespace {

constexpr std::size_t kEvalBatch = 8;
constexpr std::uint64_t kShuffleStream = 0x5eed;
constexpr std::uint64_t kStage1Stream = 0x5eee;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

// Consecutive runs of up to kEvalBatch same-size samples.
std::vector<std::vector<std::size_t>> eval_batches(const Dataset& ds) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& img = ds.samples[i].image;
    if (out.empty() || out.back().size() == kEvalBatch || ds.samples[out.back().front()].image.h != img.h ||
        ds.samples[out.back().front()].image.w != img.w) {
      out.emplace_back();
    }
    out.back().push_back(i);
  }
  return out;
}

template <typename T>
BasicTensor<T> stack_images(const std::vector<const RgbImage*>& images, const ModelSpec& spec) {
  const auto& first = *images.front();
  BasicTensor<T> batch(Shape4{images.size(), 3, first.h, first.w});
  for (std::size_t b = 0; b < images.size(); ++b) {
    if (images[b]->h != first.h || images[b]->w != first.w) throw ShapeError("batch images differ in size");
    const auto t = image_to_tensor<T>(*images[b], spec.input_mean, spec.input_stddev);
    std::copy(t.values().begin(), t.values().end(), batch.item(b).begin());
  }
  return batch;
}

template <typename T>
BasicTensor<double> model_probabilities(const Segmenter<T>& model, const std::vector<const RgbImage*>& images,
                                        bool full_path) {
  const auto x = stack_images<T>(images, model.spec());
  const auto trace = model.forward(x, false, full_path);
  return tensor_cast<double>(softmax_pixelwise(trace.logits));
}

ClassMap argmax_map(const BasicTensor<double>& probs, std::size_t n) { return argmax_classes(probs, n); }

template <typename T>
ConfusionMatrix evaluate_model(const Segmenter<T>& model, const Dataset& ds) {
  ConfusionMatrix cm(model.spec().labels());
  for (const auto& batch : eval_batches(ds)) {
    std::vector<const RgbImage*> imgs;
    for (auto i : batch) imgs.push_back(&ds.samples[i].image);
    const auto probs = model_probabilities(model, imgs, false);
    for (std::size_t b = 0; b < batch.size(); ++b) cm.accumulate(argmax_map(probs, b), ds.samples[batch[b]].mask);
  }
  return cm;
}

// A checkpoint loaded in its stored precision.
class LoadedModel {
 public:
  explicit LoadedModel(const fs::path& dir) {
    const auto info = read_checkpoint_info(dir);
    spec_ = info.spec;
    if (info.config.precision == Precision::kF32) {
      model_ = std::make_unique<Segmenter<float>>(load_checkpoint<float>(dir));
    } else {
      model_ = std::make_unique<Segmenter<double>>(load_checkpoint<double>(dir));
    }
  }

  [[nodiscard]] const ModelSpec& spec() const { return spec_; }

  BasicTensor<double> probabilities(const std::vector<const RgbImage*>& images, bool full_path) const {
    return std::visit([&](const auto& m) { return model_probabilities(*m, images, full_path); }, model_);
  }

 private:
  ModelSpec spec_;
  std::variant<std::unique_ptr<Segmenter<float>>, std::unique_ptr<Segmenter<double>>> model_;
};

std::vector<LoadedModel> load_models(const std::vector<fs::path>& checkpoints) {
  if (checkpoints.empty()) throw std::invalid_argument("no checkpoint given");
  std::vector<LoadedModel> models;
  for (const auto& c : checkpoints) models.emplace_back(c);
  for (const auto& m : models) {
    if (m.spec().num_classes != models.front().spec().num_classes || m.spec().canvas != models.front().spec().canvas) {
      throw CheckpointError("ensemble members disagree on classes or canvas size");
    }
  }
  return models;
}

BasicTensor<double> ensemble_probabilities(const std::vector<LoadedModel>& models,
                                           const std::vector<const RgbImage*>& images, bool full_path) {
  auto sum = models.front().probabilities(images, full_path);
  for (std::size_t k = 1; k < models.size(); ++k) {
    const auto p = models[k].probabilities(images, full_path);
    for (std::size_t i = 0; i < sum.size(); ++i) sum.values()[i] += p.values()[i];
  }
  if (models.size() > 1) {
    const double inv = 1.0 / static_cast<double>(models.size());
    for (double& v : sum.values()) v *= inv;
  }
  return sum;
}

EvalReport make_report(std::vector<std::string> names, ConfusionMatrix cm) {
  EvalReport r;
  r.class_names = std::move(names);
  r.mean_iou = cm.mean_iou();
  r.pixel_accuracy = cm.total() == 0 ? 0.0 : cm.pixel_accuracy();
  r.confusion = std::move(cm);
  return r;
}

// ---------------------------------------------------------------- training

struct Loggers {
  std::ofstream train, groups, val;
};

template <typename T>
RunManifest train_impl(const RunConfig& cfg) {
  RunManifest man;
  man.config = cfg;
  man.code_version = code_version();
  man.started = utc_now();

  const fs::path out = cfg.out;
  fs::create_directories(out);
  kernels::set_num_threads(cfg.workers);

  const Dataset train = load_dataset(cfg.train_manifest, cfg.workers);
  const Dataset val = load_dataset(cfg.val_manifest, cfg.workers, train.mean, train.stddev);
  if (train.size() == 0 || val.size() == 0) throw std::runtime_error("empty training or validation split");
  if (train.manifest.classes != val.manifest.classes) {
    throw std::runtime_error("train and val manifests list different classes");
  }
  const std::size_t canvas = train.samples.front().image.h;
  for (const auto& s : train.samples) {
    if (s.image.h != canvas || s.image.w != canvas) throw ShapeError("training images must share one square size");
  }

  ModelSpec spec = ModelSpec::from_config(cfg, train.num_classes(), canvas);
  spec.input_mean = train.mean;
  spec.input_stddev = train.stddev;
  Segmenter<T> model(spec);
  model.init(cfg.seed);
  auto params = model.params();

  Sgd<T> opt(SgdConfig{cfg.lr, cfg.momentum, cfg.weight_decay});
  PlateauSchedule schedule(cfg.plateau_patience, cfg.plateau_factor, cfg.plateau_threshold);
  const bool label_loss_on = uses_label_loss(cfg.variant);
  const double lambda = label_loss_on ? cfg.lambda_label : 0.0;

  Loggers log;
  log.train.open(out / "train_log.csv");
  log.groups.open(out / "groups.csv");
  log.val.open(out / "val.csv");
  if (!log.train || !log.groups || !log.val) throw std::runtime_error("cannot write logs under " + out.string());
  log.train << "iter,seg_loss,label_loss,combined,lr\n";
  log.groups << "stage,first_iter,group,lr,trained\n";
  log.val << "epoch,iter,val_miou,lr\n";

  std::size_t iter = 0;
  auto cap_reached = [&] { return cfg.max_iters > 0 && iter >= cfg.max_iters; };

  auto log_plan = [&](int stage, const GroupPlan& plan) {
    for (const auto& g : model.groups()) {
      const bool on = plan.trains(g);
      log.groups << stage << ',' << iter + 1 << ',' << g << ',' << fmt(on ? opt.lr() * plan.lr_multiplier.at(g) : 0.0)
                 << ',' << (on ? 1 : 0) << '\n';
    }
    log.groups.flush();
  };

  auto step = [&](const std::vector<std::size_t>& idx, const GroupPlan& plan, bool through_encoder) {
    ++iter;
    const auto x = make_batch<T>(train, idx);
    std::vector<ClassMap> gt;
    std::vector<std::vector<std::uint8_t>> presence;
    for (auto i : idx) {
      gt.push_back(train.samples[i].mask);
      presence.push_back(train.samples[i].presence);
    }
    const auto trace = model.forward(x, label_loss_on);
    const auto probs = softmax_pixelwise(trace.logits);
    const double seg = seg_loss(probs, std::span<const ClassMap>(gt));
    const double lab = label_loss_on ? label_loss_batch(trace.label->scores, presence) : 0.0;
    const LossReport rep = combined_loss(seg, lab, lambda);
    if (!std::isfinite(rep.combined)) {
      throw NumericError("non-finite loss at iteration " + std::to_string(iter) + " (seg_loss=" + fmt(seg) +
                         ", label_loss=" + fmt(lab) + ", lr=" + fmt(opt.lr()) + ")");
    }
    model.zero_grad();
    const auto g_logits = seg_loss_backward(probs, std::span<const ClassMap>(gt));
    BasicMatrix<T> g_label;
    if (label_loss_on) {
      g_label = label_loss_batch_backward(trace.label->scores, presence);
      for (T& v : g_label.values()) v *= static_cast<T>(lambda);
    }
    model.backward(trace, g_logits, label_loss_on ? &g_label : nullptr, through_encoder);
    opt.step(params, plan);

    if (iter == 1) man.initial_loss = rep.combined;
    man.final_loss = rep.combined;
    log.train << iter << ',' << fmt(rep.seg_loss) << ',' << fmt(rep.label_loss) << ',' << fmt(rep.combined) << ','
              << fmt(opt.lr()) << '\n';
    if (cfg.checkpoint_every > 0 && iter % cfg.checkpoint_every == 0) {
      save_checkpoint(out / "checkpoints" / ("iter" + std::to_string(iter)), model, cfg);
    }
  };

  auto run_batches = [&](const std::vector<std::size_t>& order, std::size_t limit, const GroupPlan& plan,
                         bool through_encoder) {
    for (std::size_t start = 0; start < limit && !cap_reached(); start += cfg.batch) {
      const std::size_t end = std::min(limit, start + cfg.batch);
      std::vector<std::size_t> idx;
      for (std::size_t k = start; k < end; ++k) idx.push_back(order[k % order.size()]);
      step(idx, plan, through_encoder);
    }
  };

  // Stage 1: new blocks only, encoder and score layer frozen.
  GroupPlan stage1;
  for (const auto& g : model.groups())
    if (g != "encoder" && g != "score") stage1.lr_multiplier[g] = cfg.stage1_lr_mult;
  if (!stage1.lr_multiplier.empty() && cfg.stage1_iters > 0) {
    log_plan(1, stage1);
    const auto order = shuffled(train.size(), derive_seed(cfg.seed, kStage1Stream));
    run_batches(order, cfg.stage1_iters * cfg.batch, stage1, false);
  }

  // Stage 2: everything.
  const GroupPlan stage2 = GroupPlan::all(model.groups());
  log_plan(2, stage2);
  const fs::path best_dir = out / "checkpoints" / "best";
  bool have_best = false;
  bool evaluated_last = false;
  for (std::size_t epoch = 1; epoch <= cfg.epochs && !cap_reached(); ++epoch) {
    const auto order = shuffled(train.size(), derive_seed(cfg.seed, kShuffleStream, epoch));
    run_batches(order, order.size(), stage2, true);
    const double miou = evaluate_model(model, val).mean_iou();
    log.val << epoch << ',' << iter << ',' << fmt(miou) << ',' << fmt(opt.lr()) << '\n';
    log.val.flush();
    log.train.flush();
    man.final_val_miou = miou;
    evaluated_last = true;
    if (!have_best || miou > man.best_val_miou) {
      have_best = true;
      man.best_val_miou = miou;
      man.best_epoch = epoch;
      save_checkpoint(best_dir, model, cfg);
    }
    double lr = opt.lr();
    if (schedule.update(miou, lr)) opt.set_lr(lr);
    if (cap_reached()) evaluated_last = true;
  }
  if (!evaluated_last) {
    man.final_val_miou = evaluate_model(model, val).mean_iou();
    log.val << 0 << ',' << iter << ',' << fmt(man.final_val_miou) << ',' << fmt(opt.lr()) << '\n';
  }
  const fs::path final_dir = out / "checkpoints" / "final";
  save_checkpoint(final_dir, model, cfg);
  if (!have_best) {
    man.best_val_miou = man.final_val_miou;
    save_checkpoint(best_dir, model, cfg);
  }

  man.iterations = iter;
  man.best_checkpoint = best_dir.string();
  man.final_checkpoint = final_dir.string();
  man.log_csv = (out / "train_log.csv").string();
  man.finished = utc_now();
  write_run_manifest(out / "manifest.json", man);
  return man;
}

}  // namespace

// ---------------------------------------------------------------- manifests

std::string manifest_json(const RunManifest& m) {
  json j;
  json cfg = json::object();
  std::istringstream ss(serialize_config(m.config));
  std::string line;
  while (std::getline(ss, line)) {
    const auto eq = line.find(" = ");
    cfg[line.substr(0, eq)] = line.substr(eq + 3);
  }
  j["config"] = cfg;
  j["code_version"] = m.code_version;
  j["started"] = m.started;
  j["finished"] = m.finished;
  j["iterations"] = m.iterations;
  j["initial_loss"] = m.initial_loss;
  j["final_loss"] = m.final_loss;
  j["best_val_miou"] = m.best_val_miou;
  j["final_val_miou"] = m.final_val_miou;
  j["best_epoch"] = m.best_epoch;
  j["best_checkpoint"] = m.best_checkpoint;
  j["final_checkpoint"] = m.final_checkpoint;
  j["log_csv"] = m.log_csv;
  return j.dump(2);
}

void write_run_manifest(const fs::path& path, const RunManifest& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << manifest_json(m) << '\n';
}

RunManifest read_run_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const json j = json::parse(in);
  RunManifest m;
  std::string text;
  for (const auto& [k, v] : j.at("config").items()) text += k + " = " + v.get<std::string>() + "\n";
  m.config = parse_config(text);
  m.code_version = j.at("code_version").get<std::string>();
  m.started = j.at("started").get<std::string>();
  m.finished = j.at("finished").get<std::string>();
  m.iterations = j.at("iterations").get<std::size_t>();
  m.initial_loss = j.at("initial_loss").get<double>();
  m.final_loss = j.at("final_loss").get<double>();
  m.best_val_miou = j.at("best_val_miou").get<double>();
  m.final_val_miou = j.at("final_val_miou").get<double>();
  m.best_epoch = j.at("best_epoch").get<std::size_t>();
  m.best_checkpoint = j.at("best_checkpoint").get<std::string>();
  m.final_checkpoint = j.at("final_checkpoint").get<std::string>();
  m.log_csv = j.at("log_csv").get<std::string>();
  return m;
}

RunManifest train_model(const RunConfig& cfg) {
  cfg.validate();
  return cfg.precision == Precision::kF32 ? train_impl<float>(cfg) : train_impl<double>(cfg);
}

// ---------------------------------------------------------------- evaluation

EvalReport evaluate_checkpoints(const std::vector<fs::path>& checkpoints, const fs::path& manifest, int workers,
                                const std::optional<fs::path>& dump_dir) {
  kernels::set_num_threads(workers);
  const auto models = load_models(checkpoints);
  const Dataset ds = load_dataset(manifest, workers);
  if (ds.num_classes() != models.front().spec().num_classes) {
    throw CheckpointError("checkpoint/config mismatch: checkpoint has " +
                          std::to_string(models.front().spec().num_classes) + " classes, manifest " +
                          std::to_string(ds.num_classes()));
  }
  if (dump_dir) fs::create_directories(*dump_dir);
  ConfusionMatrix cm(ds.num_classes() + 1);
  for (const auto& batch : eval_batches(ds)) {
    std::vector<const RgbImage*> imgs;
    for (auto i : batch) imgs.push_back(&ds.samples[i].image);
    const auto probs = ensemble_probabilities(models, imgs, false);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto pred = argmax_map(probs, b);
      cm.accumulate(pred, ds.samples[batch[b]].mask);
      if (dump_dir) {
        char name[32];
        std::snprintf(name, sizeof name, "pred_%05zu.pgm", batch[b]);
        write_pgm(*dump_dir / name, pred);
      }
    }
  }
  return make_report(ds.manifest.classes, std::move(cm));
}

EvalReport evaluate_oracle(const fs::path& manifest) {
  const Dataset ds = load_dataset(manifest);
  ConfusionMatrix cm(ds.num_classes() + 1);
  for (const auto& s : ds.samples) cm.accumulate(s.mask, s.mask);
  return make_report(ds.manifest.classes, std::move(cm));
}

EvalReport evaluate_dumped_masks(const fs::path& manifest, const fs::path& dump_dir) {
  const Dataset ds = load_dataset(manifest);
  ConfusionMatrix cm(ds.num_classes() + 1);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "pred_%05zu.pgm", i);
    cm.accumulate(read_pgm(dump_dir / name), ds.samples[i].mask);
  }
  return make_report(ds.manifest.classes, std::move(cm));
}

void write_iou_csv(const fs::path& path, const EvalReport& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "class,iou\n";
  const auto iou = r.confusion.per_class_iou();
  for (std::size_t c = 0; c < iou.size(); ++c) {
    out << (c < r.class_names.size() ? r.class_names[c] : std::to_string(c)) << ',' << (iou[c] ? fmt(*iou[c]) : "nan")
        << '\n';
  }
  out << "mIoU," << fmt(r.mean_iou) << '\n';
}

// ---------------------------------------------------------------- inference

BasicTensor<double> predict_probabilities(const std::vector<fs::path>& checkpoints, const RgbImage& image,
                                          bool force_full_path) {
  const auto models = load_models(checkpoints);
  return ensemble_probabilities(models, {&image}, force_full_path);
}

InferResult infer_image(const InferOptions& opt, const fs::path& image, const fs::path& out_dir) {
  const RgbImage img = read_ppm(image);
  const auto probs = predict_probabilities(opt.checkpoints, img, opt.force_full_path);
  fs::create_directories(out_dir);
  InferResult r;
  r.mask = argmax_map(probs, 0);
  r.mask_path = out_dir / (image.stem().string() + ".pgm");
  write_pgm(r.mask_path, r.mask);
  if (opt.dump_probabilities) {
    r.probabilities_path = out_dir / (image.stem().string() + ".probs.gdt");
    save_gdt1(*r.probabilities_path, probs);
  }
  return r;
}

RgbImage colorize(const ClassMap& mask) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 10> kColors{{
      {0, 0, 0},
      {220, 60, 50},
      {50, 160, 60},
      {60, 80, 210},
      {220, 180, 40},
      {170, 60, 190},
      {40, 190, 190},
      {240, 130, 40},
      {120, 200, 100},
      {230, 110, 170},
  }};
  RgbImage img(mask.h, mask.w);
  for (std::size_t i = 0; i < mask.data.size(); ++i) {
    const std::uint8_t v = mask.data[i];
    const auto c = v == ClassMap::kIgnore ? std::array<std::uint8_t, 3>{255, 255, 255} : kColors[v % kColors.size()];
    std::copy(c.begin(), c.end(), img.data.begin() + static_cast<std::ptrdiff_t>(i * 3));
  }
  return img;
}

RgbImage contact_sheet(const std::vector<RgbImage>& images, const std::vector<ClassMap>& truth,
                       const std::vector<ClassMap>& baseline, const std::vector<ClassMap>& ours) {
  const std::size_t rows = images.size();
  if (rows == 0 || truth.size() != rows || baseline.size() != rows || ours.size() != rows) {
    throw std::invalid_argument("contact sheet needs the same non-zero number of images and masks per column");
  }
  constexpr std::size_t kGap = 2;
  std::size_t tile_h = 0, tile_w = 0;
  for (const auto& im : images) {
    tile_h = std::max(tile_h, im.h);
    tile_w = std::max(tile_w, im.w);
  }
  RgbImage sheet(rows * tile_h + (rows + 1) * kGap, 4 * tile_w + 5 * kGap);
  std::fill(sheet.data.begin(), sheet.data.end(), std::uint8_t{255});
  auto blit = [&](const RgbImage& tile, std::size_t row, std::size_t col) {
    const std::size_t y0 = kGap + row * (tile_h + kGap), x0 = kGap + col * (tile_w + kGap);
    for (std::size_t i = 0; i < tile.h; ++i)
      for (std::size_t j = 0; j < tile.w; ++j) std::copy_n(tile.px(i, j), 3, sheet.px(y0 + i, x0 + j));
  };
  for (std::size_t r = 0; r < rows; ++r) {
    blit(images[r], r, 0);
    blit(colorize(truth[r]), r, 1);
    blit(colorize(baseline[r]), r, 2);
    blit(colorize(ours[r]), r, 3);
  }
  return sheet;
}

// ---------------------------------------------------------------- ablation

namespace {

RunManifest train_or_reuse(const RunConfig& cfg) {
  const fs::path manifest = fs::path(cfg.out) / "manifest.json";
  if (fs::exists(manifest)) {
    try {
      auto m = read_run_manifest(manifest);
      if (m.config == cfg && m.code_version == code_version() && fs::exists(m.best_checkpoint)) return m;
    } catch (const std::exception&) {
    }
  }
  return train_model(cfg);
}

}  // namespace

std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<Variant>& variants,
                                      const std::vector<std::uint64_t>& seeds, const fs::path& out) {
  if (variants.empty() || seeds.empty()) throw std::invalid_argument("ablation needs at least one variant and seed");
  std::vector<Variant> order;
  for (Variant v : all_variants())
    if (std::find(variants.begin(), variants.end(), v) != variants.end()) order.push_back(v);

  auto run_cfg = [&](Variant v, std::uint64_t seed) {
    RunConfig c = base;
    c.variant = v;
    c.seed = seed;
    c.out = (out / to_string(v) / ("seed" + std::to_string(seed))).string();
    return c;
  };

  std::vector<AblationRow> rows;
  for (Variant v : order) {
    AblationRow row{v, {}, {}};
    for (std::uint64_t seed : seeds) {
      const auto m = train_or_reuse(run_cfg(v, seed));
      double miou = m.best_val_miou;
      if (v == Variant::kGlobalDeconvLabelSpp) {
        const auto partner = train_or_reuse(run_cfg(Variant::kGlobalDeconvLabel, seed));
        miou = evaluate_checkpoints({m.best_checkpoint, partner.best_checkpoint}, base.val_manifest, base.workers)
                   .mean_iou;
      }
      row.seeds.push_back(seed);
      row.miou.push_back(miou);
    }
    const double n = static_cast<double>(row.miou.size());
    row.mean = std::accumulate(row.miou.begin(), row.miou.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : row.miou) ss += (x - row.mean) * (x - row.mean);
    row.spread = row.miou.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    row.min = *std::min_element(row.miou.begin(), row.miou.end());
    row.max = *std::max_element(row.miou.begin(), row.miou.end());
    rows.push_back(std::move(row));
  }
  fs::create_directories(out);
  write_ablation_csv(out / "summary.csv", rows);
  return rows;
}

void write_ablation_csv(const fs::path& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "variant,seeds,mean_miou,spread,min_miou,max_miou,per_seed\n";
  for (const auto& r : rows) {
    out << to_string(r.variant) << ',' << r.seeds.size() << ',' << fmt(r.mean) << ',' << fmt(r.spread) << ','
        << fmt(r.min) << ',' << fmt(r.max) << ',';
    for (std::size_t i = 0; i < r.miou.size(); ++i) out << (i ? ";" : "") << fmt(r.miou[i]);
    out << '\n';
  }
}

}  // namespace gdn
