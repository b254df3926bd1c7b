// SPDX-License-Identifier: Apache-2.0
#include "gdn/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "gdn/config.hpp"
#include "gdn/data.hpp"
#include "gdn/gradcheck_suites.hpp"
#include "gdn/kernels/parallel.hpp"
#include "gdn/model.hpp"
#include "gdn/pipeline.hpp"

namespace gdn {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> workers;
  std::string precision;
  std::vector<std::string> sets;
};

void add_common(CLI::App* app, Common& c, bool with_config = true) {
  if (with_config) {
    app->add_option("--config", c.config, "run configuration file (key = value)")->check(CLI::ExistingFile);
    app->add_option("--set", c.sets, "override one config entry, key=value (repeatable)");
  }
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--workers", c.workers, "worker threads (default 1: deterministic)")->check(CLI::PositiveNumber);
  app->add_option("--precision", c.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
}

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out = c.out;
  if (c.workers) cfg.workers = *c.workers;
  if (!c.precision.empty()) cfg.precision = parse_precision(c.precision);
  cfg.validate();
  return cfg;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

template <typename T>
std::vector<T> split_list(const std::string& s, T (*parse)(const std::string&)) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse(item));
  }
  return out;
}

std::uint64_t parse_u64(const std::string& s) {
  std::size_t used = 0;
  const auto v = std::stoull(s, &used);
  if (used != s.size()) throw UsageError("bad seed '" + s + "'");
  return v;
}

// ---------------------------------------------------------------- commands

struct GenerateArgs {
  Common common;
  std::size_t n_train = 800, n_val = 200, n_test = 200;
  SceneSpec spec;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  SceneSpec spec = a.spec;
  if (a.common.seed) spec.seed = *a.common.seed;
  const fs::path dir = a.common.out.empty() ? fs::path("data") : fs::path(a.common.out);
  const auto g = generate_dataset(spec, a.n_train, a.n_val, a.n_test, dir, a.common.workers.value_or(1));
  out << "wrote " << a.n_train << "/" << a.n_val << "/" << a.n_test << " images to " << dir.string() << "\n"
      << "manifests: " << g.train.string() << " " << g.val.string() << " " << g.test.string() << "\n";
  return kExitOk;
}

int cmd_train(const Common& c, std::ostream& out) {
  const RunConfig cfg = resolve_config(c);
  const auto m = train_model(cfg);
  out << "variant " << to_string(cfg.variant) << " seed " << cfg.seed << ": " << m.iterations << " iterations\n"
      << "loss " << fmt(m.initial_loss) << " -> " << fmt(m.final_loss) << "\n"
      << "best val mIoU " << fmt(m.best_val_miou) << " (epoch " << m.best_epoch << "), final " << fmt(m.final_val_miou)
      << "\n"
      << "manifest " << (fs::path(cfg.out) / "manifest.json").string() << "\n";
  return kExitOk;
}

struct EvalArgs {
  Common common;
  std::vector<std::string> checkpoints;
  std::string manifest;
  bool oracle = false;
  bool dump_masks = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (a.manifest.empty()) throw UsageError("eval needs --manifest");
  if (!a.oracle && a.checkpoints.empty()) throw UsageError("eval needs --checkpoint (or --oracle)");
  const fs::path dir = a.common.out.empty() ? fs::path("eval") : fs::path(a.common.out);
  fs::create_directories(dir);
  EvalReport r;
  if (a.oracle) {
    r = evaluate_oracle(a.manifest);
  } else {
    std::vector<fs::path> ckpts(a.checkpoints.begin(), a.checkpoints.end());
    std::optional<fs::path> dump;
    if (a.dump_masks) dump = dir / "masks";
    r = evaluate_checkpoints(ckpts, a.manifest, a.common.workers.value_or(1), dump);
  }
  write_iou_csv(dir / "iou.csv", r);
  out << "mIoU " << fmt(r.mean_iou) << "  pixel accuracy " << fmt(r.pixel_accuracy) << "\n"
      << "per-class IoU: " << (dir / "iou.csv").string() << "\n";
  return kExitOk;
}

struct InferArgs {
  Common common;
  std::vector<std::string> checkpoints;
  std::vector<std::string> images;
  std::vector<std::string> truth;
  std::string baseline;
  std::string sheet;
  bool probs = false;
  bool full_path = false;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  if (a.checkpoints.empty() || a.images.empty()) throw UsageError("infer needs --checkpoint and --image");
  const fs::path dir = a.common.out.empty() ? fs::path("infer") : fs::path(a.common.out);
  kernels::set_num_threads(a.common.workers.value_or(1));
  InferOptions opt;
  opt.checkpoints.assign(a.checkpoints.begin(), a.checkpoints.end());
  opt.dump_probabilities = a.probs;
  opt.force_full_path = a.full_path;

  std::vector<RgbImage> imgs;
  std::vector<ClassMap> ours, base, gts;
  for (const auto& img : a.images) {
    const auto r = infer_image(opt, img, dir);
    out << img << " -> " << r.mask_path.string() << " (" << r.mask.h << "x" << r.mask.w << ")\n";
    if (r.probabilities_path) out << "  probabilities " << r.probabilities_path->string() << "\n";
    if (!a.sheet.empty()) {
      imgs.push_back(read_ppm(img));
      ours.push_back(r.mask);
    }
  }
  if (!a.sheet.empty()) {
    if (a.baseline.empty() || a.truth.size() != a.images.size()) {
      throw UsageError("--sheet needs --baseline and one --gt per --image");
    }
    for (std::size_t i = 0; i < imgs.size(); ++i) {
      gts.push_back(read_pgm(a.truth[i]));
      base.push_back(argmax_classes(predict_probabilities({a.baseline}, imgs[i]), 0));
    }
    const auto sheet = contact_sheet(imgs, gts, base, ours);
    fs::create_directories(fs::path(a.sheet).parent_path().empty() ? fs::path(".") : fs::path(a.sheet).parent_path());
    write_ppm(a.sheet, sheet);
    out << "contact sheet " << a.sheet << " (" << sheet.h << "x" << sheet.w << ")\n";
  }
  return kExitOk;
}

struct GradcheckArgs {
  Common common;
  std::size_t instances = 20;
  bool inject_fault = false;
  std::vector<std::string> suites;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  if (a.common.precision == "f32") throw UsageError("gradcheck requires f64 precision; f32 is refused");
  GradcheckOptions opt;
  opt.seed = a.common.seed.value_or(0);
  opt.instances = a.instances;
  opt.only = a.suites;
  if (a.inject_fault) opt.fault_scale = 1.01;
  const auto results = run_gradcheck_suites(opt);
  bool ok = true;
  char line[160];
  std::snprintf(line, sizeof line, "%-36s %9s %11s %12s  %s\n", "check", "instances", "coordinates", "max rel err",
                "status");
  out << line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-36s %9zu %11zu %12.3e  %s\n", r.name.c_str(), r.instances, r.coordinates,
                  r.max_rel_error, r.passed ? "PASS" : "FAIL");
    out << line;
    ok = ok && r.passed;
  }
  if (!a.common.out.empty()) {
    fs::create_directories(a.common.out);
    std::ofstream csv(fs::path(a.common.out) / "gradcheck.csv");
    csv << "check,instances,coordinates,max_rel_error,passed\n";
    for (const auto& r : results) {
      std::snprintf(line, sizeof line, "%.17g", r.max_rel_error);
      csv << r.name << ',' << r.instances << ',' << r.coordinates << ',' << line << ',' << (r.passed ? 1 : 0) << '\n';
    }
  }
  out << (ok ? "all checks within " : "FAILED: some checks exceed ") << opt.tolerance
      << (a.inject_fault ? " (fault injection on)" : "") << "\n";
  return ok ? kExitOk : kExitVerification;
}

struct AblateArgs {
  Common common;
  std::string variants = "bilinear-fixed,global-deconv,global-deconv+label-loss";
  std::string seeds = "0,1,2";
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  Common c = a.common;
  c.seed.reset();
  const RunConfig base = resolve_config(c);
  const auto variants = split_list<Variant>(a.variants, +[](const std::string& s) { return parse_variant(s); });
  const auto seeds = split_list<std::uint64_t>(a.seeds, parse_u64);
  const fs::path dir = a.common.out.empty() ? fs::path("ablation") : fs::path(a.common.out);
  const auto rows = run_ablation(base, variants, seeds, dir);
  for (const auto& r : rows) {
    out << to_string(r.variant) << ": mean val mIoU " << fmt(r.mean) << " +- " << fmt(r.spread) << " over "
        << r.seeds.size() << " seeds\n";
  }
  out << "summary " << (dir / "summary.csv").string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Global deconvolution segmentation toolkit", "gdn"};
  app.require_subcommand(1);
  app.set_version_flag("--version", code_version());

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "write the synthetic shapes dataset and its manifests");
  add_common(g, gen.common, false);
  g->add_option("--train", gen.n_train, "training images")->check(CLI::PositiveNumber);
  g->add_option("--val", gen.n_val, "validation images")->check(CLI::PositiveNumber);
  g->add_option("--test", gen.n_test, "test images")->check(CLI::PositiveNumber);
  g->add_option("--canvas", gen.spec.canvas, "image side in pixels");
  g->add_option("--classes", gen.spec.num_classes, "object classes (1-9)");
  g->add_option("--min-shapes", gen.spec.min_shapes, "fewest shapes per image");
  g->add_option("--max-shapes", gen.spec.max_shapes, "most shapes per image");
  g->add_option("--noise", gen.spec.noise_sigma, "pixel noise sigma (0-255 scale)");

  Common train;
  auto* t = app.add_subcommand("train", "train one model variant");
  add_common(t, train);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "per-class IoU and mIoU of checkpoints on a split");
  add_common(e, ev.common, false);
  e->add_option("--checkpoint", ev.checkpoints, "checkpoint directory (repeat to ensemble)");
  e->add_option("--manifest", ev.manifest, "split manifest")->check(CLI::ExistingFile);
  e->add_flag("--oracle", ev.oracle, "score the ground truth against itself");
  e->add_flag("--dump-masks", ev.dump_masks, "write predicted masks under <out>/masks");

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "predict masks for images up to the trained size");
  add_common(i, inf.common, false);
  i->add_option("--checkpoint", inf.checkpoints, "checkpoint directory (repeat to ensemble)");
  i->add_option("--image", inf.images, "PPM image (repeatable)")->check(CLI::ExistingFile);
  i->add_flag("--probs", inf.probs, "also write per-class probabilities (GDT1)");
  i->add_flag("--full-path", inf.full_path, "use the stored matrices without subsetting");
  i->add_option("--gt", inf.truth, "ground-truth mask per image, for the contact sheet")->check(CLI::ExistingFile);
  i->add_option("--baseline", inf.baseline, "baseline checkpoint for the contact sheet");
  i->add_option("--sheet", inf.sheet, "write an image | truth | baseline | prediction contact sheet (PPM)");

  GradcheckArgs gc;
  auto* c = app.add_subcommand("gradcheck", "finite-difference check of every backward pass");
  add_common(c, gc.common, false);
  c->add_option("--instances", gc.instances, "random instances per suite")->check(CLI::PositiveNumber);
  c->add_flag("--inject-fault", gc.inject_fault, "scale analytic gradients by 1.01 (must fail)");
  c->add_option("--suite", gc.suites, "restrict to named suites (repeatable)");

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "train variants x seeds and summarize val mIoU");
  add_common(a, ab.common);
  a->add_option("--variants", ab.variants, "comma-separated variants");
  a->add_option("--seeds", ab.seeds, "comma-separated seeds");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << code_version() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n" << "run with --help for usage\n";
    return kExitUsage;
  }

  try {
    if (g->parsed()) return cmd_generate(gen, out);
    if (t->parsed()) return cmd_train(train, out);
    if (e->parsed()) return cmd_eval(ev, out);
    if (i->parsed()) return cmd_infer(inf, out);
    if (c->parsed()) return cmd_gradcheck(gc, out);
    if (a->parsed()) return cmd_ablate(ab, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& ex) {
    err << "config error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& ex) {
    err << "numeric failure: " << ex.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace gdn
