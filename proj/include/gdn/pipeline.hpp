// SPDX-License-Identifier: Apache-2.0
//
// End-to-end experiment steps behind the CLI: training with staged
// fine-tuning, evaluation (optionally an ensemble of checkpoints), inference
// at any size up to the trained canvas, and the ablation grid.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gdn/config.hpp"
#include "gdn/data.hpp"
#include "gdn/metrics.hpp"

namespace gdn {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string code_version();

struct RunManifest {
  RunConfig config;
  std::string code_version;
  std::string started;
  std::string finished;
  std::size_t iterations = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double best_val_miou = 0.0;
  double final_val_miou = 0.0;
  std::size_t best_epoch = 0;
  std::string best_checkpoint;
  std::string final_checkpoint;
  std::string log_csv;
};

std::string manifest_json(const RunManifest& m);
void write_run_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_run_manifest(const std::filesystem::path& path);

// Trains per cfg and writes under cfg.out: train_log.csv (iter, seg_loss,
// label_loss, combined, lr), groups.csv (effective lr per group and stage),
// val.csv, checkpoints/best, checkpoints/final and manifest.json.
// Throws NumericError when a loss becomes non-finite.
RunManifest train_model(const RunConfig& cfg);

struct EvalReport {
  std::vector<std::string> class_names;
  ConfusionMatrix confusion;
  double mean_iou = 0.0;
  double pixel_accuracy = 0.0;
};

// Probability-averaged prediction of one or more checkpoints on every sample
// of the manifest. Predicted masks are written when dump_dir is set.
EvalReport evaluate_checkpoints(const std::vector<std::filesystem::path>& checkpoints,
                                const std::filesystem::path& manifest, int workers,
                                const std::optional<std::filesystem::path>& dump_dir = std::nullopt);

// Ground truth scored against itself.
EvalReport evaluate_oracle(const std::filesystem::path& manifest);

// Recount from masks dumped by evaluate_checkpoints.
EvalReport evaluate_dumped_masks(const std::filesystem::path& manifest, const std::filesystem::path& dump_dir);

// Header "class,iou", one row per class (background first), then "mIoU".
void write_iou_csv(const std::filesystem::path& path, const EvalReport& r);

struct InferOptions {
  std::vector<std::filesystem::path> checkpoints;  // >1 means probability ensemble
  bool dump_probabilities = false;
  bool force_full_path = false;  // use the stored matrices without subsetting (full size only)
};

struct InferResult {
  ClassMap mask;
  std::filesystem::path mask_path;
  std::optional<std::filesystem::path> probabilities_path;
};

// Writes <out_dir>/<image stem>.pgm (and .probs.gdt when asked).
InferResult infer_image(const InferOptions& opt, const std::filesystem::path& image,
                        const std::filesystem::path& out_dir);

// Averaged per-pixel class probabilities (1, labels, h, w) in double precision.
BasicTensor<double> predict_probabilities(const std::vector<std::filesystem::path>& checkpoints,
                                          const RgbImage& image, bool force_full_path = false);

// Rows of (image | ground truth | baseline | global deconvolution) tiles.
RgbImage contact_sheet(const std::vector<RgbImage>& images, const std::vector<ClassMap>& truth,
                       const std::vector<ClassMap>& baseline, const std::vector<ClassMap>& ours);
RgbImage colorize(const ClassMap& mask);

struct AblationRow {
  Variant variant;
  std::vector<std::uint64_t> seeds;
  std::vector<double> miou;
  double mean = 0.0;
  double spread = 0.0;  // sample standard deviation
  double min = 0.0;
  double max = 0.0;
};

// Trains each variant for every seed under <out>/<variant>/seed<k>, then
// writes <out>/summary.csv in table order. The sppfc row is scored as the
// probability ensemble with the same seed's global-deconv+label-loss run.
std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<Variant>& variants,
                                      const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out);

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

}  // namespace gdn
