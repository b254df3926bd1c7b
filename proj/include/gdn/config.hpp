// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: a flat `key = value` text file. Unknown keys are errors;
// `#` starts a comment. serialize() writes every key, so parse(serialize(c))
// reproduces c.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gdn/heads.hpp"
#include "gdn/upsample.hpp"

namespace gdn {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Rows of the ablation table, in table order.
enum class Variant {
  kBilinearFixed,
  kTconvLearned,
  kGlobalDeconv,
  kGlobalDeconvLabel,
  kGlobalDeconvLabelSpp,
};

const std::array<Variant, 5>& all_variants();
std::string to_string(Variant v);
Variant parse_variant(const std::string& s);
bool uses_global_deconv(Variant v);
bool uses_label_loss(Variant v);
bool uses_refine_head(Variant v);

enum class Precision { kF32, kF64 };
std::string to_string(Precision p);
Precision parse_precision(const std::string& s);

enum class GdInit { kGlorot, kBilinear };
std::string to_string(GdInit g);
GdInit parse_gd_init(const std::string& s);

struct RunConfig {
  Variant variant = Variant::kGlobalDeconv;

  // data
  std::string train_manifest = "data/train.txt";
  std::string val_manifest = "data/val.txt";

  // model
  std::size_t encoder_dilation = 1;  // dilation of the last encoder block
  Activation gd_activation = Activation::kNone;
  GdInit gd_init = GdInit::kGlorot;
  RefineKind refine_kind = RefineKind::kSpp;
  std::vector<std::size_t> spp_levels{1, 2, 3, 4, 5};
  std::size_t label_hidden = 64;

  // optimizer
  double lr = 1e-2;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch = 8;
  double lambda_label = 1.0;

  // schedule
  std::size_t stage1_iters = 20;  // new blocks only, encoder frozen
  double stage1_lr_mult = 0.1;
  std::size_t epochs = 10;  // full training
  std::size_t max_iters = 0;  // 0 = no cap
  std::size_t plateau_patience = 3;
  double plateau_factor = 0.1;
  double plateau_threshold = 1e-4;
  std::size_t checkpoint_every = 0;  // iterations; 0 = only best/final

  // run
  std::uint64_t seed = 0;
  Precision precision = Precision::kF64;
  int workers = 1;
  std::string out = "runs/default";

  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

RunConfig parse_config(const std::string& text);
std::string serialize_config(const RunConfig& c);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& c);

// Applies one `key = value` assignment (also used for CLI overrides).
void set_config_value(RunConfig& c, const std::string& key, const std::string& value);

std::vector<std::size_t> parse_size_list(const std::string& s);
std::string format_size_list(const std::vector<std::size_t>& v);

}  // namespace gdn
