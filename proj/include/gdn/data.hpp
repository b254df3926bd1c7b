// SPDX-License-Identifier: Apache-2.0
//
// Synthetic shape scenes, binary PPM/PGM I/O, dataset manifests and the
// in-memory dataset used for training and evaluation.
//
// Manifest layout (paths relative to the manifest file):
//   classes: background,rect-solid,...
//   seed: 0
//   mean: 0.41,0.39,0.40
//   stddev: 0.16,0.15,0.16
//   train/img_00000.ppm<TAB>train/mask_00000.pgm
//   ...

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gdn/tensor.hpp"
#include "gdn/tensor_io.hpp"

namespace gdn {

struct RgbImage {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> data;  // interleaved RGB, row-major

  RgbImage() = default;
  RgbImage(std::size_t h_, std::size_t w_) : h(h_), w(w_), data(h_ * w_ * 3, 0) {}

  std::uint8_t* px(std::size_t i, std::size_t j) { return data.data() + (i * w + j) * 3; }
  const std::uint8_t* px(std::size_t i, std::size_t j) const { return data.data() + (i * w + j) * 3; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& img);
ClassMap read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const ClassMap& mask);

RgbImage parse_ppm(const std::string& bytes);
ClassMap parse_pgm(const std::string& bytes);

enum class ShapeKind { kRectangle, kDisk, kTriangle };
enum class Texture { kSolid, kStripes, kChecker };

struct SceneSpec {
  std::size_t canvas = 128;
  std::size_t num_classes = 6;  // excluding background; at most 9
  std::size_t min_shapes = 1;
  std::size_t max_shapes = 4;
  double noise_sigma = 12.0;  // on the 0..255 scale
  std::uint64_t seed = 0;

  void validate() const;
};

// Class c in 1..9 is bound to (kind, texture) = (c-1) % 3, (c-1) / 3.
ShapeKind class_kind(std::size_t cls);
Texture class_texture(std::size_t cls);
std::vector<std::string> class_names(std::size_t num_classes);

struct Scene {
  RgbImage image;
  ClassMap mask;
};

// Deterministic in (spec, split stream, index).
Scene render_scene(const SceneSpec& spec, std::uint64_t stream, std::uint64_t index);

struct ManifestEntry {
  std::string image;  // relative to the manifest directory
  std::string mask;
};

struct DatasetManifest {
  std::string split;
  std::vector<std::string> classes;  // classes[0] is background
  std::uint64_t seed = 0;
  std::optional<std::array<double, 3>> mean;    // per-channel mean on the [0,1] scale
  std::optional<std::array<double, 3>> stddev;  // per-channel standard deviation, same scale
  std::vector<ManifestEntry> entries;
  std::filesystem::path dir;  // directory the relative paths resolve against

  [[nodiscard]] std::size_t num_classes() const { return classes.empty() ? 0 : classes.size() - 1; }
};

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);

struct GeneratedDataset {
  std::filesystem::path train, val, test;  // manifest files
};

// Writes <out>/{train,val,test}/ images and masks plus <out>/<split>.txt
// manifests. The train-split channel statistics go into every manifest.
GeneratedDataset generate_dataset(const SceneSpec& spec, std::size_t n_train, std::size_t n_val, std::size_t n_test,
                                  const std::filesystem::path& out, int workers = 1);

struct Sample {
  RgbImage image;
  ClassMap mask;
  std::vector<std::uint8_t> presence;
};

struct Dataset {
  DatasetManifest manifest;
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> stddev{1.0, 1.0, 1.0};
  std::vector<Sample> samples;

  [[nodiscard]] std::size_t size() const { return samples.size(); }
  [[nodiscard]] std::size_t num_classes() const { return manifest.num_classes(); }
};

// The overrides replace the manifest statistics (e.g. the train split's for val data).
Dataset load_dataset(const std::filesystem::path& manifest_path, int workers = 1,
                     std::optional<std::array<double, 3>> mean_override = std::nullopt,
                     std::optional<std::array<double, 3>> stddev_override = std::nullopt);

// (1, 3, h, w) tensor: pixels scaled to [0,1], then (v - mean) / stddev per channel.
template <typename T>
BasicTensor<T> image_to_tensor(const RgbImage& img, const std::array<double, 3>& mean,
                               const std::array<double, 3>& stddev = {1.0, 1.0, 1.0});

// Stacks the listed samples; all images must share one size.
template <typename T>
BasicTensor<T> make_batch(const Dataset& ds, const std::vector<std::size_t>& indices);

}  // namespace gdn
