// SPDX-License-Identifier: Apache-2.0
#include "gdn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "gdn/heads.hpp"
#include "gdn/random.hpp"

namespace gdn {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- PNM

namespace {

// Flat single-colour channels have no spread; they are left unscaled.
double channel_stddev(double mean_sq, double mean) {
  const double var = mean_sq - mean * mean;
  return var > 1e-8 ? std::sqrt(var) : 1.0;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void dump(const fs::path& path, const std::string& header, const std::uint8_t* data, std::size_t n) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << header;
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

struct PnmHeader {
  std::size_t w = 0, h = 0;
  std::size_t payload = 0;  // offset of the first pixel byte
};

PnmHeader parse_pnm_header(const std::string& b, const char* magic) {
  if (b.size() < 2 || b[0] != magic[0] || b[1] != magic[1]) {
    throw FormatError(std::string("expected binary ") + magic + " magic");
  }
  std::size_t pos = 2;
  auto next_number = [&](const char* what) -> std::size_t {
    for (;;) {
      while (pos < b.size() && std::isspace(static_cast<unsigned char>(b[pos]))) ++pos;
      if (pos < b.size() && b[pos] == '#') {
        while (pos < b.size() && b[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    std::size_t v = 0;
    auto [end, ec] = std::from_chars(b.data() + pos, b.data() + b.size(), v);
    if (ec != std::errc{} || end == b.data() + pos) throw FormatError(std::string("malformed header: bad ") + what);
    pos = static_cast<std::size_t>(end - b.data());
    return v;
  };
  PnmHeader hdr;
  hdr.w = next_number("width");
  hdr.h = next_number("height");
  const std::size_t maxval = next_number("maxval");
  if (hdr.w == 0 || hdr.h == 0) throw FormatError("malformed header: zero image dimension");
  if (maxval != 255) throw FormatError("unsupported maxval " + std::to_string(maxval) + " (only 255)");
  if (pos >= b.size() || !std::isspace(static_cast<unsigned char>(b[pos]))) {
    throw FormatError("malformed header: missing separator before pixel data");
  }
  hdr.payload = pos + 1;
  return hdr;
}

}  // namespace

RgbImage parse_ppm(const std::string& bytes) {
  const auto hdr = parse_pnm_header(bytes, "P6");
  RgbImage img(hdr.h, hdr.w);
  if (bytes.size() - hdr.payload < img.data.size()) throw FormatError("truncated PPM payload");
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(hdr.payload), img.data.size(), img.data.begin());
  return img;
}

ClassMap parse_pgm(const std::string& bytes) {
  const auto hdr = parse_pnm_header(bytes, "P5");
  ClassMap m(hdr.h, hdr.w);
  if (bytes.size() - hdr.payload < m.data.size()) throw FormatError("truncated PGM payload");
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(hdr.payload), m.data.size(), m.data.begin());
  return m;
}

RgbImage read_ppm(const fs::path& path) {
  try {
    return parse_ppm(slurp(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

ClassMap read_pgm(const fs::path& path) {
  try {
    return parse_pgm(slurp(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_ppm(const fs::path& path, const RgbImage& img) {
  dump(path, "P6\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n", img.data.data(),
       img.data.size());
}

void write_pgm(const fs::path& path, const ClassMap& mask) {
  dump(path, "P5\n" + std::to_string(mask.w) + " " + std::to_string(mask.h) + "\n255\n", mask.data.data(),
       mask.data.size());
}

// ---------------------------------------------------------------- scenes

void SceneSpec::validate() const {
  if (canvas < 16) throw std::invalid_argument("canvas must be >= 16");
  if (num_classes < 1 || num_classes > 9) throw std::invalid_argument("num_classes must be in [1, 9]");
  if (min_shapes < 1 || max_shapes < min_shapes) throw std::invalid_argument("need 1 <= min_shapes <= max_shapes");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
}

ShapeKind class_kind(std::size_t cls) { return static_cast<ShapeKind>((cls - 1) % 3); }
Texture class_texture(std::size_t cls) { return static_cast<Texture>((cls - 1) / 3); }

std::vector<std::string> class_names(std::size_t num_classes) {
  static constexpr const char* kKinds[] = {"rect", "disk", "triangle"};
  static constexpr const char* kTextures[] = {"solid", "stripes", "checker"};
  std::vector<std::string> names{"background"};
  for (std::size_t c = 1; c <= num_classes; ++c) {
    names.push_back(std::string(kKinds[(c - 1) % 3]) + "-" + kTextures[(c - 1) / 3]);
  }
  return names;
}

namespace {

constexpr std::array<std::array<double, 3>, 9> kPalette{{
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

struct Instance {
  std::size_t cls = 0;
  double cx = 0, cy = 0, a = 0, b = 0, cos_t = 1, sin_t = 0;
  std::array<double, 6> tri{};  // triangle vertices (x0,y0,x1,y1,x2,y2)
  std::array<double, 3> color{};
  double tex_cos = 1, tex_sin = 0, tex_period = 8;
};

double edge(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

bool inside(const Instance& s, double x, double y) {
  const double dx = x - s.cx, dy = y - s.cy;
  const double u = dx * s.cos_t + dy * s.sin_t;
  const double v = -dx * s.sin_t + dy * s.cos_t;
  switch (class_kind(s.cls)) {
    case ShapeKind::kRectangle:
      return std::abs(u) <= s.a && std::abs(v) <= s.b;
    case ShapeKind::kDisk:
      return (u * u) / (s.a * s.a) + (v * v) / (s.b * s.b) <= 1.0;
    case ShapeKind::kTriangle: {
      const auto& t = s.tri;
      const double e0 = edge(t[0], t[1], t[2], t[3], x, y);
      const double e1 = edge(t[2], t[3], t[4], t[5], x, y);
      const double e2 = edge(t[4], t[5], t[0], t[1], x, y);
      return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
    }
  }
  return false;
}

double texture_gain(const Instance& s, double x, double y) {
  const double u = x * s.tex_cos + y * s.tex_sin;
  const double v = -x * s.tex_sin + y * s.tex_cos;
  const auto band = [&](double t) { return static_cast<long>(std::floor(t / s.tex_period)); };
  switch (class_texture(s.cls)) {
    case Texture::kSolid:
      return 1.0;
    case Texture::kStripes:
      return (band(u) & 1) ? 0.55 : 1.0;
    case Texture::kChecker:
      return ((band(u) + band(v)) & 1) ? 0.55 : 1.0;
  }
  return 1.0;
}

std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

Scene render_scene(const SceneSpec& spec, std::uint64_t stream, std::uint64_t index) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, stream, index));
  const double n = static_cast<double>(spec.canvas);

  std::array<double, 3> bg0{}, bg1{};
  for (auto& v : bg0) v = rng.uniform(70, 150);
  for (auto& v : bg1) v = rng.uniform(70, 150);
  const double bg_angle = rng.uniform(0, 2 * std::numbers::pi);
  const double gx = std::cos(bg_angle), gy = std::sin(bg_angle);

  const std::size_t count = spec.min_shapes + rng.below(spec.max_shapes - spec.min_shapes + 1);
  std::vector<Instance> shapes(count);
  for (auto& s : shapes) {
    s.cls = 1 + rng.below(spec.num_classes);
    const double size = n * rng.uniform(0.11, 0.28);
    s.cx = rng.uniform(0.5 * size, n - 0.5 * size);
    s.cy = rng.uniform(0.5 * size, n - 0.5 * size);
    s.a = size * rng.uniform(0.6, 1.0);
    s.b = size * rng.uniform(0.6, 1.0);
    const double theta = rng.uniform(0, std::numbers::pi);
    s.cos_t = std::cos(theta);
    s.sin_t = std::sin(theta);
    for (int k = 0; k < 3; ++k) {
      const double ang = theta + 2.0 * std::numbers::pi * k / 3.0 + rng.uniform(-0.3, 0.3);
      const double r = size * rng.uniform(0.8, 1.2);
      s.tri[2 * k] = s.cx + r * std::cos(ang);
      s.tri[2 * k + 1] = s.cy + r * std::sin(ang);
    }
    for (int ch = 0; ch < 3; ++ch) s.color[ch] = kPalette[s.cls - 1][ch] + rng.uniform(-25, 25);
    const double tex_angle = rng.uniform(0, std::numbers::pi);
    s.tex_cos = std::cos(tex_angle);
    s.tex_sin = std::sin(tex_angle);
    s.tex_period = rng.uniform(5, 8);
  }

  Scene scene{RgbImage(spec.canvas, spec.canvas), ClassMap(spec.canvas, spec.canvas, 0)};
  for (std::size_t i = 0; i < spec.canvas; ++i) {
    for (std::size_t j = 0; j < spec.canvas; ++j) {
      const double x = static_cast<double>(j) + 0.5, y = static_cast<double>(i) + 0.5;
      const double t = std::clamp(0.5 + ((x - n / 2) * gx + (y - n / 2) * gy) / n, 0.0, 1.0);
      std::array<double, 3> c{};
      for (int ch = 0; ch < 3; ++ch) c[ch] = bg0[ch] * (1 - t) + bg1[ch] * t;
      std::uint8_t label = 0;
      for (const auto& s : shapes) {  // later shapes occlude earlier ones
        if (!inside(s, x, y)) continue;
        const double g = texture_gain(s, x, y);
        for (int ch = 0; ch < 3; ++ch) c[ch] = s.color[ch] * g;
        label = static_cast<std::uint8_t>(s.cls);
      }
      std::uint8_t* px = scene.image.px(i, j);
      for (int ch = 0; ch < 3; ++ch) px[ch] = clamp_byte(c[ch] + spec.noise_sigma * rng.normal());
      scene.mask(i, j) = label;
    }
  }
  return scene;
}

// ---------------------------------------------------------------- manifests

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

}  // namespace

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  DatasetManifest m;
  m.dir = path.parent_path();
  m.split = path.stem().string();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto where = [&] { return path.string() + ":" + std::to_string(lineno) + ": "; };
    if (line.rfind("classes:", 0) == 0) {
      m.classes = split(line.substr(8), ',');
    } else if (line.rfind("seed:", 0) == 0) {
      m.seed = std::stoull(trim(line.substr(5)));
    } else if (line.rfind("mean:", 0) == 0 || line.rfind("stddev:", 0) == 0) {
      const bool is_mean = line[0] == 'm';
      const auto parts = split(line.substr(is_mean ? 5 : 7), ',');
      if (parts.size() != 3) throw FormatError(where() + (is_mean ? "mean" : "stddev") + " needs three values");
      std::array<double, 3> v{};
      for (int c = 0; c < 3; ++c) v[c] = std::stod(parts[c]);
      if (!is_mean && std::ranges::any_of(v, [](double s) { return !(s > 0.0); })) {
        throw FormatError(where() + "stddev must be positive");
      }
      (is_mean ? m.mean : m.stddev) = v;
    } else {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw FormatError(where() + "expected image<TAB>mask");
      m.entries.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
  }
  if (m.classes.size() < 2) throw FormatError(path.string() + ": missing or short classes: header");
  return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << "classes: ";
  for (std::size_t i = 0; i < m.classes.size(); ++i) out << (i ? "," : "") << m.classes[i];
  out << "\nseed: " << m.seed << "\n";
  if (m.mean) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "mean: %.17g,%.17g,%.17g\n", (*m.mean)[0], (*m.mean)[1], (*m.mean)[2]);
    out << buf;
  }
  if (m.stddev) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "stddev: %.17g,%.17g,%.17g\n", (*m.stddev)[0], (*m.stddev)[1], (*m.stddev)[2]);
    out << buf;
  }
  for (const auto& e : m.entries) out << e.image << '\t' << e.mask << '\n';
}

GeneratedDataset generate_dataset(const SceneSpec& spec, std::size_t n_train, std::size_t n_val, std::size_t n_test,
                                  const fs::path& out, int workers) {
  spec.validate();
  if (n_train < 1 || n_val < 1 || n_test < 1) throw std::invalid_argument("every split needs at least one image");
  struct Split {
    const char* name;
    std::size_t count;
    std::uint64_t stream;
  };
  const Split splits[] = {{"train", n_train, 1}, {"val", n_val, 2}, {"test", n_test, 3}};

  std::array<std::uint64_t, 3> train_sum{}, train_sq{};
  std::vector<DatasetManifest> manifests;
  for (const auto& sp : splits) {
    fs::create_directories(out / sp.name);
    DatasetManifest m;
    m.split = sp.name;
    m.classes = class_names(spec.num_classes);
    m.seed = spec.seed;
    m.entries.resize(sp.count);
    std::vector<std::array<std::uint64_t, 3>> sums(sp.count), sqs(sp.count);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(workers, 1))
    for (long li = 0; li < static_cast<long>(sp.count); ++li) {
      const auto i = static_cast<std::size_t>(li);
      const Scene scene = render_scene(spec, sp.stream, i);
      char img[64], mask[64];
      std::snprintf(img, sizeof img, "%s/img_%05zu.ppm", sp.name, i);
      std::snprintf(mask, sizeof mask, "%s/mask_%05zu.pgm", sp.name, i);
      write_ppm(out / img, scene.image);
      write_pgm(out / mask, scene.mask);
      m.entries[i] = {img, mask};
      for (std::size_t p = 0; p < scene.image.data.size(); ++p) {
        const std::uint64_t v = scene.image.data[p];
        sums[i][p % 3] += v;
        sqs[i][p % 3] += v * v;
      }
    }
    if (sp.stream == 1) {
      for (std::size_t i = 0; i < sp.count; ++i)
        for (int c = 0; c < 3; ++c) {
          train_sum[c] += sums[i][c];
          train_sq[c] += sqs[i][c];
        }
    }
    manifests.push_back(std::move(m));
  }

  const double pixels = static_cast<double>(n_train * spec.canvas * spec.canvas);
  std::array<double, 3> mean{}, stddev{};
  for (int c = 0; c < 3; ++c) {
    mean[c] = static_cast<double>(train_sum[c]) / pixels / 255.0;
    stddev[c] = channel_stddev(static_cast<double>(train_sq[c]) / pixels / (255.0 * 255.0), mean[c]);
  }

  GeneratedDataset g{out / "train.txt", out / "val.txt", out / "test.txt"};
  const fs::path* paths[] = {&g.train, &g.val, &g.test};
  for (std::size_t k = 0; k < 3; ++k) {
    manifests[k].mean = mean;
    manifests[k].stddev = stddev;
    write_manifest(*paths[k], manifests[k]);
  }
  return g;
}

// ---------------------------------------------------------------- dataset

Dataset load_dataset(const fs::path& manifest_path, int workers, std::optional<std::array<double, 3>> mean_override,
                     std::optional<std::array<double, 3>> stddev_override) {
  Dataset ds;
  ds.manifest = read_manifest(manifest_path);
  const std::size_t k = ds.manifest.num_classes();
  ds.samples.resize(ds.manifest.entries.size());
  std::vector<std::string> errors(ds.samples.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max(workers, 1))
  for (long li = 0; li < static_cast<long>(ds.samples.size()); ++li) {
    const auto i = static_cast<std::size_t>(li);
    try {
      const auto& e = ds.manifest.entries[i];
      Sample s{read_ppm(ds.manifest.dir / e.image), read_pgm(ds.manifest.dir / e.mask), {}};
      if (s.image.h != s.mask.h || s.image.w != s.mask.w) throw FormatError(e.mask + ": size differs from image");
      for (std::uint8_t v : s.mask.data) {
        if (v > k && v != ClassMap::kIgnore) throw FormatError(e.mask + ": class " + std::to_string(v) + " > " + std::to_string(k));
      }
      s.presence = labels_from_mask(s.mask, k);
      ds.samples[i] = std::move(s);
    } catch (const std::exception& ex) {
      errors[i] = ex.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw FormatError(e);

  if (!(mean_override || ds.manifest.mean) || !(stddev_override || ds.manifest.stddev)) {
    std::array<double, 3> sum{}, sq{};
    std::size_t px = 0;
    for (const auto& s : ds.samples) {
      for (std::size_t p = 0; p < s.image.data.size(); ++p) {
        const double v = s.image.data[p] / 255.0;
        sum[p % 3] += v;
        sq[p % 3] += v * v;
      }
      px += s.image.h * s.image.w;
    }
    for (int c = 0; c < 3; ++c) {
      ds.mean[c] = px ? sum[c] / static_cast<double>(px) : 0.0;
      ds.stddev[c] = px ? channel_stddev(sq[c] / static_cast<double>(px), ds.mean[c]) : 1.0;
    }
  }
  if (mean_override) {
    ds.mean = *mean_override;
  } else if (ds.manifest.mean) {
    ds.mean = *ds.manifest.mean;
  }
  if (stddev_override) {
    ds.stddev = *stddev_override;
  } else if (ds.manifest.stddev) {
    ds.stddev = *ds.manifest.stddev;
  }
  return ds;
}

template <typename T>
BasicTensor<T> image_to_tensor(const RgbImage& img, const std::array<double, 3>& mean,
                               const std::array<double, 3>& stddev) {
  BasicTensor<T> t(Shape4{1, 3, img.h, img.w});
  for (std::size_t c = 0; c < 3; ++c) {
    T* plane = t.plane(0, c).data();
    const double inv = 1.0 / stddev[c];
    for (std::size_t p = 0; p < img.h * img.w; ++p) {
      plane[p] = static_cast<T>((img.data[p * 3 + c] / 255.0 - mean[c]) * inv);
    }
  }
  return t;
}

template <typename T>
BasicTensor<T> make_batch(const Dataset& ds, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty index list");
  const auto& first = ds.samples.at(indices.front()).image;
  BasicTensor<T> batch(Shape4{indices.size(), 3, first.h, first.w});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& img = ds.samples.at(indices[b]).image;
    if (img.h != first.h || img.w != first.w) throw ShapeError("make_batch: images differ in size");
    const auto t = image_to_tensor<T>(img, ds.mean, ds.stddev);
    std::copy(t.values().begin(), t.values().end(), batch.item(b).begin());
  }
  return batch;
}

template BasicTensor<float> image_to_tensor<float>(const RgbImage&, const std::array<double, 3>&,
                                                  const std::array<double, 3>&);
template BasicTensor<double> image_to_tensor<double>(const RgbImage&, const std::array<double, 3>&,
                                                    const std::array<double, 3>&);
template BasicTensor<float> make_batch<float>(const Dataset&, const std::vector<std::size_t>&);
template BasicTensor<double> make_batch<double>(const Dataset&, const std::vector<std::size_t>&);

}  // namespace gdn
