// SPDX-License-Identifier: Apache-2.0
#include "gdn/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace gdn {

const std::array<Variant, 5>& all_variants() {
  static constexpr std::array<Variant, 5> kAll{Variant::kBilinearFixed, Variant::kTconvLearned, Variant::kGlobalDeconv,
                                               Variant::kGlobalDeconvLabel, Variant::kGlobalDeconvLabelSpp};
  return kAll;
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kBilinearFixed: return "bilinear-fixed";
    case Variant::kTconvLearned: return "tconv-learned";
    case Variant::kGlobalDeconv: return "global-deconv";
    case Variant::kGlobalDeconvLabel: return "global-deconv+label-loss";
    case Variant::kGlobalDeconvLabelSpp: return "global-deconv+label-loss+sppfc";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  for (Variant v : all_variants())
    if (to_string(v) == s) return v;
  throw ConfigError("unknown variant '" + s + "'");
}

bool uses_global_deconv(Variant v) {
  return v == Variant::kGlobalDeconv || v == Variant::kGlobalDeconvLabel || v == Variant::kGlobalDeconvLabelSpp;
}
bool uses_label_loss(Variant v) { return v == Variant::kGlobalDeconvLabel || v == Variant::kGlobalDeconvLabelSpp; }
bool uses_refine_head(Variant v) { return v == Variant::kGlobalDeconvLabelSpp; }

std::string to_string(Precision p) { return p == Precision::kF32 ? "f32" : "f64"; }
Precision parse_precision(const std::string& s) {
  if (s == "f32") return Precision::kF32;
  if (s == "f64") return Precision::kF64;
  throw ConfigError("unknown precision '" + s + "' (expected f32|f64)");
}

std::string to_string(GdInit g) { return g == GdInit::kGlorot ? "glorot" : "bilinear"; }
GdInit parse_gd_init(const std::string& s) {
  if (s == "glorot") return GdInit::kGlorot;
  if (s == "bilinear") return GdInit::kBilinear;
  throw ConfigError("unknown gd_init '" + s + "' (expected glorot|bilinear)");
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t v = 0;
    const auto b = item.find_first_not_of(' '), e = item.find_last_not_of(' ');
    if (b == std::string::npos) throw ConfigError("empty entry in list '" + s + "'");
    const char* first = item.data() + b;
    const char* last = item.data() + e + 1;
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || p != last) throw ConfigError("bad integer '" + item + "' in list '" + s + "'");
    out.push_back(v);
  }
  return out;
}

std::string format_size_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
  N out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError("bad value '" + v + "' for " + key);
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define GDN_STR(name) {#name, {[](RunConfig& c, const std::string&, const std::string& v) { c.name = v; }, [](const RunConfig& c) { return c.name; }}}
#define GDN_NUM(name, type)                                                                                   \
  {#name, {[](RunConfig& c, const std::string& k, const std::string& v) { c.name = parse_number<type>(k, v); }, \
           [](const RunConfig& c) { return std::to_string(c.name); }}}
#define GDN_REAL(name)                                                                                          \
  {#name, {[](RunConfig& c, const std::string& k, const std::string& v) { c.name = parse_number<double>(k, v); }, \
           [](const RunConfig& c) { return fmt_double(c.name); }}}

// Serialization order is the order of this table.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> kFields{
      {"variant", {[](RunConfig& c, const std::string&, const std::string& v) { c.variant = parse_variant(v); },
                   [](const RunConfig& c) { return to_string(c.variant); }}},
      GDN_STR(train_manifest),
      GDN_STR(val_manifest),
      GDN_NUM(encoder_dilation, std::size_t),
      {"gd_activation",
       {[](RunConfig& c, const std::string&, const std::string& v) {
          try {
            c.gd_activation = parse_activation(v);
          } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
          }
        },
        [](const RunConfig& c) { return to_string(c.gd_activation); }}},
      {"gd_init", {[](RunConfig& c, const std::string&, const std::string& v) { c.gd_init = parse_gd_init(v); },
                   [](const RunConfig& c) { return to_string(c.gd_init); }}},
      {"refine_kind",
       {[](RunConfig& c, const std::string&, const std::string& v) {
          try {
            c.refine_kind = parse_refine_kind(v);
          } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
          }
        },
        [](const RunConfig& c) { return to_string(c.refine_kind); }}},
      {"spp_levels", {[](RunConfig& c, const std::string&, const std::string& v) { c.spp_levels = parse_size_list(v); },
                      [](const RunConfig& c) { return format_size_list(c.spp_levels); }}},
      GDN_NUM(label_hidden, std::size_t),
      GDN_REAL(lr),
      GDN_REAL(momentum),
      GDN_REAL(weight_decay),
      GDN_NUM(batch, std::size_t),
      GDN_REAL(lambda_label),
      GDN_NUM(stage1_iters, std::size_t),
      GDN_REAL(stage1_lr_mult),
      GDN_NUM(epochs, std::size_t),
      GDN_NUM(max_iters, std::size_t),
      GDN_NUM(plateau_patience, std::size_t),
      GDN_REAL(plateau_factor),
      GDN_REAL(plateau_threshold),
      GDN_NUM(checkpoint_every, std::size_t),
      GDN_NUM(seed, std::uint64_t),
      {"precision", {[](RunConfig& c, const std::string&, const std::string& v) { c.precision = parse_precision(v); },
                     [](const RunConfig& c) { return to_string(c.precision); }}},
      GDN_NUM(workers, int),
      GDN_STR(out),
  };
  return kFields;
}

#undef GDN_STR
#undef GDN_NUM
#undef GDN_REAL

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(encoder_dilation >= 1, "encoder_dilation must be >= 1");
  require(!spp_levels.empty(), "spp_levels must not be empty");
  for (auto l : spp_levels) require(l >= 1, "spp_levels entries must be >= 1");
  require(label_hidden >= 1, "label_hidden must be >= 1");
  require(lr > 0 && std::isfinite(lr), "lr must be > 0");
  require(momentum >= 0 && momentum < 1, "momentum must be in [0, 1)");
  require(weight_decay >= 0, "weight_decay must be >= 0");
  require(batch >= 1, "batch must be >= 1");
  require(lambda_label >= 0, "lambda_label must be >= 0");
  require(stage1_lr_mult > 0, "stage1_lr_mult must be > 0");
  require(plateau_patience >= 1, "plateau_patience must be >= 1");
  require(plateau_factor > 0 && plateau_factor < 1, "plateau_factor must be in (0, 1)");
  require(plateau_threshold >= 0, "plateau_threshold must be >= 0");
  require(workers >= 1, "workers must be >= 1");
}

void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  for (const auto& [name, f] : fields()) {
    if (name == key) {
      f.set(c, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    try {
      set_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

std::string serialize_config(const RunConfig& c) {
  std::string s;
  for (const auto& [name, f] : fields()) s += name + " = " + f.get(c) + "\n";
  return s;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void save_config(const std::filesystem::path& path, const RunConfig& c) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize_config(c);
}

}  // namespace gdn
