#include "hagan/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "hagan/error.hpp"

namespace hagan {
namespace {

struct Key {
  const char* name;
  const char* doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw InvalidArgument("config key '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw InvalidArgument("config key '" + key + "': expected an integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw InvalidArgument("config key '" + key + "': expected an unsigned integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InvalidArgument("config key '" + key + "': expected a boolean, got '" + v + "'");
}

#define HAGAN_INT(field, doc)                                                         \
  Key{#field, doc, [](const RunConfig& c) { return std::to_string(c.train.field); }, \
      [](RunConfig& c, const std::string& v) { c.train.field = parse_int(#field, v); }}
#define HAGAN_DOUBLE(name, path, doc)                                  \
  Key{name, doc, [](const RunConfig& c) { return fmt_double(c.path); }, \
      [](RunConfig& c, const std::string& v) { c.path = parse_double(name, v); }}
#define HAGAN_BOOL(name, path, doc)                                  \
  Key{name, doc, [](const RunConfig& c) { return fmt_bool(c.path); }, \
      [](RunConfig& c, const std::string& v) { c.path = parse_bool(name, v); }}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      Key{"seed", "master seed for initialization, sampling and data order",
          [](const RunConfig& c) { return std::to_string(c.train.seed); },
          [](RunConfig& c, const std::string& v) { c.train.seed = parse_uint("seed", v); }},
      HAGAN_INT(resolution, "image side length in pixels (power of two)"),
      HAGAN_INT(latent_dim, "latent vector length, z ~ U[-1, 1]"),
      HAGAN_INT(batch_size, "mini-batch size"),
      HAGAN_DOUBLE("lr_g", train.lr_g, "generator Adam learning rate"),
      HAGAN_DOUBLE("lr_d", train.lr_d, "discriminator Adam learning rate"),
      HAGAN_DOUBLE("adam_beta1", train.adam_beta1, "Adam first-moment decay"),
      HAGAN_DOUBLE("adam_beta2", train.adam_beta2, "Adam second-moment decay"),
      HAGAN_INT(warmup_epochs, "epochs of conventional training before augmentation starts"),
      HAGAN_INT(total_epochs, "training epochs (ignored when max_steps > 0)"),
      HAGAN_INT(max_steps, "step budget; > 0 overrides total_epochs"),
      HAGAN_INT(g_base_channels, "generator width at full resolution"),
      HAGAN_INT(d_base_channels, "discriminator width of the first layer"),
      HAGAN_INT(max_channels, "channel cap for both networks"),
      HAGAN_INT(d_image_layers, "stride-2 layers in the image branch"),
      HAGAN_BOOL("d_shared_stem", train.d_shared_stem, "share one conv layer between discriminator branches"),
      HAGAN_DOUBLE("beta1", train.weights.beta1, "pixel adversarial weight in the D objective"),
      HAGAN_DOUBLE("beta2", train.weights.beta2, "consistency weight in the D objective"),
      HAGAN_DOUBLE("beta_g", train.weights.beta_g, "pixel adversarial weight in the G objective"),
      HAGAN_DOUBLE("feature_cons_weight", train.weights.feature_cons_weight,
                   "feature-map consistency weight inside the consistency term"),
      Key{"feature_cons_mode", "masked_l2 | infonce",
          [](const RunConfig& c) { return to_string(c.train.feature_mode); },
          [](RunConfig& c, const std::string& v) { c.train.feature_mode = parse_feature_mode(v); }},
      HAGAN_DOUBLE("alpha", train.alpha, "label normalization: lambda = alpha * (lambda0 + lambda1)"),
      HAGAN_DOUBLE("mask_ratio_min", train.mask_ratio.lo, "smallest cut-mask area ratio"),
      HAGAN_DOUBLE("mask_ratio_max", train.mask_ratio.hi, "largest cut-mask area ratio"),
      Key{"aug_policy", "comma list of brightness, contrast, translation, cutout (or none)",
          [](const RunConfig& c) { return ops_to_string(c.train.aug.ops); },
          [](RunConfig& c, const std::string& v) { c.train.aug.ops = parse_ops(v); }},
      HAGAN_DOUBLE("aug_brightness_min", train.aug.brightness_lo, "brightness shift lower bound"),
      HAGAN_DOUBLE("aug_brightness_max", train.aug.brightness_hi, "brightness shift upper bound"),
      HAGAN_DOUBLE("aug_contrast_min", train.aug.contrast_lo, "contrast scale lower bound"),
      HAGAN_DOUBLE("aug_contrast_max", train.aug.contrast_hi, "contrast scale upper bound"),
      HAGAN_DOUBLE("aug_translation", train.aug.translation_ratio, "max shift as a fraction of width"),
      HAGAN_DOUBLE("aug_cutout", train.aug.cutout_ratio, "cutout side as a fraction of width"),
      HAGAN_DOUBLE("bank_momentum", train.bank_momentum, "feature bank EMA momentum in (0, 1]"),
      Key{"bank_mode", "ema | latest",
          [](const RunConfig& c) { return to_string(c.train.bank_mode); },
          [](RunConfig& c, const std::string& v) { c.train.bank_mode = parse_bank_mode(v); }},
      HAGAN_BOOL("toggle_attnmix", train.toggles.attnmix, "augmentation, mixing and consistency terms"),
      HAGAN_BOOL("toggle_reverse_skip", train.toggles.reverse_skip, "feature bank and generator fusion"),
      HAGAN_BOOL("toggle_pixel_branch", train.toggles.pixel_branch, "pixel-level adversarial/consistency terms"),
      HAGAN_BOOL("toggle_two_phase", train.toggles.two_phase, "warmup phase before augmentation"),
      HAGAN_INT(checkpoint_every, "checkpoint and grid interval in epochs (0: final only)"),
      HAGAN_INT(grid_samples, "images per sample grid"),
      HAGAN_BOOL("log_timing", train.log_timing, "record wall time per step in the metrics log"),
      Key{"data_source", "phantom | dir",
          [](const RunConfig& c) { return c.data.source; },
          [](RunConfig& c, const std::string& v) {
            if (v != "phantom" && v != "dir") throw InvalidArgument("data_source must be phantom or dir");
            c.data.source = v;
          }},
      Key{"data_dir", "image directory when data_source = dir",
          [](const RunConfig& c) { return c.data.directory.string(); },
          [](RunConfig& c, const std::string& v) { c.data.directory = v; }},
      Key{"data_channel_mode", "grayscale | rgb",
          [](const RunConfig& c) { return data::to_string(c.data.channel_mode); },
          [](RunConfig& c, const std::string& v) { c.data.channel_mode = data::parse_channel_mode(v); }},
      Key{"phantom_count", "number of phantom images",
          [](const RunConfig& c) { return std::to_string(c.data.phantom_count); },
          [](RunConfig& c, const std::string& v) { c.data.phantom_count = parse_int("phantom_count", v); }},
      Key{"phantom_seed", "phantom generator seed",
          [](const RunConfig& c) { return std::to_string(c.data.seed); },
          [](RunConfig& c, const std::string& v) { c.data.seed = parse_uint("phantom_seed", v); }},
  };
  return table;
}

#undef HAGAN_INT
#undef HAGAN_DOUBLE
#undef HAGAN_BOOL

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues out;
  std::set<std::string> seen;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw InvalidArgument("config line " + std::to_string(lineno) + ": empty key");
    if (!seen.insert(key).second) throw InvalidArgument("config key '" + key + "' appears twice");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

KeyValues to_key_values(const RunConfig& config) {
  KeyValues out;
  out.emplace_back("schema_version", std::to_string(kConfigSchemaVersion));
  for (const auto& key : keys()) out.emplace_back(key.name, key.get(config));
  return out;
}

void apply_key_values(RunConfig& config, const KeyValues& kv, KeyValues* unknown) {
  for (const auto& [k, v] : kv) {
    if (k == "schema_version") {
      if (parse_int(k, v) != kConfigSchemaVersion) {
        throw InvalidArgument("unsupported config schema_version " + v);
      }
      continue;
    }
    bool found = false;
    for (const auto& key : keys()) {
      if (k == key.name) {
        key.set(config, v);
        found = true;
        break;
      }
    }
    if (!found) {
      if (unknown == nullptr) throw InvalidArgument("unknown config key '" + k + "'");
      unknown->emplace_back(k, v);
    }
  }
  config.train.channels = config.data.channels();
  config.data.resolution = config.train.resolution;
}

std::vector<std::pair<std::string, std::string>> documented_keys() {
  std::vector<std::pair<std::string, std::string>> out;
  out.emplace_back("schema_version", "config format version (currently 1)");
  for (const auto& key : keys()) out.emplace_back(key.name, key.doc);
  return out;
}

std::string to_config_text(const RunConfig& config, const KeyValues& extra) {
  std::string out = "# hagan run configuration\n";
  out += format_key_values(to_key_values(config));
  if (!extra.empty()) {
    out += "# command options\n";
    out += format_key_values(extra);
  }
  return out;
}

RunConfig parse_config_text(const std::string& text, KeyValues* unknown) {
  RunConfig config;
  apply_key_values(config, parse_key_values(text), unknown);
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path, KeyValues* unknown) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), unknown);
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config, const KeyValues& extra) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write config file " + path.string());
  out << to_config_text(config, extra);
}

}  // namespace hagan
