// SPDX-License-Identifier: Apache-2.0
#include "avjoint/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "binio.hpp"

namespace avjoint {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& v, const char* expect) {
  throw InvalidConfig("config key '" + key + "': cannot parse '" + v + "' as " + expect);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) bad_value(key, v, "a number");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) bad_value(key, v, "a non-negative integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(std::uint64_t v) { return std::to_string(v); }

std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_u64(key, trim(item)));
  if (out.empty()) bad_value(key, v, "a comma-separated list");
  return out;
}

struct Entry {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

using Table = std::vector<std::pair<std::string, Entry>>;

#define AVJ_DOUBLE(KEY, FIELD) \
  {KEY, {[](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_double(k, v); }, \
         [](const RunConfig& c) { return fmt(static_cast<double>(c.FIELD)); }}}
#define AVJ_SIZE(KEY, FIELD) \
  {KEY, {[](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_u64(k, v); }, \
         [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.FIELD)); }}}
#define AVJ_INT(KEY, FIELD) \
  {KEY, {[](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = static_cast<int>(to_u64(k, v)); }, \
         [](const RunConfig& c) { return std::to_string(c.FIELD); }}}
#define AVJ_BOOL(KEY, FIELD) \
  {KEY, {[](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_bool(k, v); }, \
         [](const RunConfig& c) { return fmt(static_cast<bool>(c.FIELD)); }}}
#define AVJ_ENUM(KEY, FIELD, PARSE) \
  {KEY, {[](RunConfig& c, const std::string&, const std::string& v) { c.FIELD = PARSE(v); }, \
         [](const RunConfig& c) { return std::string(to_string(c.FIELD)); }}}

const Table& table() {
  using namespace avjoint::dsp;
  using namespace avjoint::data;
  using namespace avjoint::model;
  using namespace avjoint::train;
  static const Table t = {
      AVJ_INT("stft.sample_rate", features.stft.sample_rate),
      AVJ_DOUBLE("stft.window_ms", features.stft.window_ms),
      AVJ_DOUBLE("stft.hop_ms", features.stft.hop_ms),
      {"stft.window",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "hann") c.features.stft.window = WindowFn::Hann;
          else if (v == "rectangular") c.features.stft.window = WindowFn::Rectangular;
          else bad_value(k, v, "hann|rectangular");
        },
        [](const RunConfig& c) {
          return std::string(c.features.stft.window == WindowFn::Hann ? "hann" : "rectangular");
        }}},
      AVJ_ENUM("features.kind", features.kind, parse_feature_kind),
      AVJ_DOUBLE("features.log_floor", features.log_floor),
      AVJ_SIZE("features.mel_bins", features.mel_bins),
      AVJ_SIZE("features.wavelet_bins", features.wavelet_bins),
      AVJ_DOUBLE("features.wavelet_fmin", features.wavelet_fmin),
      AVJ_DOUBLE("augment.crop_scale_lo", train.augment.crop_scale_lo),
      AVJ_DOUBLE("augment.crop_scale_hi", train.augment.crop_scale_hi),
      AVJ_DOUBLE("augment.hflip_prob", train.augment.hflip_prob),
      AVJ_DOUBLE("augment.jitter_strength", train.augment.jitter_strength),
      AVJ_BOOL("augment.enabled", train.augment.enabled),
      AVJ_ENUM("model.mode", model.mode, parse_system_mode),
      AVJ_BOOL("ae.residual_shortcut", model.ae.residual_shortcut),
      AVJ_BOOL("ae.input_concat", model.ae.input_concat),
      AVJ_SIZE("ae.fc1", model.ae.fc1),
      AVJ_SIZE("ae.fc2", model.ae.fc2),
      AVJ_DOUBLE("ae.dropout", model.ae.dropout),
      {"ve.channels",
       {[](RunConfig& c, const std::string& k, const std::string& v) { c.model.ve.channels = to_list(k, v); },
        [](const RunConfig& c) { return fmt_list(c.model.ve.channels); }}},
      AVJ_SIZE("ve.image_size", model.ve.image_size),
      {"ve.weights",
       {[](RunConfig& c, const std::string&, const std::string& v) { c.model.ve.weights_path = v; },
        [](const RunConfig& c) { return c.model.ve.weights_path.string(); }}},
      AVJ_SIZE("ve.pretrain_epochs", train.ve_pretrain_epochs),
      AVJ_SIZE("sc.hidden", model.sc.hidden),
      AVJ_DOUBLE("sc.dropout", model.sc.dropout),
      AVJ_SIZE("sc.n_classes", model.sc.n_classes),
      AVJ_ENUM("train.strategy", train.strategy, parse_strategy),
      AVJ_ENUM("train.input_kind", train.input_kind, parse_input_kind),
      AVJ_ENUM("train.ae_mode", train.ae_mode, parse_ae_mode),
      AVJ_SIZE("train.batch_size", train.batch_size),
      AVJ_SIZE("train.max_epochs", train.max_epochs),
      AVJ_DOUBLE("train.lr_max", train.lr_max),
      AVJ_DOUBLE("train.lr_min", train.lr_min),
      AVJ_DOUBLE("train.momentum", train.momentum),
      AVJ_DOUBLE("train.restart_t0", train.restart_t0),
      AVJ_DOUBLE("train.restart_mult", train.restart_mult),
      AVJ_SIZE("train.patience", train.patience),
      AVJ_SIZE("train.seed", train.seed),
      AVJ_BOOL("train.log_wall_ms", train.log_wall_ms),
      AVJ_INT("data.video_fps", data.video_fps),
      {"data.feature_dir",
       {[](RunConfig& c, const std::string&, const std::string& v) { c.data.feature_dir = v; },
        [](const RunConfig& c) { return c.data.feature_dir.string(); }}},
      AVJ_SIZE("data.workers", data.workers),
      AVJ_SIZE("synth.n_classes", synth.n_classes),
      AVJ_SIZE("synth.clips_per_class", synth.clips_per_class),
      AVJ_DOUBLE("synth.clip_seconds", synth.clip_seconds),
      AVJ_SIZE("synth.image_size", synth.image_size),
      AVJ_INT("synth.sample_rate", synth.sample_rate),
      AVJ_INT("synth.video_fps", synth.video_fps),
      AVJ_DOUBLE("synth.snr_db", synth.snr_db),
      AVJ_SIZE("synth.tones_per_class", synth.tones_per_class),
      AVJ_DOUBLE("synth.image_noise", synth.image_noise),
      AVJ_DOUBLE("synth.test_fraction", synth.test_fraction),
      AVJ_ENUM("synth.confusion_mode", synth.confusion_mode, parse_confusion_mode),
      AVJ_DOUBLE("split.val_fraction", val_fraction),
  };
  return t;
}

#undef AVJ_DOUBLE
#undef AVJ_SIZE
#undef AVJ_INT
#undef AVJ_BOOL
#undef AVJ_ENUM

const Entry& lookup(const std::string& key) {
  for (const auto& [k, e] : table())
    if (k == key) return e;
  throw InvalidConfig("unknown config key '" + key + "'");
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [k, e] : table()) out.push_back(k);
    return out;
  }();
  return keys;
}

void config_set(RunConfig& cfg, const std::string& key, const std::string& value) {
  lookup(key).set(cfg, key, trim(value));
  cfg.explicit_keys.insert(key);
}

std::string config_get(const RunConfig& cfg, const std::string& key) { return lookup(key).get(cfg); }

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidConfig(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    try {
      config_set(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const InvalidConfig& e) {
      throw InvalidConfig(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  apply_config_text(cfg, binio::read_file(path), path.string());
}

std::string dump_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, e] : table()) out += k + " = " + e.get(cfg) + "\n";
  return out;
}

void RunConfig::finalize() {
  model.ae.in_bins = features.bins();
  model.ae.in_channels = 2;
}

void RunConfig::validate() const {
  features.stft.validate();
  model.ae.validate();
  model.ve.validate();
  train.validate();
  synth.validate();
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw InvalidConfig("split.val_fraction must lie in (0, 1)");
  if (data.video_fps < 1) throw InvalidConfig("data.video_fps must be >= 1");
}

}  // namespace avjoint
