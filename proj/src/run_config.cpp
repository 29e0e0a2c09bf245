#include "cubic/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "cubic/errors.hpp"

namespace cubic {

namespace {

std::string bad_value(const std::string& key, const std::string& value, const char* expected) {
  return "config key '" + key + "': '" + value + "' is not " + expected;
}

int64_t parse_int(const std::string& key, const std::string& v) {
  int64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) throw ConfigError(bad_value(key, v, "an integer"));
  return out;
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  uint64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) throw ConfigError(bad_value(key, v, "an unsigned integer"));
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(bad_value(key, v, "a number"));
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(bad_value(key, v, "a boolean"));
}

std::vector<int64_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<int64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(key, item));
  if (out.empty()) throw ConfigError(bad_value(key, v, "a comma-separated integer list"));
  return out;
}

int parse_small(const std::string& key, const std::string& v) {
  const int64_t x = parse_int(key, v);
  if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(bad_value(key, v, "a 32-bit integer"));
  return static_cast<int>(x);
}

std::string join(const std::vector<int64_t>& xs) {
  std::string s;
  for (size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

std::string fmt(bool b) { return b ? "true" : "false"; }

struct Field {
  std::function<void(RunConfig&, const std::string& key, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define INT_FIELD(KEY, MEMBER) \
  {KEY, {[](RunConfig& c, const std::string& k, const std::string& v) { c.MEMBER = parse_int(k, v); }, \
         [](const RunConfig& c) { return std::to_string(c.MEMBER); }}}
#define SMALL_FIELD(KEY, MEMBER) \
  {KEY, {[](RunConfig& c, const std::string& k, const std::string& v) { c.MEMBER = parse_small(k, v); }, \
         [](const RunConfig& c) { return std::to_string(c.MEMBER); }}}
#define FLOAT_FIELD(KEY, MEMBER) \
  {KEY, {[](RunConfig& c, const std::string& k, const std::string& v) { \
           c.MEMBER = static_cast<decltype(c.MEMBER)>(parse_double(k, v)); }, \
         [](const RunConfig& c) { return fmt(static_cast<double>(c.MEMBER)); }}}
#define BOOL_FIELD(KEY, MEMBER) \
  {KEY, {[](RunConfig& c, const std::string& k, const std::string& v) { c.MEMBER = parse_bool(k, v); }, \
         [](const RunConfig& c) { return fmt(c.MEMBER); }}}
#define PATH_FIELD(KEY, MEMBER) \
  {KEY, {[](RunConfig& c, const std::string&, const std::string& v) { c.MEMBER = v; }, \
         [](const RunConfig& c) { return c.MEMBER.string(); }}}

const std::map<std::string, Field>& schema() {
  static const std::map<std::string, Field> fields = {
      {"preset", {[](RunConfig& c, const std::string&, const std::string& v) {
                    if (v != c.preset) throw ConfigError("preset '" + v + "' cannot be changed after resolution");
                  },
                  [](const RunConfig& c) { return c.preset; }}},
      INT_FIELD("clip_frames", geometry.clip_frames),
      INT_FIELD("frame_height", geometry.frame_height),
      INT_FIELD("frame_width", geometry.frame_width),
      INT_FIELD("crop_frames", geometry.crop_frames),
      INT_FIELD("crop_height", geometry.crop_height),
      INT_FIELD("crop_width", geometry.crop_width),
      INT_FIELD("finetune_frames", geometry.finetune_frames),
      INT_FIELD("finetune_size", geometry.finetune_size),
      {"backbone", {[](RunConfig& c, const std::string&, const std::string& v) {
                      c.backbone = BackboneConfig::make(parse_backbone_variant(v));
                    },
                    [](const RunConfig& c) { return std::string(to_string(c.backbone.variant)); }}},
      INT_FIELD("stem_channels", backbone.stem_channels),
      {"stage_channels", {[](RunConfig& c, const std::string& k, const std::string& v) {
                            c.backbone.stage_channels = parse_list(k, v);
                          },
                          [](const RunConfig& c) { return join(c.backbone.stage_channels); }}},
      {"block_counts", {[](RunConfig& c, const std::string& k, const std::string& v) {
                          c.backbone.block_counts = parse_list(k, v);
                        },
                        [](const RunConfig& c) { return join(c.backbone.block_counts); }}},
      INT_FIELD("head_hidden", head_hidden),
      {"seed", {[](RunConfig& c, const std::string& k, const std::string& v) {
                  const uint64_t s = parse_u64(k, v);
                  c.pretrain.seed = c.finetune.seed = c.synthetic.seed = s;
                },
                [](const RunConfig& c) { return std::to_string(c.pretrain.seed); }}},
      {"workers", {[](RunConfig& c, const std::string& k, const std::string& v) {
                     c.pretrain.workers = c.finetune.workers = parse_small(k, v);
                   },
                   [](const RunConfig& c) { return std::to_string(c.pretrain.workers); }}},
      {"deterministic", {[](RunConfig& c, const std::string& k, const std::string& v) {
                           c.pretrain.deterministic = c.finetune.deterministic = parse_bool(k, v);
                         },
                         [](const RunConfig& c) { return fmt(c.pretrain.deterministic); }}},
      {"task", {[](RunConfig& c, const std::string&, const std::string& v) { c.pretrain.task = parse_puzzle_task(v); },
                [](const RunConfig& c) { return std::string(to_string(c.pretrain.task)); }}},
      INT_FIELD("batch_size", pretrain.batch_size),
      FLOAT_FIELD("lr", pretrain.lr),
      FLOAT_FIELD("momentum", pretrain.momentum),
      FLOAT_FIELD("weight_decay", pretrain.weight_decay),
      INT_FIELD("steps", pretrain.steps),
      BOOL_FIELD("jitter", pretrain.jitter),
      BOOL_FIELD("channel_replication", pretrain.channel_replication),
      BOOL_FIELD("rotation_classification", pretrain.rotation_classification),
      INT_FIELD("eval_every", pretrain.eval_every),
      INT_FIELD("eval_samples", pretrain.eval_samples),
      INT_FIELD("finetune.batch_size", finetune.batch_size),
      FLOAT_FIELD("finetune.lr", finetune.lr),
      FLOAT_FIELD("finetune.momentum", finetune.momentum),
      FLOAT_FIELD("finetune.weight_decay", finetune.weight_decay),
      INT_FIELD("finetune.steps", finetune.steps),
      BOOL_FIELD("finetune.linear_probe", finetune.linear_probe),
      FLOAT_FIELD("finetune.lr_drop_fraction", finetune.lr_drop_fraction),
      INT_FIELD("finetune.calibration_batches", finetune.calibration_batches),
      INT_FIELD("finetune.eval_every", finetune.eval_every),
      SMALL_FIELD("synth.num_classes", synthetic.num_classes),
      SMALL_FIELD("synth.clips_per_class", synthetic.clips_per_class),
      FLOAT_FIELD("synth.test_fraction", synthetic.test_fraction),
      FLOAT_FIELD("synth.noise_level", synthetic.noise_level),
      PATH_FIELD("data", data),
      PATH_FIELD("out", out),
      PATH_FIELD("checkpoint", checkpoint),
      PATH_FIELD("resume", resume),
      PATH_FIELD("ensemble", ensemble),
      {"split", {[](RunConfig& c, const std::string& k, const std::string& v) {
                   if (v != "train" && v != "test") throw ConfigError(bad_value(k, v, "train or test"));
                   c.split = v;
                 },
                 [](const RunConfig& c) { return c.split; }}},
      SMALL_FIELD("gradcheck.seeds", gradcheck_seeds),
      SMALL_FIELD("gradcheck.samples", gradcheck_samples),
      SMALL_FIELD("export.scale", export_scale),
  };
  return fields;
}

#undef INT_FIELD
#undef SMALL_FIELD
#undef FLOAT_FIELD
#undef BOOL_FIELD
#undef PATH_FIELD

}  // namespace

RunConfig RunConfig::from_preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "desk") {
    c.geometry = GeometryConfig::desk();
    c.backbone = BackboneConfig::make(BackboneVariant::kTiny);
    c.head_hidden = 64;
    c.pretrain.batch_size = 32;
    c.pretrain.steps = 1000;
    // Frozen-feature probes need a much larger step than full fine-tuning.
    c.finetune.linear_probe = true;
    c.finetune.lr = 1.0f;
    c.finetune.batch_size = 32;
    c.finetune.steps = 400;
  } else if (name == "paper") {
    c.geometry = GeometryConfig::paper();
    c.backbone = BackboneConfig::make(BackboneVariant::kResNet18);
    c.head_hidden = 512;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected paper or desk)");
  }
  c.pretrain.deterministic = c.finetune.deterministic = false;
  c.synthetic.frames = c.geometry.clip_frames;
  c.synthetic.height = c.geometry.frame_height;
  c.synthetic.width = c.geometry.frame_width;
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = schema().find(key);
  if (it == schema().end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(*this, key, value);
  synthetic.frames = geometry.clip_frames;
  synthetic.height = geometry.frame_height;
  synthetic.width = geometry.frame_width;
}

void RunConfig::apply(const KeyValues& values) {
  if (const auto it = values.find("backbone"); it != values.end()) set(it->first, it->second);
  for (const auto& [k, v] : values) {
    if (k != "backbone") set(k, v);
  }
}

void RunConfig::validate() const {
  geometry.validate();
  backbone.validate();
  pretrain.validate();
  finetune.validate();
  synthetic.validate();
  if (head_hidden < 1) throw ConfigError("head_hidden must be >= 1");
  const Dims3 m = backbone.minimum_input();
  auto fits = [&](int64_t t, int64_t h, int64_t w) { return t >= m[0] && h >= m[1] && w >= m[2]; };
  if (!fits(geometry.crop_frames, geometry.crop_height, geometry.crop_width)) {
    throw ConfigError("puzzle crops are smaller than the backbone's minimum input");
  }
  if (!fits(geometry.finetune_frames, geometry.finetune_size, geometry.finetune_size)) {
    throw ConfigError("fine-tuning windows are smaller than the backbone's minimum input");
  }
  if (geometry.finetune_frames > geometry.clip_frames) {
    throw ConfigError("finetune_frames exceeds clip_frames");
  }
  if (gradcheck_seeds < 1 || gradcheck_samples < 1) throw ConfigError("gradcheck.seeds and gradcheck.samples must be >= 1");
  if (export_scale < 1 || export_scale > 64) throw ConfigError("export.scale must be in [1, 64]");
}

KeyValues RunConfig::to_key_values() const {
  KeyValues out;
  for (const auto& [k, f] : schema()) out[k] = f.get(*this);
  return out;
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys;
  for (const auto& entry : schema()) keys.push_back(entry.first);
  return keys;
}

RunConfig resolve_run_config(const KeyValues& file, const KeyValues& overrides) {
  std::string preset = "desk";
  if (const auto it = file.find("preset"); it != file.end()) preset = it->second;
  if (const auto it = overrides.find("preset"); it != overrides.end()) preset = it->second;
  RunConfig c = RunConfig::from_preset(preset);
  KeyValues f = file, o = overrides;
  f.erase("preset");
  o.erase("preset");
  c.apply(f);
  c.apply(o);
  c.validate();
  return c;
}

std::pair<std::string, std::string> split_assignment(const std::string& text) {
  const size_t eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("expected key=value, got '" + text + "'");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

}  // namespace cubic
