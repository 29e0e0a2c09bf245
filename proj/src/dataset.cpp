#include "cubic/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "cubic/errors.hpp"
#include "cubic/rng.hpp"

namespace cubic {

namespace fs = std::filesystem;

std::vector<IndexEntry> read_index(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open index " + path.string());
  std::vector<IndexEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (tab == std::string::npos || tab == 0 || line.find('\t', tab + 1) != std::string::npos) {
      throw FormatError(where + ": expected 'clip_path<TAB>label'");
    }
    IndexEntry e;
    e.path = line.substr(0, tab);
    const std::string label = line.substr(tab + 1);
    try {
      size_t used = 0;
      e.label = std::stoi(label, &used);
      if (used != label.size()) throw std::invalid_argument(label);
    } catch (const std::exception&) {
      throw FormatError(where + ": label '" + label + "' is not an integer");
    }
    if (e.label < 0) throw FormatError(where + ": negative label");
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_index(const std::vector<IndexEntry>& entries, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write index " + path.string());
  for (const IndexEntry& e : entries) out << e.path << '\t' << e.label << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

KeyValues read_key_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  KeyValues kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw FormatError(where + ": expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw FormatError(where + ": empty key");
    if (!kv.emplace(key, trim(line.substr(eq + 1))).second) throw FormatError(where + ": duplicate key '" + key + "'");
  }
  return kv;
}

void write_key_values(const KeyValues& values, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& [k, v] : values) out << k << '=' << v << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

namespace {

const std::string& require_key(const KeyValues& kv, const std::string& key, const fs::path& file) {
  auto it = kv.find(key);
  if (it == kv.end()) throw FormatError(file.string() + ": missing key '" + key + "'");
  return it->second;
}

int parse_positive(const std::string& value, const std::string& what) {
  try {
    size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used == value.size() && v > 0) return v;
  } catch (const std::exception&) {
  }
  throw FormatError(what + ": expected a positive integer, got '" + value + "'");
}

}  // namespace

Dataset load_dataset(const fs::path& root) {
  Dataset d;
  d.root = root;
  const fs::path header = root / "dataset.txt";
  d.header = read_key_values(header);
  d.num_classes = parse_positive(require_key(d.header, "num_classes", header), "num_classes");
  for (int c = 0; c < d.num_classes; ++c) {
    auto it = d.header.find("class." + std::to_string(c));
    d.class_names.push_back(it == d.header.end() ? std::to_string(c) : it->second);
  }
  d.train = read_index(root / require_key(d.header, "train_index", header));
  d.test = read_index(root / require_key(d.header, "test_index", header));
  for (const auto* split : {&d.train, &d.test}) {
    for (const IndexEntry& e : *split) {
      if (e.label >= d.num_classes) {
        throw FormatError(root.string() + ": label " + std::to_string(e.label) + " of " + e.path +
                          " is outside [0, " + std::to_string(d.num_classes) + ")");
      }
    }
  }
  return d;
}

std::vector<VideoClip> load_clips(const Dataset& dataset, const std::vector<IndexEntry>& split) {
  std::vector<VideoClip> clips;
  clips.reserve(split.size());
  for (const IndexEntry& e : split) {
    VideoClip clip = read_clip(dataset.root / e.path);
    if (clip.action_label && *clip.action_label != e.label) {
      throw FormatError(e.path + ": stored label " + std::to_string(*clip.action_label) +
                        " disagrees with index label " + std::to_string(e.label));
    }
    clip.action_label = e.label;
    clips.push_back(std::move(clip));
  }
  return clips;
}

// ---------------------------------------------------------------------------

std::string synthetic_class_name(int label) {
  static constexpr const char* names[kMaxSyntheticClasses] = {
      "move_right", "move_left", "move_down",  "move_up",   "rotate_cw",
      "rotate_ccw", "grow",      "shrink",     "move_down_right", "move_up_left"};
  if (label < 0 || label >= kMaxSyntheticClasses) throw std::out_of_range("synthetic class out of range");
  return names[label];
}

void SyntheticSpec::validate() const {
  if (num_classes < 2 || num_classes > kMaxSyntheticClasses || num_classes % 2 != 0) {
    throw ConfigError("synthetic: num_classes must be even and in [2, " + std::to_string(kMaxSyntheticClasses) + "]");
  }
  if (clips_per_class < 1) throw ConfigError("synthetic: clips_per_class must be >= 1");
  if (frames < 2 || height < 16 || width < 16) throw ConfigError("synthetic: clips need >= 2 frames of >= 16x16");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("synthetic: test_fraction must be in [0,1)");
  if (noise_level < 0.0) throw ConfigError("synthetic: noise_level must be >= 0");
}

namespace {

struct Rgb {
  double r, g, b;
};

Rgb random_color(Rng& rng) {
  return {rng.uniform(20, 235), rng.uniform(20, 235), rng.uniform(20, 235)};
}

enum class ShapeKind { kRectangle, kEllipse, kTriangle };

// Striped shape in its own frame; the stripes and a notch make rotation and
// scaling visible.
struct Shape2d {
  ShapeKind kind;
  double half_w, half_h;
  Rgb color_a, color_b;
  double stripe_angle, stripe_period;

  // Colour at local coordinates, or false when outside.
  bool shade(double u, double v, Rgb& out) const {
    bool inside = false;
    const double nu = u / half_w, nv = v / half_h;
    switch (kind) {
      case ShapeKind::kRectangle:
        inside = std::abs(nu) <= 1.0 && std::abs(nv) <= 1.0;
        break;
      case ShapeKind::kEllipse:
        inside = nu * nu + nv * nv <= 1.0;
        break;
      case ShapeKind::kTriangle:
        inside = nv <= 1.0 && nv >= -1.0 && std::abs(nu) <= (nv + 1.0) / 2.0;
        break;
    }
    if (!inside) return false;
    // Notch in the upper-right quadrant.
    if (nu > 0.35 && nv < -0.35 && nu < 0.75 && nv > -0.75) return false;
    const double s = u * std::cos(stripe_angle) + v * std::sin(stripe_angle);
    out = (static_cast<int64_t>(std::floor(s / stripe_period)) % 2 == 0) ? color_a : color_b;
    return true;
  }
  double radius() const { return std::hypot(half_w, half_h); }
};

struct Placement {
  double cx, cy, angle, scale;
};

struct Actor {
  Shape2d shape;
  Placement start, velocity;  // per-frame change; scale is multiplicative
};

Shape2d random_shape(Rng& rng, double size) {
  Shape2d s;
  s.kind = static_cast<ShapeKind>(rng.uniform_int(0, 2));
  s.half_w = size * rng.uniform(0.7, 1.0);
  s.half_h = size * rng.uniform(0.7, 1.0);
  s.color_a = random_color(rng);
  s.color_b = random_color(rng);
  s.stripe_angle = rng.uniform(0, std::numbers::pi);
  s.stripe_period = rng.uniform(2.0, 3.5);
  return s;
}

Actor make_actor(MotionPair pair, const SyntheticSpec& spec, Rng& rng) {
  const double W = static_cast<double>(spec.width), H = static_cast<double>(spec.height);
  const double steps = static_cast<double>(spec.frames - 1);
  // Speeds are given per 32 frames so that shorter clips still show the motion.
  const double per_frame = 31.0 / steps;
  const double size = std::min(W, H) * rng.uniform(0.12, 0.2);
  Actor a{random_shape(rng, size), {}, {0, 0, 0, 1}};
  a.start.angle = rng.uniform(0, 2 * std::numbers::pi);
  a.start.scale = 1.0;
  a.start.cx = rng.uniform(0, W);
  a.start.cy = rng.uniform(0, H);
  const double speed = rng.uniform(1.2, 2.0) * per_frame;
  switch (pair) {
    case MotionPair::kHorizontal:
      a.velocity.cx = speed;
      break;
    case MotionPair::kVertical:
      a.velocity.cy = speed;
      break;
    case MotionPair::kDiagonal:
      a.velocity.cx = speed * 0.8;
      a.velocity.cy = speed * 0.8;
      break;
    case MotionPair::kRotation:
      a.shape.half_w *= 1.3;
      a.shape.half_h *= 1.3;
      a.velocity.angle = rng.uniform(5.0, 8.0) / steps;
      break;
    case MotionPair::kScale: {
      const double from = rng.uniform(0.4, 0.55), to = rng.uniform(1.5, 1.8);
      a.start.scale = from;
      a.velocity.scale = std::pow(to / from, 1.0 / steps);
      break;
    }
  }
  return a;
}

double wrap(double v, double extent, double margin) {
  const double span = extent + 2 * margin;
  return std::fmod(std::fmod(v + margin, span) + span, span) - margin;
}

// All motion accelerates uniformly from rest, reaching twice the mean speed
// at the end.
Placement unwrapped_at_frame(const Actor& a, int64_t t, double steps) {
  const double s = static_cast<double>(t) * static_cast<double>(t) / steps;
  return {a.start.cx + a.velocity.cx * s, a.start.cy + a.velocity.cy * s, a.start.angle + a.velocity.angle * s,
          a.start.scale * std::pow(a.velocity.scale, s)};
}

// Translating shapes wrap around the frame, leaving it completely before
// re-entering on the other side.
Placement at_frame(const Actor& a, int64_t t, double steps, double width, double height) {
  Placement p = unwrapped_at_frame(a, t, steps);
  const double margin = a.shape.radius() * 1.8;
  p.cx = wrap(p.cx, width, margin);
  p.cy = wrap(p.cy, height, margin);
  return p;
}

// Pixel centre (x, y) in the local frame of a placement.
std::pair<double, double> to_local(const Placement& p, int64_t x, int64_t y) {
  const double dx = (static_cast<double>(x) + 0.5 - p.cx) / p.scale;
  const double dy = (static_cast<double>(y) + 0.5 - p.cy) / p.scale;
  return {dx * std::cos(p.angle) + dy * std::sin(p.angle), -dx * std::sin(p.angle) + dy * std::cos(p.angle)};
}

}  // namespace

VideoClip render_synthetic_clip(const SyntheticSpec& spec, int label, uint64_t clip_seed) {
  spec.validate();
  if (label < 0 || label >= spec.num_classes) throw std::out_of_range("synthetic label out of range");
  const auto pair = static_cast<MotionPair>(label / 2);
  // Both classes of a pair draw from the same stream; the odd one is reversed.
  Rng rng(derive_seed(clip_seed, {static_cast<uint64_t>(label / 2)}));
  const int64_t T = spec.frames, H = spec.height, W = spec.width;

  // Background texture: a sum of plane waves that moves with the class motion.
  struct Wave {
    double fx, fy, phase, amp[3];
  };
  std::vector<Wave> waves(4);
  for (Wave& w : waves) {
    const double freq = rng.uniform(0.15, 0.6), dir = rng.uniform(0, 2 * std::numbers::pi);
    w.fx = freq * std::cos(dir);
    w.fy = freq * std::sin(dir);
    w.phase = rng.uniform(0, 2 * std::numbers::pi);
    for (double& a : w.amp) a = rng.uniform(5, 20);
  }
  const Rgb base = {rng.uniform(70, 180), rng.uniform(70, 180), rng.uniform(70, 180)};
  const Actor scene = make_actor(pair, spec, rng);

  std::vector<Actor> actors;
  const int count = 1 + static_cast<int>(rng.bernoulli(0.5));
  for (int i = 0; i < count; ++i) actors.push_back(make_actor(pair, spec, rng));

  VideoClip clip = VideoClip::blank(T, H, W);
  for (int64_t t = 0; t < T; ++t) {
    const double steps = static_cast<double>(T - 1);
    const Placement view = unwrapped_at_frame(scene, t, steps);
    std::vector<Placement> placed;
    for (const Actor& a : actors) {
      placed.push_back(at_frame(a, t, steps, static_cast<double>(W), static_cast<double>(H)));
    }
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x = 0; x < W; ++x) {
        const auto [bu, bv] = to_local(view, x, y);
        Rgb c = base;
        for (const Wave& w : waves) {
          const double s = std::sin(w.fx * bu + w.fy * bv + w.phase);
          c.r += w.amp[0] * s;
          c.g += w.amp[1] * s;
          c.b += w.amp[2] * s;
        }
        // Later actors are drawn on top.
        for (size_t i = 0; i < actors.size(); ++i) {
          const auto [u, v] = to_local(placed[i], x, y);
          actors[i].shape.shade(u, v, c);
        }
        const double rgb[3] = {c.r, c.g, c.b};
        // Light from the upper left.
        const double light = 45.0 * (0.5 - static_cast<double>(y) / static_cast<double>(H - 1)) +
                             20.0 * (0.5 - static_cast<double>(x) / static_cast<double>(W - 1));
        for (int k = 0; k < 3; ++k) {
          const double v = rgb[k] + light + spec.noise_level * rng.normal();
          clip.at(t, y, x, k) = static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
      }
    }
  }
  if (label % 2 == 1) clip = clip.time_reversed();
  clip.action_label = label;
  return clip;
}

Dataset generate_synthetic_dataset(const SyntheticSpec& spec, const fs::path& root) {
  spec.validate();
  fs::create_directories(root / "clips");
  const int test_per_class = static_cast<int>(std::lround(spec.clips_per_class * spec.test_fraction));
  Dataset d;
  d.root = root;
  d.num_classes = spec.num_classes;
  for (int c = 0; c < spec.num_classes; ++c) {
    d.class_names.push_back(synthetic_class_name(c));
    for (int i = 0; i < spec.clips_per_class; ++i) {
      VideoClip clip = render_synthetic_clip(
          spec, c, derive_seed(spec.seed, {static_cast<uint64_t>(c), static_cast<uint64_t>(i)}));
      char name[64];
      std::snprintf(name, sizeof name, "clips/c%02d_%04d.stcl", c, i);
      clip.clip_id = name;
      write_clip(clip, root / name);
      (i >= spec.clips_per_class - test_per_class ? d.test : d.train).push_back({name, c});
    }
  }
  write_index(d.train, root / "train.txt");
  write_index(d.test, root / "test.txt");
  d.header = {{"format", "cubic-clips-v1"},
              {"generator", "synthetic-moving-shapes"},
              {"num_classes", std::to_string(spec.num_classes)},
              {"clips_per_class", std::to_string(spec.clips_per_class)},
              {"frames", std::to_string(spec.frames)},
              {"height", std::to_string(spec.height)},
              {"width", std::to_string(spec.width)},
              {"seed", std::to_string(spec.seed)},
              {"test_fraction", std::to_string(spec.test_fraction)},
              {"noise_level", std::to_string(spec.noise_level)},
              {"train_index", "train.txt"},
              {"test_index", "test.txt"}};
  for (int c = 0; c < spec.num_classes; ++c) {
    d.header["class." + std::to_string(c)] = d.class_names[static_cast<size_t>(c)];
    d.header["mirror." + std::to_string(c)] = std::to_string(c ^ 1);
  }
  write_key_values(d.header, root / "dataset.txt");
  return d;
}

VideoClip render_watermark_clip(const GeometryConfig& geometry, uint64_t clip_seed) {
  geometry.validate();
  Rng rng(clip_seed);
  const int64_t T = geometry.clip_frames, H = geometry.frame_height, W = geometry.frame_width;
  const int64_t cT = geometry.cell_frames(), cH = geometry.cell_height(), cW = geometry.cell_width();
  VideoClip clip = VideoClip::blank(T, H, W);
  const double offset = rng.uniform(-20, 20);
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x = 0; x < W; ++x) {
        const int64_t gh = y / cH, gw = x / cW, gt = t / cT;
        // Channel codes: red carries the row, green the column, blue the time slot.
        const double code[3] = {60.0 + 120.0 * static_cast<double>(gh), 60.0 + 120.0 * static_cast<double>(gw),
                                40.0 + 50.0 * static_cast<double>(gt)};
        const double ramp = 40.0 * (static_cast<double>(y % cH) / static_cast<double>(cH) - 0.5);
        for (int k = 0; k < 3; ++k) {
          const double v = code[k] + ramp + offset + 4.0 * rng.normal();
          clip.at(t, y, x, k) = static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
      }
    }
  }
  clip.clip_id = "watermark";
  return clip;
}

}  // namespace cubic
