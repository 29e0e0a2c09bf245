#include "cubic/checkpoint.hpp"

#include <algorithm>

#include "binary_io.hpp"
#include "cubic/errors.hpp"

namespace cubic {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'C', 'K'};

void write_tensor(detail::ByteWriter& w, const std::string& name, const Tensor& t) {
  w.str(name);
  w.u32(static_cast<uint32_t>(t.rank()));
  for (int64_t e : t.shape()) w.u32(static_cast<uint32_t>(e));
  for (float v : t.data()) w.f32(v);
}

Tensor read_tensor(detail::ByteReader& r, const std::string& where) {
  const uint32_t rank = r.u32();
  if (rank == 0 || rank > 8) throw FormatError(where + ": implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  uint64_t count = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    shape[i] = r.u32();
    if (shape[i] == 0) throw FormatError(where + ": zero extent");
    count *= static_cast<uint64_t>(shape[i]);
  }
  r.need(count * 4);
  std::vector<float> values(count);
  for (float& v : values) v = r.f32();
  return Tensor(std::move(shape), std::move(values));
}

std::string describe(const BackboneConfig& b) {
  std::string s = std::string(to_string(b.variant)) + " stem=" + std::to_string(b.stem_channels) + " stages=(";
  for (size_t i = 0; i < b.stage_channels.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(b.stage_channels[i]) + "x" + std::to_string(b.block_counts[i]);
  }
  return s + ")";
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  const BackboneConfig& b = ck.header.backbone;
  w.u32(static_cast<uint32_t>(b.variant));
  w.u32(static_cast<uint32_t>(b.in_channels));
  w.u32(static_cast<uint32_t>(b.stem_channels));
  for (int64_t v : b.stem_kernel) w.u32(static_cast<uint32_t>(v));
  for (int64_t v : b.stem_stride) w.u32(static_cast<uint32_t>(v));
  w.u8(b.stem_maxpool ? 1 : 0);
  w.u32(static_cast<uint32_t>(b.stage_channels.size()));
  for (size_t i = 0; i < b.stage_channels.size(); ++i) {
    w.u32(static_cast<uint32_t>(b.stage_channels[i]));
    w.u32(static_cast<uint32_t>(b.block_counts[i]));
  }
  const GeometryConfig& g = ck.header.geometry;
  for (int64_t v : {g.clip_frames, g.frame_height, g.frame_width, g.crop_frames, g.crop_height, g.crop_width,
                    g.finetune_frames, g.finetune_size}) {
    w.u32(static_cast<uint32_t>(v));
  }
  w.u32(static_cast<uint32_t>(ck.header.head));
  w.u32(static_cast<uint32_t>(ck.header.num_classes));
  w.u32(static_cast<uint32_t>(ck.header.head_hidden));
  w.u64(ck.header.step);

  const NetworkParams& p = ck.params;
  w.u32(static_cast<uint32_t>(2 * p.names().size() + 3 * p.norm_names().size()));
  for (const std::string& name : p.names()) write_tensor(w, "param/" + name, p.at(name));
  for (const std::string& name : p.names()) write_tensor(w, "momentum/" + name, p.momentum(name));
  for (const std::string& name : p.norm_names()) {
    const RunningStats& s = p.norm_stats(name);
    write_tensor(w, "bn_mean/" + name, s.mean);
    write_tensor(w, "bn_var/" + name, s.var);
    write_tensor(w, "bn_updates/" + name, Tensor({1}, std::vector<float>{static_cast<float>(s.updates)}));
  }
  const auto tmp = path.string() + ".tmp";
  detail::write_file_bytes(tmp, w.buffer());
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string where = "checkpoint " + path.string();
  const std::vector<uint8_t> bytes = detail::read_file_bytes(path.string());
  detail::ByteReader r(bytes, where);
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kMagic)) throw FormatError(where + ": bad magic");
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(where + ": unsupported format version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  BackboneConfig& b = ck.header.backbone;
  const uint32_t variant = r.u32();
  if (variant > static_cast<uint32_t>(BackboneVariant::kResNet18)) {
    throw FormatError(where + ": unknown backbone variant code " + std::to_string(variant));
  }
  b.variant = static_cast<BackboneVariant>(variant);
  b.in_channels = r.u32();
  b.stem_channels = r.u32();
  for (int64_t& v : b.stem_kernel) v = r.u32();
  for (int64_t& v : b.stem_stride) v = r.u32();
  b.stem_maxpool = r.u8() != 0;
  const uint32_t stages = r.u32();
  if (stages == 0 || stages > 16) throw FormatError(where + ": implausible stage count");
  b.stage_channels.resize(stages);
  b.block_counts.resize(stages);
  for (uint32_t i = 0; i < stages; ++i) {
    b.stage_channels[i] = r.u32();
    b.block_counts[i] = r.u32();
  }
  GeometryConfig& g = ck.header.geometry;
  for (int64_t* v : {&g.clip_frames, &g.frame_height, &g.frame_width, &g.crop_frames, &g.crop_height,
                     &g.crop_width, &g.finetune_frames, &g.finetune_size}) {
    *v = r.u32();
  }
  const uint32_t head = r.u32();
  if (head > static_cast<uint32_t>(HeadKind::kAction)) throw FormatError(where + ": unknown head kind");
  ck.header.head = static_cast<HeadKind>(head);
  ck.header.num_classes = r.u32();
  ck.header.head_hidden = r.u32();
  ck.header.step = r.u64();

  const uint32_t records = r.u32();
  struct Pending {
    Tensor mean, var;
    int64_t updates = -1;
  };
  std::vector<std::string> norm_order;
  std::unordered_map<std::string, Pending> pending;
  for (uint32_t i = 0; i < records; ++i) {
    const std::string name = r.str();
    Tensor t = read_tensor(r, where + " record '" + name + "'");
    const auto slash = name.find('/');
    if (slash == std::string::npos) throw FormatError(where + ": record name without kind: " + name);
    const std::string kind = name.substr(0, slash);
    const std::string key = name.substr(slash + 1);
    if (kind == "param") {
      ck.params.add(key, std::move(t));
    } else if (kind == "momentum") {
      if (!ck.params.contains(key) || !ck.params.at(key).same_shape(t)) {
        throw FormatError(where + ": momentum record without matching parameter: " + key);
      }
      ck.params.momentum(key) = std::move(t);
    } else if (kind == "bn_mean" || kind == "bn_var" || kind == "bn_updates") {
      if (!pending.count(key)) norm_order.push_back(key);
      Pending& p = pending[key];
      if (kind == "bn_mean") p.mean = std::move(t);
      if (kind == "bn_var") p.var = std::move(t);
      if (kind == "bn_updates") p.updates = static_cast<int64_t>(t[0]);
    } else {
      throw FormatError(where + ": unknown record kind '" + kind + "'");
    }
  }
  if (r.remaining() != 0) throw FormatError(where + ": trailing bytes after records");
  for (const std::string& key : norm_order) {
    Pending& p = pending[key];
    if (p.mean.empty() || p.var.empty() || p.updates < 0 || !p.mean.same_shape(p.var)) {
      throw FormatError(where + ": incomplete batch-norm statistics for " + key);
    }
    ck.params.add_norm_stats(key, RunningStats{std::move(p.mean), std::move(p.var), p.updates});
  }
  return ck;
}

LoadReport load_into(NetworkParams& target, const NetworkParams& source, const LoadOptions& options) {
  auto skipped = [&](const std::string& name) { return options.skip && options.skip(name); };
  std::vector<std::string> mismatched;
  std::vector<std::string> missing;
  for (const std::string& name : target.names()) {
    if (skipped(name)) continue;
    if (!source.contains(name)) {
      missing.push_back(name);
    } else if (!source.at(name).same_shape(target.at(name))) {
      mismatched.push_back(name + " " + shape_to_string(source.at(name).shape()) + " vs " +
                           shape_to_string(target.at(name).shape()));
    }
  }
  for (const std::string& name : target.norm_names()) {
    if (skipped(name)) continue;
    if (!source.contains_norm_stats(name)) {
      missing.push_back(name + " (batch-norm statistics)");
    } else if (!source.norm_stats(name).mean.same_shape(target.norm_stats(name).mean)) {
      mismatched.push_back(name + " (batch-norm statistics)");
    }
  }
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
    return s;
  };
  if (!mismatched.empty()) throw FormatError("checkpoint shape mismatch: " + join(mismatched));
  if (!missing.empty() && !options.allow_missing) throw FormatError("checkpoint lacks: " + join(missing));

  LoadReport report;
  for (const std::string& name : target.names()) {
    if (skipped(name) || !source.contains(name)) {
      report.kept.push_back(name);
      continue;
    }
    target.at(name) = source.at(name);
    if (options.include_momentum) target.momentum(name) = source.momentum(name);
    report.loaded.push_back(name);
  }
  for (const std::string& name : target.norm_names()) {
    if (skipped(name) || !source.contains_norm_stats(name)) continue;
    target.norm_stats(name) = source.norm_stats(name);
  }
  return report;
}

void require_backbone(const CheckpointHeader& header, const BackboneConfig& expected) {
  if (!(header.backbone == expected)) {
    throw FormatError("checkpoint backbone " + describe(header.backbone) + " does not match expected " +
                      describe(expected));
  }
}

}  // namespace cubic
