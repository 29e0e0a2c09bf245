// Acceptance runner. `acceptance [id...]` runs the named criteria (1-10,
// "ablation"); without arguments it runs all of them. Prints one PASS/FAIL
// line per criterion and exits non-zero when any fails.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "cubic/checkpoint.hpp"
#include "cubic/clip.hpp"
#include "cubic/dataset.hpp"
#include "cubic/gradcheck.hpp"
#include "cubic/network.hpp"
#include "cubic/ops.hpp"
#include "cubic/permutation.hpp"
#include "cubic/run_config.hpp"
#include "cubic/sampler.hpp"
#include "cubic/trainer.hpp"

namespace fs = std::filesystem;
using namespace cubic;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

void note(const std::string& line) {
  std::printf("  %s\n", line.c_str());
  std::fflush(stdout);
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cubic_acceptance_" + std::to_string(getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CUBIC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream(p, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

double chi_square_p(const std::vector<int64_t>& counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  const double expected = total / static_cast<double>(counts.size());
  double stat = 0;
  for (int64_t c : counts) stat += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

double mean(const std::vector<double>& xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

// ---------------------------------------------------------------------------

Outcome gradient_checks() {
  const auto start = Clock::now();
  const std::vector<GradCheckReport> reports = gradcheck_suite(1, 20, 60);
  const double elapsed = seconds_since(start);
  int failed = 0;
  double layer_worst = 0, network_worst = 0;
  int64_t network_min_checked = INT64_MAX;
  for (const GradCheckReport& r : reports) {
    if (!r.passed()) {
      ++failed;
      note("failed: " + r.name + " worst " + r.worst + format(" error %.3g", r.max_error));
    }
    if (r.name.starts_with("network")) {
      network_worst = std::max(network_worst, r.max_error);
      network_min_checked = std::min(network_min_checked, r.checked);
    } else {
      layer_worst = std::max(layer_worst, r.max_error);
    }
  }
  const bool pass = failed == 0 && network_min_checked >= 50 && elapsed <= 120.0;
  return {pass, format("%zu checks over 20 seeds, %d failed; worst layer error %.2e (tol %.0e), worst network "
                       "error %.2e (tol %.0e) over >= %lld parameters; %.1f s",
                       reports.size(), failed, layer_worst, kLayerCheck.tolerance, network_worst,
                       kNetworkCheck.tolerance, static_cast<long long>(network_min_checked), elapsed)};
}

Outcome permutation_codec() {
  const auto start = Clock::now();
  bool ok = permutation_rank({0, 1, 2, 3}) == 0 && permutation_rank({3, 2, 1, 0}) == 23;
  std::set<Permutation4> seen;
  int expected_rank = 0;
  Permutation4 p{0, 1, 2, 3};
  do {
    ok &= permutation_rank(p) == expected_rank;
    ok &= permutation_unrank(expected_rank) == p;
    ok &= inverse_permutation(inverse_permutation(p)) == p;
    seen.insert(p);
    ++expected_rank;
  } while (std::next_permutation(p.begin(), p.end()));
  ok &= seen.size() == 24 && expected_rank == 24;
  for (int id = 0; id < 48; ++id) {
    const PuzzleLabel l = PuzzleLabel::from_class_id(id);
    ok &= l.class_id() == id && l.flipped == (id >= 24) && l.perm_rank == id % 24;
  }
  ok &= PuzzleLabel{7, true}.class_id() == 31;
  const double elapsed = seconds_since(start);
  return {ok && elapsed < 1.0, format("24 permutations and 48 classes round-trip, (0,1,2,3)->0, (3,2,1,0)->23, "
                                      "flip adds 24; %.4f s",
                                      elapsed)};
}

Outcome sampler_correctness() {
  const GeometryConfig g = GeometryConfig::desk();
  SyntheticSpec spec;
  const VideoClip clip = render_synthetic_clip(spec, 0, 11);

  // Jitter offsets.
  Rng rng(1);
  std::vector<int64_t> ct(static_cast<size_t>(g.cell_frames() - g.crop_frames + 1)),
      ch(static_cast<size_t>(g.cell_height() - g.crop_height + 1)),
      cw(static_cast<size_t>(g.cell_width() - g.crop_width + 1));
  bool in_bounds = true;
  for (int i = 0; i < 10000; ++i) {
    const CropOffset o = draw_crop_offset(g, rng, true);
    in_bounds &= o.t >= 0 && o.h >= 0 && o.w >= 0 && o.t < static_cast<int64_t>(ct.size()) &&
                 o.h < static_cast<int64_t>(ch.size()) && o.w < static_cast<int64_t>(cw.size());
    if (!in_bounds) break;
    ++ct[static_cast<size_t>(o.t)];
    ++ch[static_cast<size_t>(o.h)];
    ++cw[static_cast<size_t>(o.w)];
  }
  const double p_min = in_bounds ? std::min({chi_square_p(ct), chi_square_p(ch), chi_square_p(cw)}) : 0.0;

  // Replicated channels.
  bool replicated = true;
  SamplerOptions replicate;
  for (uint64_t seed = 0; seed < 200 && replicated; ++seed) {
    Rng r(seed);
    const PuzzleSample s = make_puzzle_sample(clip, g, replicate, r);
    for (const Tensor& c : s.crops) {
      const size_t plane = c.size() / 3;
      for (size_t k = 0; k < plane; ++k) replicated &= c[k] == c[plane + k] && c[k] == c[2 * plane + k];
    }
  }

  // Inverse permutation with jitter off: restored crops equal canonical crops.
  bool round_trip = true;
  SamplerOptions plain;
  plain.jitter = false;
  plain.channel_replication = false;
  for (uint64_t seed = 0; seed < 500 && round_trip; ++seed) {
    Rng r(seed);
    const PuzzleSample s = make_puzzle_sample(clip, g, plain, r);
    Rng replay(seed);
    replay.uniform01();
    const CellTuple cells = select_tuple_cells(s.mode, replay);
    const auto restored = restore_canonical_order(s);
    for (int i = 0; i < kTupleSize; ++i) {
      Tensor want = extract_crop(clip, cells[static_cast<size_t>(i)], draw_crop_offset(g, replay, false), g);
      for (float& v : want.data()) v -= s.pixel_mean;
      round_trip &= restored[static_cast<size_t>(i)].bit_equal(want);
    }
  }

  // Class frequencies.
  std::vector<int64_t> classes(48);
  Rng r(99);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++classes[static_cast<size_t>(make_puzzle_sample(clip, g, {}, r).label.class_id())];
  double worst = 0;
  for (int64_t c : classes) worst = std::max(worst, std::abs(100.0 * static_cast<double>(c) / n - 100.0 / 48));

  const bool pass = in_bounds && p_min > 0.01 && replicated && round_trip && worst <= 1.5;
  return {pass, format("jitter chi-square min p %.3f over 10000 draws (in bounds: %s); replicated channels "
                       "identical: %s; inverse permutation pixel-exact: %s; worst class frequency deviation "
                       "%.3f points over %d samples",
                       p_min, in_bounds ? "yes" : "no", replicated ? "yes" : "no", round_trip ? "yes" : "no", worst,
                       n)};
}

Outcome weight_sharing() {
  const PuzzleNetwork net(BackboneConfig::make(BackboneVariant::kTiny), 64, 48);
  double worst = 0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    NetworkParams p = net.build(rng);
    for (const std::string& name : p.norm_names()) {
      RunningStats& s = p.norm_stats(name);
      for (float& v : s.mean.data()) v = static_cast<float>(0.1 * rng.normal());
      for (float& v : s.var.data()) v = static_cast<float>(rng.uniform(0.5, 1.5));
      s.updates = 1;
    }
    std::array<Tensor, kTupleSize> crops;
    for (Tensor& c : crops) {
      c = Tensor({3, 3, 4, 20, 20});
      for (float& v : c.data()) v = static_cast<float>(rng.normal());
    }
    const int labels[] = {3, 29, 47};
    PuzzleTape tape;
    const Tensor logits = net.forward(p, crops, NormMode::kEval, &tape);
    const LossResult loss = softmax_cross_entropy(logits, labels);
    Gradients shared, head, separate;
    net.backward(p, tape, loss.grad_logits, shared);
    const auto grad_features = puzzle_head_backward(p, tape.head, loss.grad_logits, head);
    for (int i = 0; i < kTupleSize; ++i) {
      TowerTape t;
      net.backbone().forward(p, crops[static_cast<size_t>(i)], NormMode::kEval, &t);
      net.backbone().backward(p, t, grad_features[static_cast<size_t>(i)], separate);
    }
    for (const std::string& name : net.backbone().param_names()) {
      const Tensor& a = shared.at(name);
      const Tensor& b = separate.at(name);
      double diff = 0, norm = 0;
      for (size_t k = 0; k < a.size(); ++k) {
        diff += (static_cast<double>(a[k]) - b[k]) * (static_cast<double>(a[k]) - b[k]);
        norm += static_cast<double>(b[k]) * b[k];
      }
      if (norm > 0) worst = std::max(worst, std::sqrt(diff / norm));
    }
  }
  return {worst <= 1e-5, format("worst relative error %.2e over 5 seeds, all tower tensors (tol 1e-5)", worst)};
}

Outcome watermark_control() {
  const auto start = Clock::now();
  const GeometryConfig g = GeometryConfig::desk();
  std::vector<VideoClip> clips;
  for (uint64_t i = 0; i < 8; ++i) clips.push_back(render_watermark_clip(g, 100 + i));
  PretrainSetup s;
  s.geometry = g;
  s.backbone = BackboneConfig::make(BackboneVariant::kTiny);
  s.config.batch_size = 32;
  s.config.steps = 1000;
  s.config.eval_every = 100;
  s.config.eval_samples = 256;
  s.config.jitter = false;
  s.config.channel_replication = false;
  s.config.seed = 1;
  const PretrainResult r = pretrain_run(s, clips);
  double best = 0;
  int64_t first = -1;
  for (const MetricsRecord& m : r.metrics) {
    best = std::max(best, m.top1);
    if (first < 0 && m.top1 >= 0.99) first = m.step;
  }
  const double elapsed = seconds_since(start);
  return {first > 0 && elapsed <= 600.0,
          format("pretext train accuracy %.3f best, first >= 0.99 at step %lld of 1000; %.0f s", best,
                 static_cast<long long>(first), elapsed)};
}

Outcome overfit_sanity() {
  const auto start = Clock::now();
  const GeometryConfig g = GeometryConfig::desk();
  SyntheticSpec spec;
  std::vector<VideoClip> clips;
  for (int label = 0; label < 8; ++label) clips.push_back(render_synthetic_clip(spec, label, 500 + label));
  const std::vector<PuzzleSample> samples = make_puzzle_batch(clips, g, {}, 7, 0, 64);
  const PuzzleNetwork net(BackboneConfig::make(BackboneVariant::kTiny), 64, 48);
  Rng rng(3);
  NetworkParams p = net.build(rng);
  const std::span<const PuzzleSample> all(samples);
  double accuracy = 0;
  int64_t reached = -1;
  for (int64_t step = 1; step <= 2000 && reached < 0; ++step) {
    pretrain_step(net, p, all.subspan(static_cast<size_t>((step - 1) % 4) * 16, 16), {});
    if (step % 50 == 0) {
      accuracy = evaluate_puzzles(net, p, all).accuracy;
      if (accuracy >= 0.9) reached = step;
    }
  }
  return {reached > 0, format("train accuracy on 64 fixed samples %.3f, >= 0.9 first at step %lld; %.0f s",
                              accuracy, static_cast<long long>(reached), seconds_since(start))};
}

// ---------------------------------------------------------------------------
// Desk benchmark: synthetic dataset, puzzle pretraining and linear probes.

struct DeskSeed {
  RunConfig config;
  std::vector<VideoClip> train, test;
};

DeskSeed desk_seed(uint64_t seed) {
  DeskSeed d;
  d.config = resolve_run_config({}, {{"seed", std::to_string(seed)}, {"deterministic", "true"}});
  const fs::path dir = scratch_dir("desk_" + std::to_string(seed));
  const Dataset data = generate_synthetic_dataset(d.config.synthetic, dir);
  d.train = load_clips(data, data.train);
  d.test = load_clips(data, data.test);
  fs::remove_all(dir);
  return d;
}

NetworkParams desk_pretrain(const DeskSeed& d, PuzzleTask task, const std::function<void(TrainConfig&)>& tweak = {}) {
  PretrainSetup s;
  s.geometry = d.config.geometry;
  s.backbone = d.config.backbone;
  s.head_hidden = d.config.head_hidden;
  s.config = d.config.pretrain;
  s.config.task = task;
  if (tweak) tweak(s.config);
  const PretrainResult r = pretrain_run(s, d.train, d.test);
  return r.params;
}

FinetuneResult desk_probe(const DeskSeed& d, std::optional<NetworkParams> init) {
  FinetuneSetup s;
  s.geometry = d.config.geometry;
  s.backbone = d.config.backbone;
  s.num_classes = d.config.synthetic.num_classes;
  s.config = d.config.finetune;
  s.config.linear_probe = true;
  s.pretrained = std::move(init);
  return finetune_run(s, d.train, d.test);
}

double ensemble_top1(const FinetuneResult& a, const FinetuneResult& b) {
  std::vector<VideoPrediction> preds = a.test_predictions;
  for (size_t i = 0; i < preds.size(); ++i) {
    preds[i].scores = ensemble_scores(a.test_predictions[i].scores, b.test_predictions[i].scores);
    preds[i].predicted =
        static_cast<int>(std::max_element(preds[i].scores.begin(), preds[i].scores.end()) - preds[i].scores.begin());
  }
  return top1_accuracy(preds);
}

constexpr uint64_t kDeskSeeds[] = {1, 2, 3};

Outcome pretraining_beats_scratch() {
  const auto start = Clock::now();
  std::vector<double> scratch, st;
  for (uint64_t seed : kDeskSeeds) {
    const DeskSeed d = desk_seed(seed);
    scratch.push_back(desk_probe(d, std::nullopt).test_top1);
    st.push_back(desk_probe(d, desk_pretrain(d, PuzzleTask::kSpaceTime)).test_top1);
    note(format("seed %llu: random-init probe %.3f, ST-pretrained probe %.3f (%.0f s)",
                static_cast<unsigned long long>(seed), scratch.back(), st.back(), seconds_since(start)));
  }
  const double gap = 100.0 * (mean(st) - mean(scratch));
  const double elapsed = seconds_since(start);
  return {gap >= 10.0 && elapsed <= 7200.0,
          format("linear probe top-1, 3-seed mean: ST-pretrained %.3f vs random init %.3f, gap %+.1f points "
                 "(need >= +10); %.0f s",
                 mean(st), mean(scratch), gap, elapsed)};
}

Outcome space_time_ordering() {
  const auto start = Clock::now();
  std::vector<double> st, s, t, ens;
  for (uint64_t seed : kDeskSeeds) {
    const DeskSeed d = desk_seed(seed);
    st.push_back(desk_probe(d, desk_pretrain(d, PuzzleTask::kSpaceTime)).test_top1);
    const FinetuneResult sr = desk_probe(d, desk_pretrain(d, PuzzleTask::kSpatial));
    const FinetuneResult tr = desk_probe(d, desk_pretrain(d, PuzzleTask::kTemporal));
    s.push_back(sr.test_top1);
    t.push_back(tr.test_top1);
    ens.push_back(ensemble_top1(sr, tr));
    note(format("seed %llu: ST %.3f, S %.3f, T %.3f, S/T ensemble %.3f (%.0f s)",
                static_cast<unsigned long long>(seed), st.back(), s.back(), t.back(), ens.back(),
                seconds_since(start)));
  }
  const double mst = mean(st), ms = mean(s), mt = mean(t), me = mean(ens);
  const bool pass = mst >= std::max(ms, mt) - 0.01 && me >= std::min(ms, mt);
  const bool strict = mst > me && me > std::max(ms, mt);
  return {pass, format("3-seed means: ST %.3f, S/T ensemble %.3f, S %.3f, T %.3f; strict ordering ST > ensemble > "
                       "single: %s",
                       mst, me, ms, mt, strict ? "yes" : "no")};
}

Outcome ablation_ordering() {
  const auto start = Clock::now();
  struct Variant {
    const char* name;
    bool replication, jitter, rotation;
  };
  const Variant variants[] = {{"no regularization", false, false, false},
                              {"+ channel replication", true, false, false},
                              {"+ random jittering", true, true, false},
                              {"+ rotation with classification", true, true, true}};
  std::vector<std::vector<double>> acc(4);
  for (uint64_t seed : kDeskSeeds) {
    const DeskSeed d = desk_seed(seed);
    std::string line = format("seed %llu:", static_cast<unsigned long long>(seed));
    for (size_t v = 0; v < 4; ++v) {
      const NetworkParams p = desk_pretrain(d, PuzzleTask::kSpaceTime, [&](TrainConfig& c) {
        c.channel_replication = variants[v].replication;
        c.jitter = variants[v].jitter;
        c.rotation_classification = variants[v].rotation;
      });
      acc[v].push_back(desk_probe(d, p).test_top1);
      line += format(" %.3f", acc[v].back());
    }
    note(line + format(" (%.0f s)", seconds_since(start)));
  }
  std::string detail = "3-seed means:";
  for (size_t v = 0; v < 4; ++v) detail += format(" %s %.3f;", variants[v].name, mean(acc[v]));
  const double gain = 100.0 * (mean(acc[3]) - mean(acc[0]));
  return {gain >= 3.0, detail + format(" full minus none %+.1f points (need >= +3)", gain)};
}

// ---------------------------------------------------------------------------

Outcome deterministic_runs() {
  const fs::path dir = scratch_dir("determinism");
  const std::string small = " --set synth.num_classes=4 --set synth.clips_per_class=4 --set steps=20 "
                            "--set batch_size=8 --set eval_every=10 --set eval_samples=32";
  bool ok = run_cli("gen-data --seed 4 --out " + quoted(dir / "data") + small) == 0;
  for (const char* out : {"a", "b"}) {
    ok &= run_cli("pretrain --deterministic --seed 4 --data " + quoted(dir / "data") + " --out " +
                  quoted(dir / out) + small) == 0;
  }
  const bool ck = ok && read_bytes(dir / "a" / "checkpoint.stck") == read_bytes(dir / "b" / "checkpoint.stck");
  const bool csv = ok && read_bytes(dir / "a" / "metrics.csv") == read_bytes(dir / "b" / "metrics.csv");
  fs::remove_all(dir);
  return {ok && ck && csv, format("two --deterministic pretrain runs: commands ok %s, checkpoints identical %s, "
                                  "metrics CSVs identical %s",
                                  ok ? "yes" : "no", ck ? "yes" : "no", csv ? "yes" : "no")};
}

Outcome format_round_trips() {
  const fs::path dir = scratch_dir("formats");
  SyntheticSpec spec;
  VideoClip clip = render_synthetic_clip(spec, 3, 17);
  write_clip(clip, dir / "a.stcl");
  const VideoClip back = read_clip(dir / "a.stcl");
  write_clip(back, dir / "b.stcl");
  const bool clip_ok = back.pixels == clip.pixels && back.frames == clip.frames && back.height == clip.height &&
                       back.width == clip.width && back.action_label == clip.action_label &&
                       read_bytes(dir / "a.stcl") == read_bytes(dir / "b.stcl");

  PretrainSetup s;
  s.geometry = GeometryConfig::desk();
  s.backbone = BackboneConfig::make(BackboneVariant::kTiny);
  s.config.steps = 2;
  s.config.batch_size = 4;
  s.config.eval_samples = 8;
  s.out_dir = dir / "run";
  const PretrainResult r = pretrain_run(s, std::vector<VideoClip>{clip});
  const fs::path ck = dir / "run" / "checkpoint.stck";
  const Checkpoint loaded = load_checkpoint(ck);
  save_checkpoint(loaded, dir / "again.stck");
  const bool ck_ok = loaded.params.bit_equal(r.params) && loaded.header == r.header &&
                     read_bytes(ck) == read_bytes(dir / "again.stck");

  // Corrupted headers: the CLI reports them as runtime errors (exit 2).
  std::vector<int> codes;
  for (size_t offset : {0u, 4u, 8u}) {
    std::vector<char> bytes = read_bytes(ck);
    bytes[offset] ^= 0x5a;
    write_bytes(dir / "bad.stck", bytes);
    codes.push_back(run_cli("export-filters --checkpoint " + quoted(dir / "bad.stck") + " --out " +
                            quoted(dir / "filters")));
  }
  const fs::path data = dir / "data";
  run_cli("gen-data --out " + quoted(data) +
          " --set synth.num_classes=2 --set synth.clips_per_class=2 --set synth.test_fraction=0.5");
  const Dataset d = load_dataset(data);
  std::vector<char> bytes = read_bytes(data / d.train[0].path);
  bytes[1] ^= 0x5a;
  write_bytes(data / d.train[0].path, bytes);
  codes.push_back(run_cli("pretrain --data " + quoted(data) + " --out " + quoted(dir / "p") + " --set steps=1"));
  const bool codes_ok = std::all_of(codes.begin(), codes.end(), [](int c) { return c == 2; });
  fs::remove_all(dir);
  std::string list;
  for (int c : codes) list += (list.empty() ? "" : ",") + std::to_string(c);
  return {clip_ok && ck_ok && codes_ok,
          format("clip round trip bit-exact %s, checkpoint round trip bit-exact %s, corrupted headers exit codes "
                 "[%s] (expected 2)",
                 clip_ok ? "yes" : "no", ck_ok ? "yes" : "no", list.c_str())};
}

struct Criterion {
  const char* id;
  const char* title;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {"1", "gradient checks", gradient_checks},
    {"2", "permutation codec", permutation_codec},
    {"3", "sampler correctness", sampler_correctness},
    {"4", "weight sharing", weight_sharing},
    {"5", "watermark positive control", watermark_control},
    {"6", "overfit sanity", overfit_sanity},
    {"7", "pretraining beats random init", pretraining_beats_scratch},
    {"8", "space-time vs single-dimension puzzles", space_time_ordering},
    {"9", "determinism", deterministic_runs},
    {"10", "format round trips", format_round_trips},
    {"ablation", "regularization ablation ordering", ablation_ordering},
};

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> wanted(argv + 1, argv + argc);
  for (const std::string& w : wanted) {
    if (std::none_of(std::begin(kCriteria), std::end(kCriteria), [&](const Criterion& c) { return w == c.id; })) {
      std::fprintf(stderr, "unknown criterion '%s'\n", w.c_str());
      return 2;
    }
  }
  int failed = 0;
  for (const Criterion& c : kCriteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %s (%s): %s: %s\n", c.id, c.title, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  fs::remove_all(fs::temp_directory_path() / ("cubic_acceptance_" + std::to_string(getpid())));
  return failed == 0 ? 0 : 1;
}
