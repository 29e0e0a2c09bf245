#include "cubic/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <future>
#include <sstream>

#include "cubic/augment.hpp"
#include "cubic/errors.hpp"

namespace cubic {

namespace fs = std::filesystem;

namespace {

// Seed streams for the independent random sequences of a run.
enum Stream : uint64_t { kInitStream = 11, kTrainStream = 12, kEvalTrainStream = 13, kEvalTestStream = 14,
                         kCalibrationStream = 15 };

// Produces make(step) for consecutive steps, running up to `workers` of them
// ahead on background threads. Results never depend on the worker count.
template <class T>
class Prefetcher {
 public:
  Prefetcher(std::function<T(int64_t)> make, int64_t first, int64_t last, int workers)
      : make_(std::move(make)), next_(first), last_(last), workers_(std::max(1, workers)) {}

  T next() {
    if (workers_ == 1) return make_(next_++);
    while (static_cast<int>(queue_.size()) < workers_ && next_ < last_) {
      queue_.push_back(std::async(std::launch::async, make_, next_++));
    }
    T value = queue_.front().get();
    queue_.pop_front();
    if (next_ < last_) queue_.push_back(std::async(std::launch::async, make_, next_++));
    return value;
  }

 private:
  std::function<T(int64_t)> make_;
  int64_t next_;
  int64_t last_;
  int workers_;
  std::deque<std::future<T>> queue_;
};

// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts, const char* what) {
  if (parts.empty()) throw ShapeError(std::string(what) + ": empty batch");
  Shape shape{static_cast<int64_t>(parts.size())};
  shape.insert(shape.end(), parts[0].shape().begin(), parts[0].shape().end());
  Tensor out(shape);
  const size_t n = parts[0].size();
  for (size_t i = 0; i < parts.size(); ++i) {
    if (!parts[i].same_shape(parts[0])) {
      throw ShapeError(std::string(what) + ": sample " + std::to_string(i) + " has shape " +
                       shape_to_string(parts[i].shape()) + ", expected " + shape_to_string(parts[0].shape()));
    }
    std::copy(parts[i].data().begin(), parts[i].data().end(), out.raw() + i * n);
  }
  return out;
}

std::array<Tensor, kTupleSize> stack_crops(std::span<const PuzzleSample> batch) {
  std::array<Tensor, kTupleSize> out;
  std::vector<Tensor> slot(batch.size());
  for (int i = 0; i < kTupleSize; ++i) {
    for (size_t n = 0; n < batch.size(); ++n) slot[n] = batch[n].crops[static_cast<size_t>(i)];
    out[static_cast<size_t>(i)] = stack(slot, "puzzle batch");
  }
  return out;
}

std::vector<int> puzzle_labels(std::span<const PuzzleSample> batch, int64_t classes) {
  std::vector<int> labels;
  for (const PuzzleSample& s : batch) {
    const int id = s.label.class_id();
    if (id >= classes) {
      throw std::out_of_range("puzzle label " + std::to_string(id) + " >= class count " + std::to_string(classes));
    }
    labels.push_back(id);
  }
  return labels;
}

int64_t count_correct(const Tensor& logits, std::span<const int> labels) {
  const std::vector<int> pred = argmax_rows(logits);
  int64_t correct = 0;
  for (size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  return correct;
}

void check_clip_geometry(std::span<const VideoClip> clips, const GeometryConfig& g) {
  for (const VideoClip& c : clips) {
    if (c.frames != g.clip_frames || c.height != g.frame_height || c.width != g.frame_width) {
      throw ShapeError("clip " + c.clip_id + " is " + std::to_string(c.frames) + "x" + std::to_string(c.height) +
                       "x" + std::to_string(c.width) + ", geometry expects " + to_string(g));
    }
  }
}

class Stopwatch {
 public:
  explicit Stopwatch(bool frozen) : frozen_(frozen), start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    if (frozen_) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  bool frozen_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

const char* to_string(PuzzleTask task) {
  switch (task) {
    case PuzzleTask::kSpaceTime:
      return "st";
    case PuzzleTask::kSpatial:
      return "s";
    case PuzzleTask::kTemporal:
      return "t";
  }
  return "?";
}

PuzzleTask parse_puzzle_task(const std::string& name) {
  if (name == "st") return PuzzleTask::kSpaceTime;
  if (name == "s") return PuzzleTask::kSpatial;
  if (name == "t") return PuzzleTask::kTemporal;
  throw ConfigError("unknown puzzle task '" + name + "' (expected st, s or t)");
}

double mode_prob_spatial(PuzzleTask task) {
  switch (task) {
    case PuzzleTask::kSpaceTime:
      return 0.5;
    case PuzzleTask::kSpatial:
      return 1.0;
    case PuzzleTask::kTemporal:
      return 0.0;
  }
  return 0.5;
}

SamplerOptions TrainConfig::sampler_options() const {
  SamplerOptions o;
  o.mode_prob_spatial = mode_prob_spatial(task);
  o.jitter = jitter;
  o.channel_replication = channel_replication;
  o.rotation_classification = rotation_classification;
  return o;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr >= 0.0f)) throw ConfigError("lr must be >= 0");
  if (!(momentum >= 0.0f && momentum < 1.0f)) throw ConfigError("momentum must be in [0,1)");
  if (!(weight_decay >= 0.0f)) throw ConfigError("weight_decay must be >= 0");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
  if (eval_samples < 1) throw ConfigError("eval_samples must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

std::string format_metrics_row(const MetricsRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%s,%.9g,%.9g,%lld", static_cast<long long>(r.step), r.split.c_str(), r.loss,
                r.top1, static_cast<long long>(std::llround(r.wall_ms)));
  return buf;
}

void write_metrics_csv(const std::vector<MetricsRecord>& records, const fs::path& path, bool append) {
  const bool fresh = !append || !fs::exists(path);
  std::ofstream out(path, fresh ? std::ios::trunc : std::ios::app);
  if (!out) throw std::runtime_error("cannot write metrics " + path.string());
  if (fresh) out << kMetricsHeader << '\n';
  for (const MetricsRecord& r : records) out << format_metrics_row(r) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<MetricsRecord> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open metrics " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw FormatError(path.string() + ": bad metrics header");
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string step, split, loss, top1, wall;
    if (!std::getline(ss, step, ',') || !std::getline(ss, split, ',') || !std::getline(ss, loss, ',') ||
        !std::getline(ss, top1, ',') || !std::getline(ss, wall)) {
      throw FormatError(path.string() + ": malformed row '" + line + "'");
    }
    out.push_back({std::stoll(step), split, std::stod(loss), std::stod(top1), std::stod(wall)});
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<PuzzleSample> make_puzzle_batch(std::span<const VideoClip> clips, const GeometryConfig& geometry,
                                            const SamplerOptions& options, uint64_t seed, int64_t step,
                                            int64_t batch_size) {
  if (clips.empty()) throw std::invalid_argument("puzzle batch: no clips");
  std::vector<PuzzleSample> batch;
  batch.reserve(static_cast<size_t>(batch_size));
  for (int64_t i = 0; i < batch_size; ++i) {
    Rng rng(derive_seed(seed, {static_cast<uint64_t>(step), static_cast<uint64_t>(i)}));
    const auto c = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(clips.size()) - 1));
    batch.push_back(make_puzzle_sample(clips[c], geometry, options, rng));
  }
  return batch;
}

StepResult pretrain_step(const PuzzleNetwork& net, NetworkParams& params, std::span<const PuzzleSample> batch,
                         const SgdOptions& sgd) {
  if (batch.empty()) throw ShapeError("pretrain_step: empty batch");
  const std::array<Tensor, kTupleSize> crops = stack_crops(batch);
  const std::vector<int> labels = puzzle_labels(batch, net.classes());
  PuzzleTape tape;
  const Tensor logits = net.forward(params, crops, NormMode::kTrain, &tape);
  const LossResult loss = softmax_cross_entropy(logits, labels);
  Gradients grads;
  net.backward(params, tape, loss.grad_logits, grads);
  commit_norm_stats(params, tape.tower);
  sgd_step(params, grads, sgd);
  return {loss.loss, static_cast<double>(count_correct(logits, labels)) / static_cast<double>(batch.size())};
}

StepResult evaluate_puzzles(const PuzzleNetwork& net, const NetworkParams& params,
                            std::span<const PuzzleSample> samples, int64_t chunk) {
  if (samples.empty()) throw ShapeError("evaluate_puzzles: no samples");
  double loss = 0.0;
  int64_t correct = 0;
  for (size_t begin = 0; begin < samples.size(); begin += static_cast<size_t>(chunk)) {
    const auto part = samples.subspan(begin, std::min(static_cast<size_t>(chunk), samples.size() - begin));
    const std::vector<int> labels = puzzle_labels(part, net.classes());
    const Tensor logits = net.forward(params, stack_crops(part), NormMode::kEval, nullptr);
    loss += softmax_cross_entropy(logits, labels).loss * static_cast<double>(part.size());
    correct += count_correct(logits, labels);
  }
  const auto n = static_cast<double>(samples.size());
  return {loss / n, static_cast<double>(correct) / n};
}

PretrainResult pretrain_run(const PretrainSetup& setup, std::span<const VideoClip> train_clips,
                            std::span<const VideoClip> eval_clips) {
  const TrainConfig& cfg = setup.config;
  cfg.validate();
  setup.geometry.validate();
  if (train_clips.empty()) throw std::invalid_argument("pretrain: no training clips");
  check_clip_geometry(train_clips, setup.geometry);
  check_clip_geometry(eval_clips, setup.geometry);
  const SamplerOptions options = cfg.sampler_options();
  const PuzzleNetwork net(setup.backbone, setup.head_hidden, options.num_classes());

  PretrainResult result;
  result.header = {setup.backbone, setup.geometry, HeadKind::kPuzzle, net.classes(), setup.head_hidden, 0};
  {
    Rng init(derive_seed(cfg.seed, {kInitStream}));
    result.params = net.build(init);
  }
  if (setup.resume) {
    Checkpoint ck = load_checkpoint(*setup.resume);
    require_backbone(ck.header, setup.backbone);
    CheckpointHeader expected = result.header;
    expected.step = ck.header.step;
    if (!(ck.header == expected)) {
      throw FormatError("checkpoint " + setup.resume->string() +
                        " was written for a different geometry, head or class count");
    }
    load_into(result.params, ck.params, {});
    result.header.step = ck.header.step;
  }

  const std::vector<PuzzleSample> eval_train = make_puzzle_batch(
      train_clips, setup.geometry, options, derive_seed(cfg.seed, {kEvalTrainStream}), 0, cfg.eval_samples);
  std::vector<PuzzleSample> eval_test;
  if (!eval_clips.empty()) {
    eval_test = make_puzzle_batch(eval_clips, setup.geometry, options, derive_seed(cfg.seed, {kEvalTestStream}), 0,
                                  cfg.eval_samples);
  }

  const bool write = !setup.out_dir.empty();
  if (write) {
    fs::create_directories(setup.out_dir);
    write_metrics_csv({}, setup.out_dir / "metrics.csv", setup.resume.has_value());
  }
  const Stopwatch clock(cfg.deterministic);
  const uint64_t batch_seed = derive_seed(cfg.seed, {kTrainStream});
  const int64_t first = static_cast<int64_t>(result.header.step);
  Prefetcher<std::vector<PuzzleSample>> batches(
      [&](int64_t step) {
        return make_puzzle_batch(train_clips, setup.geometry, options, batch_seed, step, cfg.batch_size);
      },
      first, cfg.steps, cfg.deterministic ? 1 : cfg.workers);
  const SgdOptions sgd{cfg.lr, cfg.momentum, cfg.weight_decay};

  for (int64_t step = first; step < cfg.steps; ++step) {
    const std::vector<PuzzleSample> batch = batches.next();
    pretrain_step(net, result.params, batch, sgd);
    const int64_t done = step + 1;
    result.header.step = static_cast<uint64_t>(done);
    if ((cfg.eval_every > 0 && done % cfg.eval_every == 0) || done == cfg.steps) {
      std::vector<MetricsRecord> rows;
      const StepResult tr = evaluate_puzzles(net, result.params, eval_train);
      rows.push_back({done, "train", tr.loss, tr.accuracy, clock.ms()});
      if (!eval_test.empty()) {
        const StepResult te = evaluate_puzzles(net, result.params, eval_test);
        rows.push_back({done, "test", te.loss, te.accuracy, clock.ms()});
      }
      if (write) {
        write_metrics_csv(rows, setup.out_dir / "metrics.csv", true);
        save_checkpoint({result.header, result.params}, setup.out_dir / "checkpoint.stck");
      }
      result.metrics.insert(result.metrics.end(), rows.begin(), rows.end());
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

float FinetuneConfig::lr_at(int64_t step) const {
  return static_cast<double>(step) < lr_drop_fraction * static_cast<double>(steps) ? lr : lr / 10.0f;
}

void FinetuneConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr >= 0.0f)) throw ConfigError("lr must be >= 0");
  if (!(momentum >= 0.0f && momentum < 1.0f)) throw ConfigError("momentum must be in [0,1)");
  if (!(weight_decay >= 0.0f)) throw ConfigError("weight_decay must be >= 0");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (!(lr_drop_fraction >= 0.0 && lr_drop_fraction <= 1.0)) throw ConfigError("lr_drop_fraction must be in [0,1]");
  if (calibration_batches < 1) throw ConfigError("calibration_batches must be >= 1");
  if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

VideoPrediction evaluate_video(const ActionNetwork& net, const NetworkParams& params, const VideoClip& clip,
                               const GeometryConfig& geometry) {
  const std::vector<Tensor> windows = sliding_window_clips(clip, geometry);
  const Tensor probs = softmax(net.forward(params, stack(windows, "sliding windows"), NormMode::kEval, nullptr));
  const int64_t K = probs.dim(1);
  VideoPrediction p;
  p.label = clip.action_label.value_or(-1);
  p.scores.assign(static_cast<size_t>(K), 0.0);
  for (size_t w = 0; w < windows.size(); ++w) {
    for (int64_t k = 0; k < K; ++k) p.scores[static_cast<size_t>(k)] += probs[w * static_cast<size_t>(K) + static_cast<size_t>(k)];
  }
  for (double& s : p.scores) s /= static_cast<double>(windows.size());
  p.predicted = static_cast<int>(std::max_element(p.scores.begin(), p.scores.end()) - p.scores.begin());
  return p;
}

std::vector<double> ensemble_scores(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("ensemble_scores: lengths " + std::to_string(a.size()) + " and " +
                                std::to_string(b.size()) + " differ");
  }
  for (auto v : {a, b}) {
    double s = 0.0;
    for (double x : v) s += x;
    if (std::abs(s - 1.0) > 1e-5) throw std::invalid_argument("ensemble_scores: input does not sum to 1");
  }
  std::vector<double> out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = 0.5 * (a[i] + b[i]);
  return out;
}

double top1_accuracy(std::span<const VideoPrediction> predictions) {
  int64_t n = 0, correct = 0;
  for (const VideoPrediction& p : predictions) {
    if (p.label < 0) continue;
    ++n;
    correct += p.predicted == p.label;
  }
  return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
}

std::vector<VideoPrediction> evaluate_videos(const ActionNetwork& net, const NetworkParams& params,
                                             std::span<const VideoClip> clips, const GeometryConfig& geometry) {
  std::vector<VideoPrediction> out;
  out.reserve(clips.size());
  for (const VideoClip& c : clips) out.push_back(evaluate_video(net, params, c, geometry));
  return out;
}

NetworkParams init_action_params(const FinetuneSetup& setup) {
  const ActionNetwork net(setup.backbone, setup.num_classes);
  Rng init(derive_seed(setup.config.seed, {kInitStream}));
  NetworkParams params = net.build(init);
  if (setup.pretrained) {
    LoadOptions opts;
    opts.include_momentum = false;
    opts.skip = [](const std::string& name) { return is_action_head_param(name); };
    load_into(params, *setup.pretrained, opts);
  }
  return params;
}

namespace {

struct FinetuneBatch {
  Tensor clips;
  std::vector<int> labels;
};

FinetuneBatch make_finetune_batch(std::span<const VideoClip> clips, const GeometryConfig& geometry, uint64_t seed,
                                  int64_t step, int64_t batch_size) {
  std::vector<Tensor> parts;
  FinetuneBatch b;
  for (int64_t i = 0; i < batch_size; ++i) {
    Rng rng(derive_seed(seed, {static_cast<uint64_t>(step), static_cast<uint64_t>(i)}));
    const auto c = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(clips.size()) - 1));
    parts.push_back(finetune_sample(clips[c], geometry, rng));
    b.labels.push_back(*clips[c].action_label);
  }
  b.clips = stack(parts, "fine-tune batch");
  return b;
}

// Replaces the running statistics by the average batch statistics over
// `batches` fine-tuning batches (train-mode passes with momentum 1/(k+1)).
void calibrate_norm_stats(const ActionNetwork& net, NetworkParams& params, std::span<const VideoClip> clips,
                          const GeometryConfig& geometry, const FinetuneConfig& cfg) {
  const uint64_t seed = derive_seed(cfg.seed, {kCalibrationStream});
  for (int64_t k = 0; k < cfg.calibration_batches; ++k) {
    const FinetuneBatch b = make_finetune_batch(clips, geometry, seed, k, cfg.batch_size);
    ActionTape tape;
    net.forward(params, b.clips, NormMode::kTrain, &tape, 1.0f / static_cast<float>(k + 1));
    commit_norm_stats(params, tape.tower);
  }
}

MetricsRecord video_metrics(int64_t step, const std::string& split, std::span<const VideoPrediction> preds,
                            double wall_ms) {
  double loss = 0.0;
  for (const VideoPrediction& p : preds) {
    loss -= std::log(std::max(p.scores[static_cast<size_t>(p.label)], 1e-12));
  }
  return {step, split, preds.empty() ? 0.0 : loss / static_cast<double>(preds.size()), top1_accuracy(preds), wall_ms};
}

}  // namespace

FinetuneResult finetune_run(const FinetuneSetup& setup, std::span<const VideoClip> train_clips,
                            std::span<const VideoClip> test_clips) {
  const FinetuneConfig& cfg = setup.config;
  cfg.validate();
  setup.geometry.validate();
  if (train_clips.empty()) throw std::invalid_argument("finetune: no training clips");
  for (auto split : {train_clips, test_clips}) {
    for (const VideoClip& c : split) {
      if (!c.action_label || *c.action_label < 0 || *c.action_label >= setup.num_classes) {
        throw std::invalid_argument("finetune: clip " + c.clip_id + " lacks a label in [0, " +
                                    std::to_string(setup.num_classes) + ")");
      }
      if (c.frames < setup.geometry.finetune_frames) {
        throw ShapeError("finetune: clip " + c.clip_id + " is shorter than one window");
      }
    }
  }
  const ActionNetwork net(setup.backbone, setup.num_classes);
  FinetuneResult result;
  result.params = init_action_params(setup);

  std::vector<std::string> frozen;
  if (cfg.linear_probe) {
    for (const std::string& name : result.params.names()) {
      if (!is_action_head_param(name)) frozen.push_back(name);
    }
    calibrate_norm_stats(net, result.params, train_clips, setup.geometry, cfg);
  }

  const bool write = !setup.out_dir.empty();
  if (write) {
    fs::create_directories(setup.out_dir);
    write_metrics_csv({}, setup.out_dir / "metrics.csv");
  }
  const Stopwatch clock(cfg.deterministic);
  const uint64_t batch_seed = derive_seed(cfg.seed, {kTrainStream});
  Prefetcher<FinetuneBatch> batches(
      [&](int64_t step) { return make_finetune_batch(train_clips, setup.geometry, batch_seed, step, cfg.batch_size); },
      0, cfg.steps, cfg.deterministic ? 1 : cfg.workers);
  const NormMode mode = cfg.linear_probe ? NormMode::kEval : NormMode::kTrain;

  for (int64_t step = 0; step < cfg.steps; ++step) {
    const FinetuneBatch b = batches.next();
    ActionTape tape;
    const Tensor logits = net.forward(result.params, b.clips, mode, &tape);
    const LossResult loss = softmax_cross_entropy(logits, b.labels);
    Gradients grads;
    net.backward(result.params, tape, loss.grad_logits, grads, cfg.linear_probe);
    if (mode == NormMode::kTrain) commit_norm_stats(result.params, tape.tower);
    sgd_step(result.params, grads, {cfg.lr_at(step), cfg.momentum, cfg.weight_decay}, frozen);
    const int64_t done = step + 1;
    if (!test_clips.empty() && ((cfg.eval_every > 0 && done % cfg.eval_every == 0) || done == cfg.steps)) {
      result.test_predictions = evaluate_videos(net, result.params, test_clips, setup.geometry);
      MetricsRecord row = video_metrics(done, "test", result.test_predictions, clock.ms());
      result.test_top1 = row.top1;
      if (write) write_metrics_csv({row}, setup.out_dir / "metrics.csv", true);
      result.metrics.push_back(row);
    }
  }
  if (!test_clips.empty() && cfg.steps == 0) {
    result.test_predictions = evaluate_videos(net, result.params, test_clips, setup.geometry);
    result.test_top1 = top1_accuracy(result.test_predictions);
  }
  if (write) {
    const CheckpointHeader header{setup.backbone, setup.geometry, HeadKind::kAction, setup.num_classes, 0,
                                  static_cast<uint64_t>(cfg.steps)};
    save_checkpoint({header, result.params}, setup.out_dir / "finetune.stck");
  }
  return result;
}

}  // namespace cubic
