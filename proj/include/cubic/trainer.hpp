#pragma once

// Puzzle pretraining, action fine-tuning / linear probing and sliding-window
// video evaluation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cubic/checkpoint.hpp"
#include "cubic/clip.hpp"
#include "cubic/geometry.hpp"
#include "cubic/network.hpp"
#include "cubic/params.hpp"
#include "cubic/sampler.hpp"

namespace cubic {

enum class PuzzleTask { kSpaceTime, kSpatial, kTemporal };

const char* to_string(PuzzleTask task);
// Accepts "st", "s", "t". Throws ConfigError otherwise.
PuzzleTask parse_puzzle_task(const std::string& name);
// 0.5 for space-time, 1 for spatial-only, 0 for temporal-only.
double mode_prob_spatial(PuzzleTask task);

struct TrainConfig {
  PuzzleTask task = PuzzleTask::kSpaceTime;
  int64_t batch_size = 128;
  float lr = 0.01f;
  float momentum = 0.9f;
  float weight_decay = 0.0f;
  int64_t steps = 1000;
  uint64_t seed = 1;
  bool jitter = true;
  bool channel_replication = true;
  bool rotation_classification = true;
  // Evaluate (and checkpoint) every this many steps; 0 evaluates only at the end.
  int64_t eval_every = 0;
  // Fixed pretext evaluation set size per split.
  int64_t eval_samples = 256;
  // Sampler threads preparing batches ahead of the optimizer.
  int workers = 1;
  // Pins one worker and records wall_ms as 0 so that runs are bit-identical.
  bool deterministic = true;

  SamplerOptions sampler_options() const;
  // Throws ConfigError.
  void validate() const;
};

struct MetricsRecord {
  int64_t step = 0;
  std::string split;
  double loss = 0.0;
  double top1 = 0.0;  // in [0,1]
  double wall_ms = 0.0;
};

inline constexpr const char* kMetricsHeader = "step,split,loss,top1,wall_ms";

std::string format_metrics_row(const MetricsRecord& r);
// Writes the header and rows; `append` keeps existing rows (header only when new).
void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::filesystem::path& path,
                       bool append = false);
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Pretraining

// Batch content depends only on (seed, step, sample index), never on worker
// count or timing.
std::vector<PuzzleSample> make_puzzle_batch(std::span<const VideoClip> clips, const GeometryConfig& geometry,
                                            const SamplerOptions& options, uint64_t seed, int64_t step,
                                            int64_t batch_size);

struct StepResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

// One SGD step on the puzzle loss. Throws ShapeError for an empty batch or
// crops of mismatched geometry, std::out_of_range for labels >= classes.
StepResult pretrain_step(const PuzzleNetwork& net, NetworkParams& params, std::span<const PuzzleSample> batch,
                         const SgdOptions& sgd);

// Eval-mode loss and top-1 over samples, processed in chunks of `chunk`.
StepResult evaluate_puzzles(const PuzzleNetwork& net, const NetworkParams& params,
                            std::span<const PuzzleSample> samples, int64_t chunk = 64);

struct PretrainSetup {
  GeometryConfig geometry;
  BackboneConfig backbone;
  int64_t head_hidden = 64;
  TrainConfig config;
  // Directory for checkpoint.stck and metrics.csv; nothing is written when empty.
  std::filesystem::path out_dir;
  // Continue from this checkpoint (params, momenta, running stats and step).
  std::optional<std::filesystem::path> resume;
};

struct PretrainResult {
  NetworkParams params;
  CheckpointHeader header;
  std::vector<MetricsRecord> metrics;
};

// Trains on puzzles drawn from `train_clips` (labels ignored). Evaluation
// records a "train" row on a fixed sample set of train clips and, when
// `eval_clips` is non-empty, a "test" row on them.
PretrainResult pretrain_run(const PretrainSetup& setup, std::span<const VideoClip> train_clips,
                            std::span<const VideoClip> eval_clips = {});

// ---------------------------------------------------------------------------
// Fine-tuning

struct FinetuneConfig {
  int64_t batch_size = 128;
  float lr = 0.05f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  int64_t steps = 1000;
  uint64_t seed = 1;
  // Train only the classifier head on a frozen backbone.
  bool linear_probe = false;
  // The learning rate drops by 10x once this fraction of steps is done.
  double lr_drop_fraction = 0.6;
  // Batches used to re-estimate the frozen backbone's batch-norm statistics
  // on fine-tuning inputs before a linear probe.
  int64_t calibration_batches = 16;
  int64_t eval_every = 0;
  int workers = 1;
  bool deterministic = true;

  float lr_at(int64_t step) const;
  void validate() const;
};

struct VideoPrediction {
  int label = -1;  // ground truth, -1 when unknown
  int predicted = 0;
  std::vector<double> scores;  // mean softmax over windows
};

// Mean softmax over all sliding windows of the clip; argmax takes the lowest
// index on ties. Throws ShapeError when the clip is shorter than one window.
VideoPrediction evaluate_video(const ActionNetwork& net, const NetworkParams& params, const VideoClip& clip,
                               const GeometryConfig& geometry);

// Elementwise mean of two probability vectors. Throws std::invalid_argument
// when lengths differ or an input does not sum to 1 within 1e-5.
std::vector<double> ensemble_scores(std::span<const double> a, std::span<const double> b);

// Top-1 over predictions with known labels.
double top1_accuracy(std::span<const VideoPrediction> predictions);

struct FinetuneSetup {
  GeometryConfig geometry;
  BackboneConfig backbone;
  int num_classes = 2;
  FinetuneConfig config;
  // Backbone initialization; random (seeded) when absent. Checked against
  // `backbone` by tensor names and shapes.
  std::optional<NetworkParams> pretrained;
  std::filesystem::path out_dir;
};

struct FinetuneResult {
  NetworkParams params;
  std::vector<MetricsRecord> metrics;
  std::vector<VideoPrediction> test_predictions;
  double test_top1 = 0.0;
};

// Parameters at step 0: backbone from `pretrained` (or random), action head
// freshly initialized from the seed.
NetworkParams init_action_params(const FinetuneSetup& setup);

FinetuneResult finetune_run(const FinetuneSetup& setup, std::span<const VideoClip> train_clips,
                            std::span<const VideoClip> test_clips);

std::vector<VideoPrediction> evaluate_videos(const ActionNetwork& net, const NetworkParams& params,
                                             std::span<const VideoClip> clips, const GeometryConfig& geometry);

}  // namespace cubic
