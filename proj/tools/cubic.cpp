// cubic: dataset generation, puzzle pretraining, fine-tuning, evaluation,
// gradient checks and filter export.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime error (I/O,
// corrupt files, shape mismatches), 3 failed gradient check.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cubic/checkpoint.hpp"
#include "cubic/dataset.hpp"
#include "cubic/errors.hpp"
#include "cubic/filters.hpp"
#include "cubic/gradcheck.hpp"
#include "cubic/run_config.hpp"
#include "cubic/trainer.hpp"

namespace fs = std::filesystem;
using namespace cubic;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitCheck = 3;

struct CheckFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string config;
  std::optional<uint64_t> seed;
  std::string preset;
  std::string out;
  std::optional<int> workers;
  bool deterministic = false;
  std::string data;
  std::string checkpoint;
  std::vector<std::string> set;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "key=value config file");
  cmd->add_option("--seed", f.seed, "seed for every random stream");
  cmd->add_option("--preset", f.preset, "parameter bundle")->check(CLI::IsMember({"paper", "desk"}));
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--workers", f.workers, "sampler threads")->check(CLI::PositiveNumber);
  cmd->add_flag("--deterministic", f.deterministic, "single worker, zero wall times, bit-reproducible output");
  cmd->add_option("--data", f.data, "dataset directory");
  cmd->add_option("--checkpoint", f.checkpoint, "input checkpoint");
  cmd->add_option("--set", f.set, "override a config key (key=value), repeatable");
}

RunConfig resolve(const Flags& f) {
  KeyValues file;
  if (!f.config.empty()) {
    try {
      file = read_key_values(f.config);
    } catch (const FormatError& e) {
      throw ConfigError(e.what());
    }
  }
  KeyValues over;
  for (const std::string& s : f.set) {
    const auto [k, v] = split_assignment(s);
    if (!over.emplace(k, v).second) throw ConfigError("key '" + k + "' given twice");
  }
  if (f.seed) over["seed"] = std::to_string(*f.seed);
  if (!f.preset.empty()) over["preset"] = f.preset;
  if (!f.out.empty()) over["out"] = f.out;
  if (f.workers) over["workers"] = std::to_string(*f.workers);
  if (f.deterministic) over["deterministic"] = "true";
  if (!f.data.empty()) over["data"] = f.data;
  if (!f.checkpoint.empty()) over["checkpoint"] = f.checkpoint;
  RunConfig c = resolve_run_config(file, over);
  if (c.pretrain.deterministic) c.pretrain.workers = c.finetune.workers = 1;
  return c;
}

void require(const fs::path& p, const char* key) {
  if (p.empty()) throw ConfigError(std::string("missing required setting '") + key + "'");
}

void print_metrics(const std::vector<MetricsRecord>& rows) {
  for (const MetricsRecord& r : rows) {
    std::printf("step %lld %s loss %.4f top1 %.4f\n", static_cast<long long>(r.step), r.split.c_str(), r.loss,
                r.top1);
  }
}

int cmd_gen_data(const RunConfig& c) {
  require(c.out, "out");
  const Dataset d = generate_synthetic_dataset(c.synthetic, c.out);
  std::printf("wrote %zu train and %zu test clips (%d classes) to %s\n", d.train.size(), d.test.size(), d.num_classes,
              c.out.string().c_str());
  return 0;
}

int cmd_pretrain(const RunConfig& c) {
  require(c.data, "data");
  require(c.out, "out");
  const Dataset d = load_dataset(c.data);
  const std::vector<VideoClip> train = load_clips(d, d.train);
  const std::vector<VideoClip> test = load_clips(d, d.test);
  PretrainSetup s;
  s.geometry = c.geometry;
  s.backbone = c.backbone;
  s.head_hidden = c.head_hidden;
  s.config = c.pretrain;
  s.out_dir = c.out;
  if (!c.resume.empty()) s.resume = c.resume;
  fs::create_directories(c.out);
  write_key_values(c.to_key_values(), c.out / "run.cfg");
  const PretrainResult r = pretrain_run(s, train, test);
  print_metrics(r.metrics);
  std::printf("checkpoint %s\n", (c.out / "checkpoint.stck").string().c_str());
  return 0;
}

int cmd_finetune(const RunConfig& c) {
  require(c.data, "data");
  require(c.out, "out");
  const Dataset d = load_dataset(c.data);
  FinetuneSetup s;
  s.geometry = c.geometry;
  s.backbone = c.backbone;
  s.num_classes = d.num_classes;
  s.config = c.finetune;
  s.out_dir = c.out;
  if (!c.checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(c.checkpoint);
    require_backbone(ck.header, c.backbone);
    s.pretrained = std::move(ck.params);
  }
  const std::vector<VideoClip> train = load_clips(d, d.train);
  const std::vector<VideoClip> test = load_clips(d, d.test);
  fs::create_directories(c.out);
  write_key_values(c.to_key_values(), c.out / "run.cfg");
  const FinetuneResult r = finetune_run(s, train, test);
  print_metrics(r.metrics);
  std::printf("test top1 %.4f (%s backbone, %s)\n", r.test_top1, s.pretrained ? "pretrained" : "random",
              c.finetune.linear_probe ? "linear probe" : "full fine-tune");
  return 0;
}

std::vector<VideoPrediction> predict(const Checkpoint& ck, const std::vector<VideoClip>& clips) {
  if (ck.header.head != HeadKind::kAction) throw FormatError("checkpoint has no action classifier");
  const ActionNetwork net(ck.header.backbone, ck.header.num_classes);
  return evaluate_videos(net, ck.params, clips, ck.header.geometry);
}

int cmd_eval(const RunConfig& c) {
  require(c.data, "data");
  require(c.checkpoint, "checkpoint");
  const Dataset d = load_dataset(c.data);
  const Checkpoint ck = load_checkpoint(c.checkpoint);
  std::optional<Checkpoint> second;
  if (!c.ensemble.empty()) second = load_checkpoint(c.ensemble);
  const std::vector<VideoClip> clips = load_clips(d, c.split == "train" ? d.train : d.test);
  std::vector<VideoPrediction> preds = predict(ck, clips);
  std::printf("%s top1 %.4f\n", c.checkpoint.string().c_str(), top1_accuracy(preds));
  if (second) {
    const std::vector<VideoPrediction> other = predict(*second, clips);
    std::printf("%s top1 %.4f\n", c.ensemble.string().c_str(), top1_accuracy(other));
    for (size_t i = 0; i < preds.size(); ++i) {
      preds[i].scores = ensemble_scores(preds[i].scores, other[i].scores);
      preds[i].predicted =
          static_cast<int>(std::max_element(preds[i].scores.begin(), preds[i].scores.end()) - preds[i].scores.begin());
    }
    std::printf("ensemble top1 %.4f\n", top1_accuracy(preds));
  }
  std::printf("%s split: %zu clips, top1 %.4f\n", c.split.c_str(), preds.size(), top1_accuracy(preds));
  return 0;
}

int cmd_gradcheck(const RunConfig& c) {
  const std::vector<GradCheckReport> reports = gradcheck_suite(c.pretrain.seed, c.gradcheck_seeds, c.gradcheck_samples);
  int failed = 0;
  for (const GradCheckReport& r : reports) {
    std::printf("%-4s %-24s checked %4lld  failed %3lld  max error %.3g%s%s\n", r.passed() ? "ok" : "FAIL",
                r.name.c_str(), static_cast<long long>(r.checked), static_cast<long long>(r.failed), r.max_error,
                r.passed() ? "" : "  worst ", r.passed() ? "" : r.worst.c_str());
    failed += !r.passed();
  }
  std::printf("%zu checks, %d failed\n", reports.size(), failed);
  if (failed > 0) throw CheckFailed(std::to_string(failed) + " gradient checks failed");
  return 0;
}

int cmd_export_filters(const RunConfig& c) {
  require(c.checkpoint, "checkpoint");
  require(c.out, "out");
  const Checkpoint ck = load_checkpoint(c.checkpoint);
  const std::vector<fs::path> files = export_filters(ck.params, c.out, c.export_scale);
  std::printf("wrote %zu filter images and a montage to %s\n", files.size() - 1, c.out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Space-time cubic puzzle pretraining for 3D CNNs"};
  app.require_subcommand(1);
  Flags flags;
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&);
  };
  const Command commands[] = {
      {"gen-data", "write a synthetic moving-shapes dataset", cmd_gen_data},
      {"pretrain", "train the puzzle network on a dataset's clips", cmd_pretrain},
      {"finetune", "fine-tune or linear-probe an action classifier", cmd_finetune},
      {"eval", "sliding-window top-1 of an action checkpoint", cmd_eval},
      {"gradcheck", "finite-difference checks of every layer and the tiny network", cmd_gradcheck},
      {"export-filters", "render first-layer filters as PGM/PPM images", cmd_export_filters},
  };
  std::vector<CLI::App*> subs;
  for (const Command& cmd : commands) {
    subs.push_back(app.add_subcommand(cmd.name, cmd.help));
    add_common(subs.back(), flags);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }
  try {
    for (size_t i = 0; i < subs.size(); ++i) {
      if (subs[i]->parsed()) return commands[i].run(resolve(flags));
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const CheckFailed& e) {
    std::fprintf(stderr, "check failed: %s\n", e.what());
    return kExitCheck;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitRuntime;
}
