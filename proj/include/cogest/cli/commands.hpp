#ifndef COGEST_CLI_COMMANDS_HPP_
#define COGEST_CLI_COMMANDS_HPP_

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cogest/cli/config.hpp"
#include "cogest/data/examples.hpp"

namespace cogest::cli {

namespace fs = std::filesystem;

/// Status lines from long-running commands.
using Reporter = std::function<void(const std::string&)>;

// Checkpoint file names inside RunConfig::checkpoints.
inline constexpr const char* kAlignCkpt = "align.ckpt";
inline constexpr const char* kNoisyClassifierCkpt = "emocls_noisy.ckpt";
inline constexpr const char* kCleanClassifierCkpt = "emocls_clean.ckpt";
inline constexpr const char* kHandsClassifierCkpt = "emocls_hands.ckpt";
inline constexpr const char* kGdmCkpt = "gdm.ckpt";
inline constexpr const char* kExtractorCkpt = "fgd_extractor.ckpt";
inline constexpr const char* kStatsFile = "stats.json";
inline constexpr const char* kVocabFile = "vocab.json";
inline constexpr const char* kTargetsFile = "targets.json";

struct PrepareOptions {
  std::optional<int> synth_count;
  std::optional<fs::path> bvh_dir;
  std::optional<fs::path> manifest;     // replay a synthetic manifest.json
  std::optional<fs::path> repr_config;  // key-value file for BVH conversion
  double gesture_fraction = 0.6;
  int min_frames = 60;
};
struct PrepareResult {
  int written = 0;
  std::vector<std::pair<std::string, std::string>> rejected;  // file, reason
  std::string corpus_hash;
};
/// Writes clips, audio, stats.json, vocab.json and a run manifest into
/// cfg.data. Every rejected BVH file is recorded in rejected.json; the
/// caller decides whether rejections are fatal.
PrepareResult cmd_prepare(const RunConfig& cfg, const PrepareOptions& opt, const Reporter& report = {});

/// Digest over every clip and audio file plus the manifest.
std::string corpus_hash(const fs::path& dir);

enum class Phase { align, emocls, gdm, extractor };
Phase parse_phase(const std::string& s);
std::string to_string(Phase p);

struct TrainOptions {
  Phase phase = Phase::gdm;
  bool resume = false;
  int checkpoint_every = 0;  // gdm only; 0 writes at the end
  int log_every = 50;
};
struct TrainResult {
  fs::path checkpoint;
  std::string checkpoint_hash;
  double final_loss = 0;
  nlohmann::json report;
};
/// Trains one phase on cfg.data, writing the checkpoint and loss_<phase>.csv
/// into cfg.checkpoints. gdm needs the align checkpoint.
TrainResult cmd_train(const RunConfig& cfg, const TrainOptions& opt, const Reporter& report = {});

struct SampleOptions {
  std::optional<fs::path> audio;
  std::optional<std::string> text;        // motion description
  std::optional<std::string> transcript;  // spoken words, semantic condition
  std::optional<int> length;
  std::string name = "sample";
  bool export_bvh = false;

  /// Conditions taken from every clip of a prepared corpus instead.
  std::optional<fs::path> corpus;
  int limit = 0;
  bool use_audio = true;
  bool use_text = true;
  bool use_transcript = true;

  /// Emotion target per item: a class, or a seeded random class per item.
  std::optional<int> emotion;
  bool random_emotion = false;
  bool guide = true;  // false records targets without steering
};
struct SampleResult {
  std::vector<fs::path> clips;
  std::vector<int> targets;
};
/// Writes clips/<name>.{bin,json} (and bvh/<name>.bvh) into cfg.output.
SampleResult cmd_sample(const RunConfig& cfg, const SampleOptions& opt, const Reporter& report = {});

struct EvalOptions {
  fs::path real;
  fs::path generated;
};
/// Writes report.json, report.csv and a run manifest into cfg.output.
metrics::MetricReport cmd_eval(const RunConfig& cfg, const EvalOptions& opt, const Reporter& report = {});

/// Runs fn(i) for i in [0, n) on up to `workers` threads; rethrows the
/// first exception.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

}  // namespace cogest::cli

#endif  // COGEST_CLI_COMMANDS_HPP_
