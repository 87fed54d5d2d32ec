#ifndef COGEST_CLI_CONFIG_HPP_
#define COGEST_CLI_CONFIG_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogest/align/alignment.hpp"
#include "cogest/diffusion/schedule.hpp"
#include "cogest/emotion/classifier.hpp"
#include "cogest/metrics/metrics.hpp"
#include "cogest/model/gdm.hpp"

namespace cogest::cli {

/// Everything a command needs besides its verb-specific flags. Loaded from a
/// single JSON document; `--set key.path=value` flags override keys.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string data = "data";
  std::string checkpoints = "checkpoints";
  std::string output = "out";
  int frames = 180;
  int workers = 1;

  int diffusion_steps = 1000;
  bool rescale_betas = true;  // keep terminal noise when steps < 1000
  double eta = 0.0;

  std::string preset = "desk";
  nlohmann::json model = nlohmann::json::object();  // DenoiserConfig overrides
  model::GdmTrainConfig gdm;
  align::AlignConfig align;
  emotion::ClassifierConfig classifier;
  emotion::ClassifierTrainConfig classifier_train;
  emotion::GuidanceConfig guidance;
  metrics::ExtractorConfig extractor;
  bool hands = false;
  std::vector<std::string> metrics{"fgd_raw", "fgd_feature", "sa", "ea", "ec"};

  nlohmann::json to_json() const;
  /// Validates against schema() first; throws UsageError listing violations.
  static RunConfig from_json(const nlohmann::json& j);
  static const nlohmann::json& schema();
  std::string hash() const;

  diffusion::NoiseSchedule schedule() const;
  /// Preset plus overrides; vocab and semantic width filled in by the caller.
  model::DenoiserConfig denoiser() const;
};

/// Defaults, merged with the file (if any), then the overrides. "seed" must
/// come from the file or an override.
RunConfig load_run_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides);

/// "a.b.c=value"; the value is parsed as JSON and falls back to a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// git-describe style version of this build.
std::string version_string();

/// Writes run_manifest.json into `dir`.
void write_run_manifest(const std::filesystem::path& dir, const std::string& command, const RunConfig& cfg,
                        const std::map<std::string, std::string>& checkpoint_hashes, const nlohmann::json& extra = nlohmann::json::object());

}  // namespace cogest::cli

#endif  // COGEST_CLI_CONFIG_HPP_
