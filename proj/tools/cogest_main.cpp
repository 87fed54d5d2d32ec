#include <iostream>

#include <CLI11.hpp>

#include "cogest/cli/commands.hpp"
#include "cogest/core/log.hpp"

using namespace cogest;
using namespace cogest::cli;

namespace {

struct Common {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> data, checkpoints, output;
  std::optional<int> workers;
  std::vector<std::string> sets;
  bool quiet = false;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config, "JSON run config");
    app->add_option("--seed", seed, "global seed (overrides config)");
    app->add_option("--data", data, "prepared corpus directory");
    app->add_option("--checkpoints", checkpoints, "checkpoint directory");
    app->add_option("-o,--output", output, "output directory");
    app->add_option("--workers", workers, "threads for data preparation")->check(CLI::Range(1, 256));
    app->add_option("--set", sets, "override a config key, e.g. --set gdm.steps=500");
    app->add_flag("-q,--quiet", quiet, "only print errors");
  }

  RunConfig load() const {
    std::vector<std::string> o;
    if (seed) o.push_back("seed=" + std::to_string(*seed));
    if (data) o.push_back("paths.data=" + nlohmann::json(*data).dump());
    if (checkpoints) o.push_back("paths.checkpoints=" + nlohmann::json(*checkpoints).dump());
    if (output) o.push_back("paths.output=" + nlohmann::json(*output).dump());
    if (workers) o.push_back("workers=" + std::to_string(*workers));
    o.insert(o.end(), sets.begin(), sets.end());
    return load_run_config(config ? std::optional<std::filesystem::path>(*config) : std::nullopt, o);
  }

  Reporter reporter() const {
    if (quiet) return {};
    return [](const std::string& s) { std::cout << s << std::endl; };
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cogest: speech- and text-driven gesture diffusion"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  Common common;

  auto* prepare = app.add_subcommand("prepare", "build a corpus from synthetic specs or BVH files");
  PrepareOptions popt;
  std::optional<std::string> bvh_dir, repr, replay;
  prepare->add_option("--synth", popt.synth_count, "number of synthetic clips");
  prepare->add_option("--bvh", bvh_dir, "directory of .bvh files");
  prepare->add_option("--manifest", replay, "regenerate the synthetic corpus listed in a manifest.json");
  prepare->add_option("--repr", repr, "key-value conversion settings for BVH input");
  prepare->add_option("--gesture-fraction", popt.gesture_fraction, "share of gesture-only synthetic clips")->check(CLI::Range(0.0, 1.0));
  prepare->add_option("--min-frames", popt.min_frames, "shortest accepted clip at 20 fps");
  common.attach(prepare);

  auto* train = app.add_subcommand("train", "train one phase: align, emocls, gdm or extractor");
  std::string phase;
  TrainOptions topt;
  train->add_option("phase", phase, "align | emocls | gdm | extractor")->required();
  train->add_flag("--resume", topt.resume, "continue gdm training from its checkpoint");
  train->add_option("--checkpoint-every", topt.checkpoint_every, "gdm steps between checkpoints");
  train->add_option("--log-every", topt.log_every, "steps between progress lines");
  common.attach(train);

  auto* sample = app.add_subcommand("sample", "generate gestures");
  SampleOptions sopt;
  std::optional<std::string> audio, corpus, emotion;
  sample->add_option("--audio", audio, "16-bit PCM mono WAV");
  sample->add_option("--text", sopt.text, "motion description");
  sample->add_option("--transcript", sopt.transcript, "spoken words for semantic conditioning");
  sample->add_option("--length", sopt.length, "frames at 20 fps; longer than one window uses windowed generation");
  sample->add_option("--emotion", emotion, "target emotion 0-7, or 'random' per item");
  sample->add_flag("!--no-guidance", sopt.guide, "record emotion targets without steering");
  sample->add_option("--name", sopt.name, "output clip name");
  sample->add_flag("--export-bvh", sopt.export_bvh, "also write BVH files");
  sample->add_option("--corpus", corpus, "condition on every clip of a prepared corpus");
  sample->add_option("--limit", sopt.limit, "corpus clips to use (0 = all)");
  sample->add_flag("!--no-audio", sopt.use_audio, "corpus mode: drop audio");
  sample->add_flag("!--no-text", sopt.use_text, "corpus mode: drop motion descriptions");
  sample->add_flag("!--no-transcript", sopt.use_transcript, "corpus mode: drop semantic conditioning");
  common.attach(sample);

  auto* eval = app.add_subcommand("eval", "score generated clips against real ones");
  std::string real, generated;
  std::vector<std::string> metric_list;
  eval->add_option("--real", real, "real corpus")->required();
  eval->add_option("--generated", generated, "generated corpus")->required();
  eval->add_option("--metrics", metric_list, "fgd_raw fgd_feature sa ea ec hands")->delimiter(',');
  common.attach(eval);

  auto* schema = app.add_subcommand("schema", "print the JSON schema of the run config or the metric report");
  std::string schema_kind;
  schema->add_option("kind", schema_kind, "config | report")->required()->check(CLI::IsMember({"config", "report"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorKind::usage);
  }

  if (*schema) {
    std::cout << (schema_kind == "config" ? RunConfig::schema() : metrics::MetricReport::schema()).dump(2) << std::endl;
    return 0;
  }

  try {
    if (!metric_list.empty()) common.sets.push_back("metrics=" + nlohmann::json(metric_list).dump());
    const RunConfig cfg = common.load();
    if (common.quiet) set_log_sink([](LogLevel l, const std::string& s) {
      if (l == LogLevel::error) std::cerr << s << std::endl;
    });
    const Reporter rep = common.reporter();
    if (*prepare) {
      if (bvh_dir) popt.bvh_dir = *bvh_dir;
      if (repr) popt.repr_config = *repr;
      if (replay) popt.manifest = *replay;
      const PrepareResult r = cmd_prepare(cfg, popt, rep);
      if (rep) rep("corpus hash " + r.corpus_hash);
      if (!r.rejected.empty()) {
        std::cerr << r.rejected.size() << " file(s) rejected:\n";
        for (const auto& [file, reason] : r.rejected) std::cerr << "  " << file << ": " << reason << "\n";
        return static_cast<int>(ErrorKind::data);
      }
    } else if (*train) {
      topt.phase = parse_phase(phase);
      const TrainResult r = cmd_train(cfg, topt, rep);
      if (rep) rep("wrote " + r.checkpoint.string() + " (" + r.checkpoint_hash + ")");
    } else if (*sample) {
      if (audio) sopt.audio = *audio;
      if (corpus) sopt.corpus = *corpus;
      if (emotion) {
        if (*emotion == "random") {
          sopt.random_emotion = true;
        } else {
          try {
            sopt.emotion = std::stoi(*emotion);
          } catch (const std::exception&) {
            throw UsageError("--emotion takes 0-7 or 'random'");
          }
        }
      }
      cmd_sample(cfg, sopt, rep);
    } else if (*eval) {
      const metrics::MetricReport r = cmd_eval(cfg, {real, generated}, rep);
      if (!rep) std::cout << r.to_json().dump(1) << std::endl;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return static_cast<int>(ErrorKind::usage);
  }
  return 0;
}
