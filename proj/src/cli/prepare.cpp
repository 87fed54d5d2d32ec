#include <algorithm>
#include <fstream>
#include <mutex>

#include "cogest/audio/wav.hpp"
#include "cogest/core/kvconfig.hpp"
#include "cogest/motion/bvh.hpp"
#include "cogest/motion/clip_io.hpp"
#include "cogest/motion/retarget.hpp"
#include "cogest/synth/corpus.hpp"
#include "common.hpp"

namespace cogest::cli {

namespace {

using namespace detail;

void prepare_synth(const RunConfig& cfg, const PrepareOptions& opt, PrepareResult& res, const Reporter& report) {
  const fs::path dir = cfg.data;
  synth::CorpusManifest m;
  if (opt.manifest) {
    m = synth::CorpusManifest::from_json(read_json(require_file(*opt.manifest, "manifest replay")));
  } else {
    if (*opt.synth_count < 1) throw UsageError("synthetic corpus size must be positive");
    m = synth::gen_dataset(*opt.synth_count, cfg.seed, opt.gesture_fraction);
  }
  fs::create_directories(dir / "clips");
  fs::create_directories(dir / "audio");
  parallel_for(static_cast<int>(m.entries.size()), cfg.workers, [&](int i) {
    const auto& e = m.entries[static_cast<std::size_t>(i)];
    synth::SynthSample s = synth::realize(e);
    s.clip.audio_path = "audio/" + e.id + ".wav";
    audio::write_wav(dir / "audio" / (e.id + ".wav"), s.audio);
    motion::save_clip(dir / "clips" / e.id, s.clip);
  });
  write_json(dir / "manifest.json", m.to_json());
  res.written = static_cast<int>(m.entries.size());
  if (report) report("wrote " + std::to_string(res.written) + " synthetic clips (" + std::to_string(m.hybrid_count()) + " hybrid)");
}

void prepare_bvh(const RunConfig& cfg, const PrepareOptions& opt, PrepareResult& res, const Reporter& report) {
  const fs::path src = *opt.bvh_dir, dir = cfg.data;
  if (!fs::is_directory(src)) throw UsageError("BVH source " + src.string() + " is not a directory");
  motion::ReprConfig repr;
  if (opt.repr_config) repr = motion::ReprConfig::from_kv(KeyValueConfig::load(*opt.repr_config));
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(src)) {
    if (e.path().extension() == ".bvh") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .bvh files in " + src.string());
  fs::create_directories(dir / "clips");
  fs::create_directories(dir / "audio");

  std::mutex m;
  std::vector<std::vector<std::string>> written(files.size());
  std::vector<std::optional<std::string>> reasons(files.size());
  parallel_for(static_cast<int>(files.size()), cfg.workers, [&](int i) {
    const fs::path& f = files[static_cast<std::size_t>(i)];
    try {
      motion::MotionClip clip = motion::prepare_bvh_clip(motion::load_bvh(f), repr);
      if (clip.length() < opt.min_frames) {
        throw DataError(std::to_string(clip.length()) + " frames at " + std::to_string(static_cast<int>(repr.target_fps)) +
                        " fps is below the " + std::to_string(opt.min_frames) + "-frame minimum");
      }
      // optional sidecars: <stem>.json (transcript, text, emotion) and <stem>.wav
      const fs::path side = fs::path(f).replace_extension(".json"), wav_path = fs::path(f).replace_extension(".wav");
      if (fs::exists(side)) {
        const auto j = read_json(side);
        if (j.contains("transcript")) clip.transcript = j["transcript"].get<std::string>();
        if (j.contains("text")) clip.text = j["text"].get<std::string>();
        if (j.contains("emotion")) clip.emotion = j["emotion"].get<int>();
      }
      std::optional<audio::Waveform> wav;
      if (fs::exists(wav_path)) wav = audio::read_wav(wav_path);
      clip.source = motion::ClipSource::gesture;
      const int n = clip.length(), win = cfg.frames;
      for (int start = 0, k = 0; start < n; start += win, ++k) {
        const int len = std::min(win, n - start);
        if (len < opt.min_frames) break;
        motion::MotionClip part = clip;
        part.frames = clip.frames.middleRows(start, len);
        part.mask.assign(clip.mask.begin() + start, clip.mask.begin() + start + len);
        const std::string id = f.stem().string() + "_" + std::to_string(k);
        if (wav) {
          audio::Waveform cut{wav->sample_rate, {}};
          const auto a = static_cast<std::size_t>(start / clip.fps * wav->sample_rate);
          const auto b = std::min(wav->samples.size(), static_cast<std::size_t>((start + len) / clip.fps * wav->sample_rate));
          if (a < b) cut.samples.assign(wav->samples.begin() + static_cast<long>(a), wav->samples.begin() + static_cast<long>(b));
          if (!cut.samples.empty()) {
            audio::write_wav(dir / "audio" / (id + ".wav"), cut);
            part.audio_path = "audio/" + id + ".wav";
          }
        }
        motion::save_clip(dir / "clips" / id, part);
        written[static_cast<std::size_t>(i)].push_back(id);
      }
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(m);
      reasons[static_cast<std::size_t>(i)] = e.what();
    }
  });
  nlohmann::json rejected = nlohmann::json::array();
  for (std::size_t i = 0; i < files.size(); ++i) {
    res.written += static_cast<int>(written[i].size());
    if (reasons[i]) {
      res.rejected.emplace_back(files[i].filename().string(), *reasons[i]);
      rejected.push_back({{"file", files[i].filename().string()}, {"reason", *reasons[i]}});
    }
  }
  write_json(dir / "rejected.json", rejected);
  if (report) report("converted " + std::to_string(files.size() - res.rejected.size()) + " of " + std::to_string(files.size()) + " BVH files");
}

}  // namespace

PrepareResult cmd_prepare(const RunConfig& cfg, const PrepareOptions& opt, const Reporter& report) {
  const int sources = int(opt.synth_count.has_value()) + int(opt.bvh_dir.has_value()) + int(opt.manifest.has_value());
  if (sources != 1) throw UsageError("prepare needs exactly one of a synthetic count, a manifest or a BVH directory");
  if (opt.min_frames < 1 || opt.min_frames > cfg.frames) throw UsageError("minimum clip length must lie in [1, frames]");
  PrepareResult res;
  if (opt.synth_count || opt.manifest) {
    prepare_synth(cfg, opt, res, report);
  } else {
    prepare_bvh(cfg, opt, res, report);
  }
  const fs::path dir = cfg.data;
  if (res.written == 0) throw DataError("no usable clips were written to " + dir.string());

  // stats and vocabulary over the written clips, in file order
  std::vector<fs::path> stems;
  for (const auto& e : fs::directory_iterator(dir / "clips")) {
    if (e.path().extension() == ".bin") stems.push_back(e.path().parent_path() / e.path().stem());
  }
  std::sort(stems.begin(), stems.end());
  data::Standardizer stats;
  text::Vocabulary vocab = data::synth_vocabulary();
  static const text::WhitespaceTokenizer tok;
  for (const auto& s : stems) {
    const motion::MotionClip clip = motion::load_clip(s);
    stats.accumulate(clip.frames, clip.mask);
    for (const auto& field : {clip.text, clip.transcript}) {
      if (!field) continue;
      for (const auto& w : tok.split(*field)) vocab.add(w);
    }
  }
  stats.finalize();
  write_json(dir / kStatsFile, stats.to_json());
  write_json(dir / kVocabFile, vocab.to_json());
  res.corpus_hash = corpus_hash(dir);
  nlohmann::json extra = {{"corpus_hash", res.corpus_hash}, {"clips", res.written}, {"rejected", res.rejected.size()}};
  if (opt.synth_count) extra["synth_count"] = *opt.synth_count;
  if (opt.manifest) extra["replayed_manifest"] = opt.manifest->string();
  write_run_manifest(dir, "prepare", cfg, {}, extra);
  return res;
}

}  // namespace cogest::cli
