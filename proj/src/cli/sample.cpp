#include <algorithm>
#include <cmath>

#include "cogest/audio/wav.hpp"
#include "cogest/motion/bvh.hpp"
#include "cogest/motion/clip_io.hpp"
#include "cogest/nn/checkpoint.hpp"
#include "common.hpp"

namespace cogest::cli {

namespace {

using namespace detail;

struct Loaded {
  model::LoadedGdm gdm;
  std::optional<align::FrozenTranscriptEncoder> semantic;
  std::optional<emotion::EmotionGuide> guide;
};

std::string decode(const text::Vocabulary& v, const std::vector<int>& ids) {
  std::string s;
  for (int id : ids) s += (s.empty() ? "" : " ") + v.word(id);
  return s;
}

void write_clip(const fs::path& out, const std::string& name, const MatrixXf& x, const data::Standardizer& stats, std::vector<float> mask,
                const std::optional<std::string>& text, const std::optional<std::string>& transcript, std::optional<int> emotion,
                bool export_bvh) {
  motion::MotionClip clip;
  clip.frames = stats.invert(x);
  clip.mask = mask.empty() ? std::vector<float>(static_cast<std::size_t>(x.rows()), 1.0f) : std::move(mask);
  clip.source = motion::ClipSource::synthetic;
  clip.text = text;
  clip.transcript = transcript;
  clip.emotion = emotion;
  fs::create_directories(out / "clips");
  motion::save_clip(out / "clips" / name, clip);
  if (export_bvh) {
    fs::create_directories(out / "bvh");
    motion::save_bvh(out / "bvh" / (name + ".bvh"), motion::clip_to_raw(clip));
  }
}

std::vector<int> draw_targets(const RunConfig& cfg, const SampleOptions& opt, int n) {
  std::vector<int> t;
  if (!opt.emotion && !opt.random_emotion) return t;
  Rng rng(mix_seed(cfg.seed, 0x746172676574));
  for (int i = 0; i < n; ++i) t.push_back(opt.random_emotion ? rng.uniform_int(0, emotion::kClasses - 1) : *opt.emotion);
  return t;
}

SampleResult sample_one(const RunConfig& cfg, const SampleOptions& opt, const Loaded& L, const Reporter& report) {
  const auto& m = *L.gdm.model;
  const auto& dc = m.config();
  const data::Standardizer& stats = *L.gdm.stats;
  model::ConditionStream stream;
  std::optional<audio::Waveform> wav;
  if (opt.audio) wav = audio::read_wav(*opt.audio);
  int total = opt.length ? *opt.length : wav ? static_cast<int>(std::lround(wav->duration() * 20.0)) : dc.frames;
  if (total < 1) throw UsageError("sample length must be positive");
  // the guidance classifier pools frames, so single windows are rounded up
  int gen = total;
  if (L.guide && total <= dc.frames) {
    const int pool = L.guide->classifier().config().pool;
    gen = (total + pool - 1) / pool * pool;
  }
  if (wav) {
    MatrixXf f = data::audio_features(mel(), *wav, total);
    if (gen > total) {
      MatrixXf pad(gen, f.cols());
      pad.topRows(total) = f;
      pad.bottomRows(gen - total).rowwise() = f.row(total - 1);
      f = pad;
    }
    stream.audio = f;
  }
  static const text::WhitespaceTokenizer tok;
  if (opt.text) stream.text = L.gdm.vocab.encode(*opt.text, tok);
  if (opt.text && stream.text.empty()) throw UsageError("motion description has no tokens");
  if (opt.transcript) stream.semantic = L.semantic->encode({L.semantic->tokenize(*opt.transcript)}).row(0);

  const std::vector<int> targets = draw_targets(cfg, opt, 1);
  diffusion::GuidanceFn<float> hook;
  if (L.guide && opt.guide && !targets.empty()) hook = L.guide->hook(L.gdm.schedule, std::min(gen, dc.frames), targets);
  Rng rng(mix_seed(cfg.seed, 0x73616d70));
  const MatrixXf x = model::windowed_generate(m, L.gdm.schedule, stream, gen, rng, hook).topRows(total);

  const fs::path out = cfg.output;
  write_clip(out, opt.name, x, stats, {}, opt.text, opt.transcript, targets.empty() ? std::nullopt : std::optional<int>(targets[0]), opt.export_bvh);
  if (!targets.empty()) write_json(out / kTargetsFile, {{opt.name, targets[0]}});
  nlohmann::json nulls = nlohmann::json::array();
  if (!wav) nulls.push_back("audio");
  if (!opt.text) nulls.push_back("text");
  if (!opt.transcript) nulls.push_back("semantic");
  nlohmann::json conditions = {{"audio", wav ? nlohmann::json(opt.audio->string()) : nlohmann::json("∅")},
                               {"text", opt.text ? nlohmann::json(*opt.text) : nlohmann::json("∅")},
                               {"transcript", opt.transcript ? nlohmann::json(*opt.transcript) : nlohmann::json("∅")},
                               {"emotion", targets.empty() ? nlohmann::json("∅") : nlohmann::json(targets[0])},
                               {"guided", static_cast<bool>(hook)},
                               {"null_modalities", nulls}};
  write_run_manifest(out, "sample", cfg, checkpoint_hashes(cfg.checkpoints),
                     {{"conditions", conditions}, {"frames", total}, {"windowed", total > dc.frames}, {"eta", L.gdm.schedule.config().eta}});
  if (report) report("wrote " + (out / "clips" / opt.name).string() + " (" + std::to_string(total) + " frames)");
  return {{out / "clips" / opt.name}, targets};
}

SampleResult sample_corpus(const RunConfig& cfg, const SampleOptions& opt, const Loaded& L, const Reporter& report) {
  const auto& m = *L.gdm.model;
  const auto& dc = m.config();
  const int n_frames = dc.frames;
  const Corpus c = load_corpus(*opt.corpus, n_frames, *L.gdm.stats, L.gdm.vocab);
  const int n = opt.limit > 0 ? std::min(opt.limit, c.items->size()) : c.items->size();
  if (L.semantic && L.semantic->vocabulary().to_json() != L.gdm.vocab.to_json())
    throw DependencyError("align and gdm checkpoints use different vocabularies");
  const std::vector<int> targets = draw_targets(cfg, opt, n);
  const fs::path out = cfg.output;
  SampleResult res;
  res.targets = targets;
  nlohmann::json target_map = nlohmann::json::object();
  const int bsz = std::max(1, cfg.gdm.batch);
  for (int start = 0, bi = 0; start < n; start += bsz, ++bi) {
    const int b = std::min(bsz, n - start);
    auto cond = model::ConditionInput<float>::empty(b, n_frames, dc);
    std::vector<data::Example> ex;
    std::vector<std::vector<int>> transcripts;
    std::vector<int> with_transcript;
    for (int i = 0; i < b; ++i) {
      ex.push_back(c.items->get(start + i));
      const auto& e = ex.back();
      if (opt.use_audio && e.audio.size() != 0) {
        cond.audio.middleRows(static_cast<Eigen::Index>(i) * n_frames, n_frames) = e.audio;
        cond.audio_null[static_cast<std::size_t>(i)] = 0;
      }
      if (opt.use_text && !e.text.empty()) {
        cond.text[static_cast<std::size_t>(i)] = e.text;
        cond.text_null[static_cast<std::size_t>(i)] = 0;
      }
      if (L.semantic && !e.transcript.empty()) {
        transcripts.push_back(e.transcript);
        with_transcript.push_back(i);
      }
    }
    if (!transcripts.empty()) {
      const MatrixXf codes = L.semantic->encode(transcripts);
      for (std::size_t k = 0; k < with_transcript.size(); ++k) {
        cond.semantic.row(with_transcript[k]) = codes.row(static_cast<Eigen::Index>(k));
        cond.semantic_null[static_cast<std::size_t>(with_transcript[k])] = 0;
      }
    }
    cond.require_audio_or_text();
    std::vector<int> bt;
    if (!targets.empty()) bt.assign(targets.begin() + start, targets.begin() + start + b);
    diffusion::GuidanceFn<float> hook;
    if (L.guide && opt.guide && !bt.empty()) hook = L.guide->hook(L.gdm.schedule, n_frames, bt);
    Rng rng(mix_seed(cfg.seed, 0x6261746368ULL + static_cast<std::uint64_t>(bi)));
    const MatrixXf x = model::generate<float>(m, L.gdm.schedule, cond, n_frames, rng, hook);
    for (int i = 0; i < b; ++i) {
      const auto& e = ex[static_cast<std::size_t>(i)];
      const std::string name = "gen_" + e.id;
      const auto opt_str = [&](const std::vector<int>& ids) { return ids.empty() ? std::nullopt : std::optional<std::string>(decode(c.vocab, ids)); };
      write_clip(out, name, x.middleRows(static_cast<Eigen::Index>(i) * n_frames, n_frames), *L.gdm.stats, e.mask, opt_str(e.text),
                 opt_str(e.transcript), e.emotion >= 0 ? std::optional<int>(e.emotion) : std::nullopt, opt.export_bvh);
      res.clips.push_back(out / "clips" / name);
      if (!bt.empty()) target_map[name] = bt[static_cast<std::size_t>(i)];
    }
    if (report) report("generated " + std::to_string(start + b) + " / " + std::to_string(n));
  }
  if (!targets.empty()) write_json(out / kTargetsFile, target_map);
  write_run_manifest(out, "sample", cfg, checkpoint_hashes(cfg.checkpoints),
                     {{"corpus", opt.corpus->string()},
                      {"clips", n},
                      {"conditions", {{"audio", opt.use_audio}, {"text", opt.use_text}, {"semantic", opt.use_transcript}}},
                      {"emotion", opt.random_emotion ? nlohmann::json("random") : opt.emotion ? nlohmann::json(*opt.emotion) : nlohmann::json("∅")},
                      {"guided", L.guide && opt.guide && !targets.empty()}});
  return res;
}

}  // namespace

SampleResult cmd_sample(const RunConfig& cfg, const SampleOptions& opt, const Reporter& report) {
  if (!opt.corpus && !opt.audio && !opt.text) throw UsageError("sample needs audio or a motion description (or a corpus)");
  if (opt.emotion && opt.random_emotion) throw UsageError("give either a fixed emotion or random targets");
  if (opt.emotion && (*opt.emotion < 0 || *opt.emotion >= emotion::kClasses)) throw UsageError("emotion must lie in [0, 7]");
  if (opt.length && *opt.length < 1) throw UsageError("sample length must be positive");
  if (opt.corpus && (opt.audio || opt.text || opt.transcript || opt.length)) throw UsageError("corpus sampling takes its conditions from the corpus");

  const fs::path ck = cfg.checkpoints;
  Loaded L{model::load_gdm(require_file(ck / kGdmCkpt, "sampling needs the gdm checkpoint")), std::nullopt, std::nullopt};
  if (!L.gdm.stats) throw DataError("gdm checkpoint carries no standardization statistics");
  const bool want_semantic = opt.corpus ? opt.use_transcript : opt.transcript.has_value();
  if (want_semantic) {
    L.semantic = align::load_transcript_encoder(require_file(ck / kAlignCkpt, "transcript conditioning needs the align checkpoint"));
    if (L.semantic->width() != L.gdm.model->config().semantic_dim) throw DependencyError("align checkpoint does not match the gdm semantic width");
  }
  if ((opt.emotion || opt.random_emotion) && opt.guide) {
    const auto clf = emotion::load_classifier(require_file(ck / kNoisyClassifierCkpt, "emotion guidance needs the noisy classifier checkpoint"));
    L.guide.emplace(clf.model, clf.schedule_hash, cfg.guidance);
  }
  fs::create_directories(cfg.output);
  return opt.corpus ? sample_corpus(cfg, opt, L, report) : sample_one(cfg, opt, L, report);
}

}  // namespace cogest::cli
