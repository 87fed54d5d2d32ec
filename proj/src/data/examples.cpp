#include "cogest/data/examples.hpp"

#include <algorithm>

#include "cogest/audio/wav.hpp"
#include "cogest/motion/clip_io.hpp"

namespace cogest::data {

Batch make_batch(const std::vector<Example>& items, int audio_dim) {
  if (items.empty()) throw UsageError("empty batch");
  Batch b;
  b.size = static_cast<int>(items.size());
  b.frames = static_cast<int>(items[0].x.rows());
  const Eigen::Index n = b.frames;
  b.x0.resize(b.size * n, items[0].x.cols());
  b.audio = MatrixXf::Zero(b.size * n, audio_dim);
  for (int i = 0; i < b.size; ++i) {
    const Example& e = items[static_cast<std::size_t>(i)];
    if (e.x.rows() != n || e.x.cols() != b.x0.cols()) throw ShapeError("batch items differ in shape");
    b.x0.middleRows(i * n, n) = e.x;
    b.mask.insert(b.mask.end(), e.mask.begin(), e.mask.end());
    const bool has_audio = e.audio.size() != 0;
    if (has_audio) {
      if (e.audio.rows() != n || e.audio.cols() != audio_dim) throw ShapeError("audio features do not match the clip");
      b.audio.middleRows(i * n, n) = e.audio;
    }
    b.audio_null.push_back(has_audio ? 0 : 1);
    b.text.push_back(e.text);
    b.transcript.push_back(e.transcript);
    b.emotion.push_back(e.emotion);
  }
  return b;
}

MatrixXf audio_features(const audio::AudioFeatureProvider& provider, const audio::Waveform& w, int frames) {
  const MatrixXf f = provider.features(w);
  if (f.rows() == 0) throw DataError("audio too short for feature extraction");
  return audio::interpolate_frames(f, frames);
}

text::Vocabulary synth_vocabulary() { return text::Vocabulary(synth::corpus_words()); }

Example make_example(const motion::MotionClip& clip, const std::optional<Standardizer>& s, const text::Vocabulary& vocab,
                     const MatrixXf& audio) {
  static const text::WhitespaceTokenizer tok;
  Example e;
  e.mask = clip.mask;
  e.x = s ? s->apply(clip.frames, clip.mask) : clip.frames;
  e.audio = audio;
  if (clip.text) e.text = vocab.encode(*clip.text, tok);
  if (clip.transcript) e.transcript = vocab.encode(*clip.transcript, tok);
  e.emotion = clip.emotion.value_or(-1);
  return e;
}

void fit_length(Example& e, int frames) {
  const auto n = static_cast<int>(e.x.rows());
  if (frames <= 0 || n == frames) return;
  auto fit = [&](const MatrixXf& m) {
    if (m.size() == 0) return m;
    MatrixXf out = MatrixXf::Zero(frames, m.cols());
    if (n > frames) {
      out = m.middleRows((n - frames) / 2, frames);
    } else {
      out.topRows(n) = m;
    }
    return out;
  };
  e.x = fit(e.x);
  e.audio = fit(e.audio);
  std::vector<float> mask(static_cast<std::size_t>(frames), 0.0f);
  if (n > frames) {
    std::copy_n(e.mask.begin() + (n - frames) / 2, frames, mask.begin());
  } else {
    std::copy(e.mask.begin(), e.mask.end(), mask.begin());
  }
  e.mask = std::move(mask);
}

SynthExampleSet::SynthExampleSet(synth::CorpusManifest manifest, text::Vocabulary vocab, const audio::AudioFeatureProvider& provider,
                                 int frames)
    : manifest_(std::move(manifest)), vocab_(std::move(vocab)), frames_(frames) {
  static const text::WhitespaceTokenizer tok;
  for (const auto& e : manifest_.entries) {
    const synth::SynthSpec& g = e.gesture;
    audio_.push_back(audio_features(provider, synth::synth_audio(g), g.duration));
    transcript_.push_back(vocab_.encode(synth::synth_transcript(g), tok));
    const auto& loco = e.locomotion ? *e.locomotion : g;
    text_.push_back(vocab_.encode(synth::locomotion_text(loco.locomotion, loco.speed), tok));
  }
}

motion::MotionClip SynthExampleSet::raw_clip(int i) const {
  return synth::realize(manifest_.entries.at(static_cast<std::size_t>(i)), false).clip;
}

Example SynthExampleSet::get(int i) const {
  const auto idx = static_cast<std::size_t>(i);
  const motion::MotionClip clip = raw_clip(i);
  Example e;
  e.id = manifest_.entries[idx].id;
  e.mask = clip.mask;
  e.x = standardizer_ ? standardizer_->apply(clip.frames, clip.mask) : clip.frames;
  e.audio = audio_[idx];
  e.text = text_[idx];
  e.transcript = transcript_[idx];
  e.emotion = manifest_.entries[idx].gesture.emotion;
  fit_length(e, frames_);
  return e;
}

Standardizer SynthExampleSet::fit_standardizer() const {
  Standardizer s;
  for (int i = 0; i < size(); ++i) {
    const auto clip = raw_clip(i);
    s.accumulate(clip.frames, clip.mask);
  }
  s.finalize();
  return s;
}

ClipDirExampleSet::ClipDirExampleSet(const std::filesystem::path& dir, text::Vocabulary vocab, const audio::AudioFeatureProvider& provider,
                                     std::optional<Standardizer> standardizer, int frames) {
  const auto clips = dir / "clips";
  if (!std::filesystem::is_directory(clips)) throw DependencyError("no clips directory in " + dir.string());
  std::vector<std::filesystem::path> stems;
  for (const auto& entry : std::filesystem::directory_iterator(clips)) {
    if (entry.path().extension() == ".bin") stems.push_back(entry.path().parent_path() / entry.path().stem());
  }
  std::sort(stems.begin(), stems.end());
  for (const auto& stem : stems) {
    const motion::MotionClip clip = motion::load_clip(stem);
    MatrixXf feats;
    if (clip.audio_path) {
      const auto wav = dir / *clip.audio_path;
      if (std::filesystem::exists(wav)) feats = audio_features(provider, audio::read_wav(wav), clip.length());
    }
    Example e = make_example(clip, standardizer, vocab, feats);
    e.id = stem.filename().string();
    fit_length(e, frames);
    ids_.push_back(e.id);
    items_.push_back(std::move(e));
  }
  if (items_.empty()) throw DataError("corpus " + dir.string() + " contains no clips");
}

}  // namespace cogest::data
