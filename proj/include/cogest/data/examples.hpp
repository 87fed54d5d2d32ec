#ifndef COGEST_DATA_EXAMPLES_HPP_
#define COGEST_DATA_EXAMPLES_HPP_

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cogest/audio/features.hpp"
#include "cogest/data/standardizer.hpp"
#include "cogest/motion/unified.hpp"
#include "cogest/synth/corpus.hpp"
#include "cogest/text/tokenizer.hpp"

namespace cogest::data {

/// One training/evaluation item in model space (standardized frames).
struct Example {
  std::string id;
  MatrixXf x;               // N x 994, padded rows zero
  std::vector<float> mask;  // N
  MatrixXf audio;           // N x A; empty when the item has no audio
  std::vector<int> text;        // motion description ids; empty when absent
  std::vector<int> transcript;  // spoken-word ids; empty when absent
  int emotion = -1;             // -1 when unlabeled
};

class ExampleSet {
 public:
  virtual ~ExampleSet() = default;
  virtual int size() const = 0;
  virtual Example get(int i) const = 0;
  /// Emotion label of item i (-1 when unlabeled).
  virtual int emotion(int i) const { return get(i).emotion; }
};

/// Zero-pads (mask 0) or centre-crops frames and audio to `frames` rows.
void fit_length(Example& e, int frames);

/// Items packed for a batch: item b owns rows [b*N, (b+1)*N).
struct Batch {
  int size = 0;
  int frames = 0;
  MatrixXf x0;
  std::vector<float> mask;
  MatrixXf audio;
  std::vector<char> audio_null;
  std::vector<std::vector<int>> text, transcript;
  std::vector<int> emotion;
};

/// All items must share one frame count; missing audio rows stay zero and
/// are flagged in `audio_null`.
Batch make_batch(const std::vector<Example>& items, int audio_dim);

/// Provider features resampled to exactly `frames` rows.
MatrixXf audio_features(const audio::AudioFeatureProvider& provider, const audio::Waveform& w, int frames);

/// Vocabulary over every word the synthetic corpus can emit.
text::Vocabulary synth_vocabulary();

/// Synthetic corpus held as specs: audio features and token ids are cached,
/// motion is regenerated on access.
class SynthExampleSet : public ExampleSet {
 public:
  /// Items are fitted to `frames` rows; 0 keeps each clip's own length.
  SynthExampleSet(synth::CorpusManifest manifest, text::Vocabulary vocab, const audio::AudioFeatureProvider& provider,
                  int frames = 180);

  int size() const override { return static_cast<int>(manifest_.entries.size()); }
  Example get(int i) const override;
  int emotion(int i) const override { return manifest_.entries.at(static_cast<std::size_t>(i)).gesture.emotion; }
  /// Unstandardized clip of item i.
  motion::MotionClip raw_clip(int i) const;

  Standardizer fit_standardizer() const;
  void set_standardizer(Standardizer s) { standardizer_ = std::move(s); }
  const std::optional<Standardizer>& standardizer() const { return standardizer_; }
  const synth::CorpusManifest& manifest() const { return manifest_; }
  const text::Vocabulary& vocabulary() const { return vocab_; }

 private:
  synth::CorpusManifest manifest_;
  text::Vocabulary vocab_;
  std::optional<Standardizer> standardizer_;
  int frames_ = 180;
  std::vector<MatrixXf> audio_;
  std::vector<std::vector<int>> text_, transcript_;
};

/// Prepared corpus directory: clips/<id>.{bin,json}, optional audio, and
/// stats.json with the standardizer. Clips are loaded once.
class ClipDirExampleSet : public ExampleSet {
 public:
  ClipDirExampleSet(const std::filesystem::path& dir, text::Vocabulary vocab, const audio::AudioFeatureProvider& provider,
                    std::optional<Standardizer> standardizer, int frames = 180);

  int size() const override { return static_cast<int>(items_.size()); }
  Example get(int i) const override { return items_[static_cast<std::size_t>(i)]; }
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::vector<Example> items_;
  std::vector<std::string> ids_;
};

/// Standardized model-space example from a clip plus optional side data.
Example make_example(const motion::MotionClip& clip, const std::optional<Standardizer>& s, const text::Vocabulary& vocab,
                     const MatrixXf& audio);

}  // namespace cogest::data

#endif  // COGEST_DATA_EXAMPLES_HPP_
