#ifndef COGEST_SYNTH_CORPUS_HPP_
#define COGEST_SYNTH_CORPUS_HPP_

#include <filesystem>
#include <optional>
#include <vector>

#include "cogest/synth/generator.hpp"

namespace cogest::synth {

/// One corpus item. Hybrid items splice the lower body of `locomotion` under
/// the upper body of `gesture`.
struct CorpusEntry {
  std::string id;
  SynthSpec gesture;
  std::optional<SynthSpec> locomotion;

  bool hybrid() const { return locomotion.has_value(); }
};

struct CorpusManifest {
  std::uint64_t seed = 0;
  double gesture_fraction = 0.6;
  std::vector<CorpusEntry> entries;

  nlohmann::json to_json() const;
  static CorpusManifest from_json(const nlohmann::json& j);
  std::size_t hybrid_count() const;
};

/// Random spec for corpus item `index`: uniform emotion, 1-3 motifs,
/// jittered melody, locomotion none.
SynthSpec random_gesture_spec(std::uint64_t seed);
SynthSpec random_locomotion_spec(std::uint64_t seed);

/// round(n * gesture_fraction) gesture-only items, the rest hybrid, in a
/// seeded random order.
CorpusManifest gen_dataset(int n, std::uint64_t seed, double gesture_fraction = 0.6);

/// Materializes one entry; gesture-only clips are tagged `gesture`, spliced
/// ones `hybrid`.
SynthSample realize(const CorpusEntry& e, bool with_audio = true);

/// Writes clips/<id>.{bin,json}, audio/<id>.wav and manifest.json.
void write_corpus(const std::filesystem::path& dir, const CorpusManifest& m);

}  // namespace cogest::synth

#endif  // COGEST_SYNTH_CORPUS_HPP_
