#include "cogest/synth/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "cogest/core/random.hpp"
#include "cogest/motion/clip_io.hpp"

namespace cogest::synth {

nlohmann::json CorpusManifest::to_json() const {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json j = {{"id", e.id}, {"kind", e.hybrid() ? "hybrid" : "gesture"}, {"gesture", e.gesture.to_json()}};
    if (e.locomotion) j["locomotion"] = e.locomotion->to_json();
    items.push_back(std::move(j));
  }
  return {{"format", "cogest-synth-corpus"},
          {"version", 1},
          {"seed", seed},
          {"mix", {gesture_fraction, 1.0 - gesture_fraction}},
          {"entries", std::move(items)}};
}

CorpusManifest CorpusManifest::from_json(const nlohmann::json& j) {
  CorpusManifest m;
  try {
    if (j.at("format").get<std::string>() != "cogest-synth-corpus") throw DataError("not a synthetic corpus manifest");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.gesture_fraction = j.at("mix").at(0).get<double>();
    for (const auto& item : j.at("entries")) {
      CorpusEntry e;
      e.id = item.at("id").get<std::string>();
      e.gesture = SynthSpec::from_json(item.at("gesture"));
      if (item.contains("locomotion")) e.locomotion = SynthSpec::from_json(item.at("locomotion"));
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed corpus manifest: ") + e.what());
  }
  return m;
}

std::size_t CorpusManifest::hybrid_count() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const CorpusEntry& e) { return e.hybrid(); }));
}

SynthSpec random_gesture_spec(std::uint64_t seed) {
  Rng rng(seed);
  SynthSpec s;
  s.seed = mix_seed(seed, 17);
  s.emotion = rng.uniform_int(0, kEmotions - 1);
  const int k = rng.uniform_int(1, 3);
  for (int i = 0; i < k; ++i) s.motifs.push_back(rng.uniform_int(0, kMotifs - 1));
  s.melody.base_hz = rng.uniform(98, 102);
  s.melody.envelope.resize(6);
  for (double& e : s.melody.envelope) e = rng.uniform(0.1, 1.0);
  return s;
}

SynthSpec random_locomotion_spec(std::uint64_t seed) {
  Rng rng(seed);
  SynthSpec s = random_gesture_spec(mix_seed(seed, 3));
  const Locomotion kinds[] = {Locomotion::walk, Locomotion::run, Locomotion::sit, Locomotion::stand, Locomotion::jump};
  s.locomotion = kinds[rng.uniform_int(0, 4)];
  if (s.locomotion == Locomotion::walk) s.speed = rng.uniform(0.03, 0.06);
  if (s.locomotion == Locomotion::run) s.speed = rng.uniform(0.12, 0.18);
  s.gains = {0.0, 0.0, 0.0};
  return s;
}

CorpusManifest gen_dataset(int n, std::uint64_t seed, double gesture_fraction) {
  if (n < 1) throw UsageError("corpus size must be at least 1");
  if (!(gesture_fraction >= 0 && gesture_fraction <= 1)) throw UsageError("gesture fraction must lie in [0, 1]");
  const auto gestures = static_cast<int>(std::llround(n * gesture_fraction));
  std::vector<char> hybrid(static_cast<std::size_t>(n), 0);
  std::fill(hybrid.begin() + gestures, hybrid.end(), 1);
  Rng rng(mix_seed(seed, 0));
  std::shuffle(hybrid.begin(), hybrid.end(), rng.engine());

  CorpusManifest m;
  m.seed = seed;
  m.gesture_fraction = gesture_fraction;
  for (int i = 0; i < n; ++i) {
    const std::uint64_t item = mix_seed(seed, 1000 + static_cast<std::uint64_t>(i));
    CorpusEntry e;
    char id[32];
    std::snprintf(id, sizeof id, "clip_%05d", i);
    e.id = id;
    e.gesture = random_gesture_spec(item);
    if (hybrid[static_cast<std::size_t>(i)]) e.locomotion = random_locomotion_spec(mix_seed(item, 1));
    m.entries.push_back(std::move(e));
  }
  return m;
}

SynthSample realize(const CorpusEntry& e, bool with_audio) {
  SynthSample g = gen_sample(e.gesture, with_audio);
  g.clip.source = motion::ClipSource::gesture;
  if (!e.locomotion) return g;
  SynthSpec loco = *e.locomotion;
  loco.duration = e.gesture.duration;
  const SynthSample l = gen_sample(loco, false);
  motion::MotionClip spliced = motion::splice_hybrid(l.clip, g.clip, motion::BodyPartition::canonical());
  spliced.transcript = g.transcript;
  spliced.emotion = g.emotion;
  g.clip = std::move(spliced);
  g.text = l.text;
  return g;
}

void write_corpus(const std::filesystem::path& dir, const CorpusManifest& m) {
  std::filesystem::create_directories(dir / "clips");
  std::filesystem::create_directories(dir / "audio");
  for (const auto& e : m.entries) {
    SynthSample s = realize(e);
    s.clip.audio_path = "audio/" + e.id + ".wav";
    audio::write_wav(dir / "audio" / (e.id + ".wav"), s.audio);
    motion::save_clip(dir / "clips" / e.id, s.clip);
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
  out << m.to_json().dump(1) << "\n";
}

}  // namespace cogest::synth
