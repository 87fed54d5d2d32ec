#ifndef COGEST_SYNTH_GENERATOR_HPP_
#define COGEST_SYNTH_GENERATOR_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogest/audio/wav.hpp"
#include "cogest/core/error.hpp"
#include "cogest/motion/unified.hpp"

namespace cogest::synth {

inline constexpr int kEmotions = 8;
inline constexpr int kMotifs = 32;
inline constexpr int kMinDuration = 60;
inline constexpr int kMaxDuration = 180;

class SpecError : public UsageError {
 public:
  explicit SpecError(const std::string& what) : UsageError("synth spec: " + what) {}
};

enum class Locomotion { none, walk, run, sit, stand, jump };
std::string to_string(Locomotion l);
Locomotion parse_locomotion(const std::string& s);

/// Emotion names, index = class id.
const std::vector<std::string>& emotion_names();
/// The 32 motif words, index = motif id.
const std::vector<std::string>& motif_words();
/// Every word a synthetic transcript or description can contain.
std::vector<std::string> corpus_words();

struct Melody {
  double base_hz = 100.0;
  std::vector<double> envelope{0.5, 0.5};  // evenly spaced breakpoints over the clip, each in [0, 1]

  double envelope_at(double u) const;  // u in [0, 1]
};

/// Per-factor multipliers; zero removes a factor's motion entirely.
struct FactorGains {
  double emotion = 1.0;
  double motif = 1.0;
  double melody = 1.0;
};

struct SynthSpec {
  int emotion = 0;
  std::vector<int> motifs;  // motif ids, at most 20
  Melody melody;
  Locomotion locomotion = Locomotion::none;
  double speed = 0.0;  // meters per frame for walk/run
  int duration = kMaxDuration;
  std::uint64_t seed = 0;
  FactorGains gains;

  void validate() const;
  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
};

struct SynthSample {
  motion::MotionClip clip;  // source = synthetic, transcript/text/emotion set
  audio::Waveform audio;
  std::string transcript;
  std::string text;
  int emotion = 0;
};

motion::PoseTrack synth_track(const SynthSpec& spec);
audio::Waveform synth_audio(const SynthSpec& spec, int sample_rate = 16000);
std::string synth_transcript(const SynthSpec& spec);
std::string locomotion_text(Locomotion l, double speed);

/// `with_audio = false` skips waveform synthesis (motion-only callers).
SynthSample gen_sample(const SynthSpec& spec, bool with_audio = true);

/// Joint sets each factor writes to; pairwise disjoint.
std::vector<int> emotion_joints();
std::vector<int> melody_joints();
std::vector<int> motif_joints();
std::vector<int> locomotion_joints();

}  // namespace cogest::synth

#endif  // COGEST_SYNTH_GENERATOR_HPP_
