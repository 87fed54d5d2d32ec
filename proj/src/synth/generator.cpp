#include "cogest/synth/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cogest/core/random.hpp"
#include "cogest/motion/rotation.hpp"

namespace cogest::synth {

using motion::axis_rotation;
namespace joint = motion::joint;

namespace {

constexpr double kFps = 20.0;
constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;
constexpr std::uint64_t kMotifTableSeed = 0x6d6f746966ULL;

enum Stream : std::uint64_t { kEmotionStream = 1, kMotifStream = 2, kMelodyStream = 3, kLocoStream = 4, kAudioStream = 5 };

Mat3 rx(double deg) { return axis_rotation(0, deg * kDeg); }
Mat3 ry(double deg) { return axis_rotation(1, deg * kDeg); }
Mat3 rz(double deg) { return axis_rotation(2, deg * kDeg); }

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3 - 2 * x);
}

struct MotifTemplate {
  Eigen::Matrix<double, 30, 3> pose;  // degrees per finger joint and axis
  Eigen::Matrix<double, 30, 1> amp, phase;
  double freq = 1.0;
};

const std::vector<MotifTemplate>& motif_table() {
  static const std::vector<MotifTemplate> table = [] {
    std::vector<MotifTemplate> out(kMotifs);
    for (int k = 0; k < kMotifs; ++k) {
      Rng rng(mix_seed(kMotifTableSeed, static_cast<std::uint64_t>(k)));
      auto& m = out[static_cast<std::size_t>(k)];
      for (int j = 0; j < 30; ++j) {
        m.pose(j, 0) = rng.uniform(-40, 40);  // curl
        m.pose(j, 1) = rng.uniform(-10, 10);
        m.pose(j, 2) = rng.uniform(-15, 15);
        m.amp(j) = rng.uniform(5, 15);
        m.phase(j) = rng.uniform(0, 2 * kPi);
      }
      m.freq = rng.uniform(0.8, 3.0);
    }
    return out;
  }();
  return table;
}

}  // namespace

std::string to_string(Locomotion l) {
  switch (l) {
    case Locomotion::none: return "none";
    case Locomotion::walk: return "walk";
    case Locomotion::run: return "run";
    case Locomotion::sit: return "sit";
    case Locomotion::stand: return "stand";
    case Locomotion::jump: return "jump";
  }
  return "none";
}

Locomotion parse_locomotion(const std::string& s) {
  for (auto l : {Locomotion::none, Locomotion::walk, Locomotion::run, Locomotion::sit, Locomotion::stand, Locomotion::jump}) {
    if (to_string(l) == s) return l;
  }
  throw SpecError("unknown locomotion '" + s + "'");
}

const std::vector<std::string>& emotion_names() {
  static const std::vector<std::string> names{"neutral", "happiness", "anger", "sadness", "contempt", "surprise", "fear", "disgust"};
  return names;
}

const std::vector<std::string>& motif_words() {
  static const std::vector<std::string> words{
      "wave",  "point", "grab",  "count", "snap",    "open", "close", "pinch", "thumbs", "fist",  "spread",
      "beckon", "clap", "tap",   "flick", "scratch", "hold", "push",  "pull",  "twist",  "stretch", "curl",
      "cross", "circle", "shake", "rub",  "press",   "lift", "drop",  "sweep", "swipe",  "knock"};
  return words;
}

namespace {
const std::vector<std::string>& fillers() {
  static const std::vector<std::string> f{"so", "well", "now", "look", "and", "then"};
  return f;
}
}  // namespace

std::vector<std::string> corpus_words() {
  std::vector<std::string> w = motif_words();
  for (const auto& f : fillers()) w.push_back(f);
  for (auto l : {Locomotion::none, Locomotion::walk, Locomotion::run, Locomotion::sit, Locomotion::stand, Locomotion::jump}) {
    for (double speed : {0.0, 0.2}) {
      std::string s = locomotion_text(l, speed), word;
      for (char c : s + " ") {
        if (c == ' ') {
          if (!word.empty() && std::find(w.begin(), w.end(), word) == w.end()) w.push_back(word);
          word.clear();
        } else {
          word += c;
        }
      }
    }
  }
  return w;
}

double Melody::envelope_at(double u) const {
  if (envelope.empty()) return 0.0;
  if (envelope.size() == 1) return envelope[0];
  const double x = std::clamp(u, 0.0, 1.0) * static_cast<double>(envelope.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(x), envelope.size() - 2);
  const double a = x - static_cast<double>(i);
  return (1 - a) * envelope[i] + a * envelope[i + 1];
}

void SynthSpec::validate() const {
  if (emotion < 0 || emotion >= kEmotions) throw SpecError("emotion " + std::to_string(emotion) + " outside [0, 8)");
  if (motifs.size() > 20) throw SpecError("more than 20 motif tokens");
  for (int m : motifs) {
    if (m < 0 || m >= kMotifs) throw SpecError("unknown motif id " + std::to_string(m));
  }
  if (duration < kMinDuration || duration > kMaxDuration) throw SpecError("duration must lie in [60, 180]");
  if (!(melody.base_hz > 20 && melody.base_hz < 1000)) throw SpecError("melody base frequency out of range");
  if (melody.envelope.size() < 2) throw SpecError("melody envelope needs two breakpoints");
  for (double e : melody.envelope) {
    if (!(e >= 0 && e <= 1)) throw SpecError("melody envelope values must lie in [0, 1]");
  }
  if (!(speed >= 0 && speed < 1)) throw SpecError("speed must lie in [0, 1) m/frame");
}

nlohmann::json SynthSpec::to_json() const {
  return {{"emotion", emotion},
          {"motifs", motifs},
          {"melody", {{"base_hz", melody.base_hz}, {"envelope", melody.envelope}}},
          {"locomotion", to_string(locomotion)},
          {"speed", speed},
          {"duration", duration},
          {"seed", seed},
          {"gains", {{"emotion", gains.emotion}, {"motif", gains.motif}, {"melody", gains.melody}}}};
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  SynthSpec s;
  try {
    s.emotion = j.at("emotion").get<int>();
    s.motifs = j.at("motifs").get<std::vector<int>>();
    s.melody.base_hz = j.at("melody").at("base_hz").get<double>();
    s.melody.envelope = j.at("melody").at("envelope").get<std::vector<double>>();
    s.locomotion = parse_locomotion(j.at("locomotion").get<std::string>());
    s.speed = j.value("speed", 0.0);
    s.duration = j.value("duration", kMaxDuration);
    s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("gains")) {
      s.gains.emotion = j["gains"].value("emotion", 1.0);
      s.gains.motif = j["gains"].value("motif", 1.0);
      s.gains.melody = j["gains"].value("melody", 1.0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("malformed spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::vector<int> emotion_joints() { return {joint::neck, joint::left_collar, joint::right_collar, joint::head}; }
std::vector<int> melody_joints() {
  return {joint::left_shoulder, joint::right_shoulder, joint::left_elbow, joint::right_elbow, joint::left_wrist, joint::right_wrist};
}
std::vector<int> motif_joints() {
  std::vector<int> j;
  for (int i = joint::left_hand_first; i < motion::kCanonicalJoints; ++i) j.push_back(i);
  return j;
}
std::vector<int> locomotion_joints() { return motion::BodyPartition::canonical().spine3_cut; }

std::string locomotion_text(Locomotion l, double speed) {
  switch (l) {
    case Locomotion::none: return "stand still";
    case Locomotion::walk: return speed > 0.045 ? "walk forward quickly" : "walk forward slowly";
    case Locomotion::run: return speed > 0.15 ? "run forward quickly" : "run forward slowly";
    case Locomotion::sit: return "sit down";
    case Locomotion::stand: return "stand up";
    case Locomotion::jump: return "jump in place";
  }
  return "stand still";
}

std::string synth_transcript(const SynthSpec& spec) {
  Rng rng(mix_seed(spec.seed, kMotifStream));
  std::string out = fillers()[static_cast<std::size_t>(rng.uniform_int(0, 3))];
  for (std::size_t i = 0; i < spec.motifs.size(); ++i) {
    if (i > 0) out += i % 2 ? " and" : " then";
    out += " " + motif_words()[static_cast<std::size_t>(spec.motifs[i])];
  }
  return out;
}

motion::PoseTrack synth_track(const SynthSpec& spec) {
  spec.validate();
  const int n = spec.duration;
  const auto& skel = motion::canonical_skeleton();
  motion::PoseTrack t;
  t.frames = n;
  t.joints = skel.size();
  t.local.assign(static_cast<std::size_t>(n * t.joints), Mat3::Identity());
  t.root = MatrixXd::Zero(n, 3);
  for (int f = 0; f < n; ++f) t.root.row(f) = skel.joints[0].offset.transpose();

  // Emotion: neck/collar posture on a circle of class offsets plus a head
  // oscillation with class-specific amplitude and rate.
  {
    Rng rng(mix_seed(spec.seed, kEmotionStream));
    const double g = spec.gains.emotion;
    const double theta = 2 * kPi * spec.emotion / kEmotions;
    const double pitch = 12 * std::cos(theta) + rng.uniform(-1.5, 1.5);
    const double raise = 12 * std::sin(theta) + rng.uniform(-1.5, 1.5);
    const double amp = 3.0 + 1.0 * spec.emotion, freq = 0.5 + 0.15 * spec.emotion;
    const double ph1 = rng.uniform(0, 2 * kPi), ph2 = rng.uniform(0, 2 * kPi);
    for (int f = 0; f < n; ++f) {
      const double s = f / kFps;
      t.at(f, joint::neck) = rx(g * pitch);
      t.at(f, joint::left_collar) = rz(g * raise);
      t.at(f, joint::right_collar) = rz(-g * raise);
      t.at(f, joint::head) = rx(g * amp * std::sin(2 * kPi * freq * s + ph1)) * ry(g * 0.5 * amp * std::sin(2 * kPi * 0.7 * freq * s + ph2));
    }
  }

  // Melody: arm raise follows the audio envelope, with an envelope-scaled swing.
  {
    Rng rng(mix_seed(spec.seed, kMelodyStream));
    const double g = spec.gains.melody;
    const double ph[2] = {rng.uniform(0, 2 * kPi), rng.uniform(0, 2 * kPi)};
    const double wph = rng.uniform(0, 2 * kPi);
    for (int f = 0; f < n; ++f) {
      const double s = f / kFps;
      const double env = spec.melody.envelope_at(n > 1 ? static_cast<double>(f) / (n - 1) : 0.0);
      for (int side = 0; side < 2; ++side) {
        const double sign = side == 0 ? -1.0 : 1.0;
        const int sh = side == 0 ? joint::left_shoulder : joint::right_shoulder;
        const int el = side == 0 ? joint::left_elbow : joint::right_elbow;
        const int wr = side == 0 ? joint::left_wrist : joint::right_wrist;
        const double swing = g * 12 * env * std::sin(2 * kPi * 1.2 * s + ph[side]);
        t.at(f, sh) = rz(sign * (70 - g * 30 * env)) * ry(-sign * swing);
        t.at(f, el) = ry(-sign * (20 + g * 35 * env));
        t.at(f, wr) = rx(g * 15 * env * std::sin(2 * kPi * 2.0 * s + wph));
      }
    }
  }

  // Motifs: finger pose template plus oscillation inside sub-window i of k.
  {
    Rng rng(mix_seed(spec.seed, kMotifStream));
    rng.uniform_int(0, 3);  // transcript filler draw
    const double g = spec.gains.motif;
    const auto k = static_cast<int>(spec.motifs.size());
    std::vector<Eigen::Matrix<double, 30, 3>> angles(static_cast<std::size_t>(n), Eigen::Matrix<double, 30, 3>::Zero());
    for (int i = 0; i < k; ++i) {
      const auto& m = motif_table()[static_cast<std::size_t>(spec.motifs[static_cast<std::size_t>(i)])];
      const double scale = rng.uniform(0.9, 1.1);
      const int start = i * n / k, stop = (i + 1) * n / k;
      const double len = stop - start;
      for (int f = start; f < stop; ++f) {
        const double w = std::pow(std::sin(kPi * (f - start + 0.5) / len), 2);
        const double s = f / kFps;
        Eigen::Matrix<double, 30, 3> a = m.pose;
        const Eigen::Matrix<double, 30, 1> osc = (m.amp.array() * (2 * kPi * m.freq * s + m.phase.array()).sin()).matrix();
        a.col(0) += osc;
        angles[static_cast<std::size_t>(f)] += (g * w * scale) * a;
      }
    }
    for (int f = 0; f < n; ++f) {
      for (int j = 0; j < 30; ++j) {
        const auto& a = angles[static_cast<std::size_t>(f)].row(j);
        const double side = j < 15 ? -1.0 : 1.0;
        t.at(f, joint::left_hand_first + j) = rz(side * a(0)) * rx(a(1)) * ry(a(2));
      }
    }
  }

  // Locomotion: lower body and root.
  {
    Rng rng(mix_seed(spec.seed, kLocoStream));
    const double phase = rng.uniform(0, 2 * kPi);
    const double v = spec.speed;
    for (int f = 0; f < n; ++f) {
      const double s = f / kFps;
      const double u = n > 1 ? static_cast<double>(f) / (n - 1) : 0.0;
      Vec3 root = skel.joints[0].offset;
      double hip[2] = {0, 0}, knee[2] = {0, 0}, twist = 0, lean = 0;
      switch (spec.locomotion) {
        case Locomotion::none:
          break;
        case Locomotion::walk:
        case Locomotion::run: {
          const bool run = spec.locomotion == Locomotion::run;
          const double cadence = (run ? 1.4 : 0.9) * std::sqrt(std::max(v, 1e-3) / (run ? 0.15 : 0.05));
          const double ph = 2 * kPi * cadence * s + phase;
          const double hip_amp = run ? 40 : 25, knee_amp = run ? 80 : 45;
          for (int side = 0; side < 2; ++side) {
            const double p = ph + side * kPi;
            hip[side] = -hip_amp * std::sin(p);
            knee[side] = knee_amp * std::max(0.0, std::sin(p - 0.8));
          }
          root.z() += v * f;
          root.y() += (run ? 0.05 : 0.015) * std::abs(std::sin(ph)) - (run ? 0.06 : 0.02);
          twist = (run ? 8 : 5) * std::sin(ph);
          lean = run ? 10 : 3;
          break;
        }
        case Locomotion::sit:
        case Locomotion::stand: {
          double p = smoothstep((u - 0.2) / 0.5);
          if (spec.locomotion == Locomotion::stand) p = 1 - p;
          hip[0] = hip[1] = -90 * p;
          knee[0] = knee[1] = 90 * p;
          root.y() -= 0.42 * p;
          root.z() -= 0.1 * p;
          lean = 15 * std::sin(kPi * p);
          break;
        }
        case Locomotion::jump: {
          const double cyc = std::fmod(s / 1.2 + phase / (2 * kPi), 1.0);
          const double crouch = cyc < 0.4 ? std::sin(kPi * cyc / 0.4) : 0.0;
          const double air = cyc >= 0.4 && cyc < 0.8 ? std::sin(kPi * (cyc - 0.4) / 0.4) : 0.0;
          hip[0] = hip[1] = -50 * crouch;
          knee[0] = knee[1] = 100 * crouch;
          root.y() += -0.18 * crouch + 0.25 * air;
          lean = 20 * crouch;
          break;
        }
      }
      t.root.row(f) = root.transpose();
      t.at(f, joint::pelvis) = ry(twist * 0.5);
      t.at(f, joint::left_hip) = rx(hip[0]);
      t.at(f, joint::right_hip) = rx(hip[1]);
      t.at(f, joint::left_knee) = rx(knee[0]);
      t.at(f, joint::right_knee) = rx(knee[1]);
      t.at(f, joint::left_ankle) = rx(-0.3 * (hip[0] + knee[0]) * (spec.locomotion == Locomotion::sit || spec.locomotion == Locomotion::stand ? 0 : 1));
      t.at(f, joint::right_ankle) = rx(-0.3 * (hip[1] + knee[1]) * (spec.locomotion == Locomotion::sit || spec.locomotion == Locomotion::stand ? 0 : 1));
      t.at(f, joint::spine1) = rx(lean * 0.5) * ry(-twist * 0.5);
      t.at(f, joint::spine2) = rx(lean * 0.3);
      t.at(f, joint::spine3) = rx(lean * 0.2) * ry(-twist * 0.3);
    }
  }
  return t;
}

audio::Waveform synth_audio(const SynthSpec& spec, int sample_rate) {
  spec.validate();
  Rng rng(mix_seed(spec.seed, kAudioStream));
  audio::Waveform w;
  w.sample_rate = sample_rate;
  const double seconds = spec.duration / kFps;
  const auto count = static_cast<std::size_t>(std::lround(seconds * sample_rate));
  const double f0 = spec.melody.base_hz * std::pow(1.15, spec.emotion);
  double phases[8];
  for (double& p : phases) p = rng.uniform(0, 2 * kPi);
  w.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double s = static_cast<double>(i) / sample_rate;
    const double env = spec.melody.envelope_at(s / seconds);
    double v = 0;
    for (int h = 1; h <= 8; ++h) v += std::sin(2 * kPi * h * f0 * s + phases[h - 1]) / h;
    w.samples[i] = static_cast<float>(0.25 * (0.05 + env) * v + 0.002 * rng.normal());
  }
  return w;
}

SynthSample gen_sample(const SynthSpec& spec, bool with_audio) {
  SynthSample out;
  out.clip = motion::assemble_track(synth_track(spec));
  out.clip.source = motion::ClipSource::synthetic;
  if (with_audio) out.audio = synth_audio(spec);
  out.transcript = synth_transcript(spec);
  out.text = locomotion_text(spec.locomotion, spec.speed);
  out.emotion = spec.emotion;
  out.clip.transcript = out.transcript;
  out.clip.text = out.text;
  out.clip.emotion = spec.emotion;
  return out;
}

}  // namespace cogest::synth
