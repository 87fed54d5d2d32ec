#include <doctest.h>

#include <filesystem>

#include "cogest/motion/clip_io.hpp"
#include "cogest/synth/corpus.hpp"

using namespace cogest;
using namespace cogest::synth;
namespace layout = motion::layout;

namespace {

std::vector<int> rotation_columns(const std::vector<int>& joints) {
  std::vector<int> cols;
  for (int j : joints) {
    for (int c = 0; c < 6; ++c) cols.push_back(layout::rot(j) + c);
    for (int c = 0; c < 6; ++c) cols.push_back(layout::ang_vel(j) + c);
  }
  return cols;
}

double max_col_diff(const MatrixXf& a, const MatrixXf& b, const std::vector<int>& cols) {
  double worst = 0;
  for (int c : cols) worst = std::max(worst, double((a.col(c) - b.col(c)).cwiseAbs().maxCoeff()));
  return worst;
}

}  // namespace

TEST_CASE("generation is deterministic") {
  const SynthSpec s = random_gesture_spec(42);
  const auto a = gen_sample(s), b = gen_sample(s);
  CHECK(a.clip.frames == b.clip.frames);
  CHECK(a.audio.samples == b.audio.samples);
  CHECK(a.transcript == b.transcript);
  CHECK(a.clip.frames.cols() == 994);
  CHECK(a.clip.length() == 180);
  CHECK(a.audio.samples.size() == 9 * 16000);
  CHECK(SynthSpec::from_json(s.to_json()).to_json() == s.to_json());
}

TEST_CASE("no locomotion keeps the root in place") {
  SynthSpec s = random_gesture_spec(7);
  s.duration = 90;
  const auto clip = gen_sample(s).clip;
  CHECK(clip.length() == 90);
  const auto root = clip.frames.middleCols(layout::loc(0), 3);
  CHECK((root.rowwise() - root.row(0)).cwiseAbs().maxCoeff() == 0.0f);
  CHECK(clip.frames.middleCols(layout::lin_vel(0), 3).isZero());
  // feet planted
  CHECK(clip.frames.middleCols(layout::kContacts, 4).minCoeff() == 1.0f);

  SynthSpec walk = random_locomotion_spec(3);
  walk.locomotion = Locomotion::walk;
  walk.speed = 0.05;
  const auto w = gen_sample(walk).clip;
  CHECK(w.frames(179, layout::loc(0) + 2) - w.frames(0, layout::loc(0) + 2) == doctest::Approx(0.05 * 179).epsilon(1e-4));
}

TEST_CASE("spec validation") {
  SynthSpec s;
  s.motifs = {40};
  CHECK_THROWS_AS(gen_sample(s), SpecError);
  s.motifs = {1};
  s.duration = 59;
  CHECK_THROWS_AS(gen_sample(s), SpecError);
  CHECK_THROWS_AS(parse_locomotion("crawl"), SpecError);
  CHECK(motif_words().size() == 32);
}

TEST_CASE("emotion classes are linearly separable") {
  // Linear discriminant probe on per-clip mean features; 200 clips per class.
  const int per_class = 200, dims = 994;
  std::vector<RowVectorXd> feats;
  std::vector<int> labels;
  for (int e = 0; e < kEmotions; ++e) {
    for (int i = 0; i < per_class; ++i) {
      SynthSpec s = random_gesture_spec(mix_seed(99, static_cast<std::uint64_t>(e * 1000 + i)));
      s.emotion = e;
      const auto clip = motion::assemble_track(synth_track(s));
      feats.push_back(clip.frames.cast<double>().colwise().mean());
      labels.push_back(e);
    }
  }
  std::vector<int> train, test;
  for (std::size_t i = 0; i < feats.size(); ++i) (i % 2 ? test : train).push_back(static_cast<int>(i));
  Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(kEmotions, dims);
  std::vector<int> count(kEmotions, 0);
  for (int i : train) {
    mu.row(labels[static_cast<std::size_t>(i)]) += feats[static_cast<std::size_t>(i)];
    ++count[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
  }
  for (int e = 0; e < kEmotions; ++e) mu.row(e) /= count[static_cast<std::size_t>(e)];
  Eigen::MatrixXd centered(static_cast<Eigen::Index>(train.size()), dims);
  for (std::size_t r = 0; r < train.size(); ++r) {
    const auto i = static_cast<std::size_t>(train[r]);
    centered.row(static_cast<Eigen::Index>(r)) = feats[i] - mu.row(labels[i]);
  }
  Eigen::MatrixXd cov = centered.transpose() * centered / double(train.size());
  cov += (1e-3 * cov.diagonal().mean() + 1e-9) * Eigen::MatrixXd::Identity(dims, dims);
  const Eigen::MatrixXd w = cov.ldlt().solve(mu.transpose());  // dims x classes
  const Eigen::RowVectorXd b = -0.5 * (mu * w).diagonal().transpose();
  Eigen::MatrixXd scores(static_cast<Eigen::Index>(test.size()), kEmotions);
  for (std::size_t r = 0; r < test.size(); ++r) {
    scores.row(static_cast<Eigen::Index>(r)) = feats[static_cast<std::size_t>(test[r])] * w + b;
  }
  int correct = 0;
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index arg;
    scores.row(r).maxCoeff(&arg);
    correct += arg == labels[static_cast<std::size_t>(test[static_cast<std::size_t>(r)])];
  }
  const double acc = double(correct) / double(scores.rows());
  MESSAGE("probe accuracy " << acc);
  CHECK(acc >= 0.95);
}

TEST_CASE("factors are orthogonal") {
  SynthSpec base = random_gesture_spec(5);
  base.motifs = {3, 17};
  const MatrixXf full = gen_sample(base).clip.frames;
  struct Case {
    double FactorGains::*gain;
    std::vector<int> owned;
  };
  const Case cases[] = {{&FactorGains::emotion, emotion_joints()}, {&FactorGains::motif, motif_joints()}, {&FactorGains::melody, melody_joints()}};
  const std::vector<std::vector<int>> groups{emotion_joints(), motif_joints(), melody_joints(), locomotion_joints()};
  for (const auto& c : cases) {
    SynthSpec s = base;
    s.gains.*(c.gain) = 0.0;
    const MatrixXf cut = gen_sample(s).clip.frames;
    for (const auto& g : groups) {
      const double d = max_col_diff(full, cut, rotation_columns(g));
      if (g == c.owned) {
        CHECK(d > 1e-2);
      } else {
        CHECK(d <= 1e-9);
      }
    }
  }
}

TEST_CASE("dataset mixing, tags and manifest replay") {
  const auto m = gen_dataset(10, 123);
  CHECK(m.entries.size() == 10);
  CHECK(m.hybrid_count() == 4);
  for (int n : {20, 50, 100}) CHECK(gen_dataset(n, 9).hybrid_count() == static_cast<std::size_t>(n * 4 / 10));

  const auto replay = CorpusManifest::from_json(nlohmann::json::parse(m.to_json().dump()));
  CHECK(replay.to_json() == m.to_json());
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto a = realize(m.entries[i]);
    const auto b = realize(replay.entries[i]);
    CHECK(a.clip.frames == b.clip.frames);
    if (m.entries[i].hybrid()) {
      CHECK(a.clip.source == motion::ClipSource::hybrid);
      // lower-body rotations come from the locomotion clip, upper body from the gesture clip
      SynthSpec loco = *m.entries[i].locomotion;
      const auto l = gen_sample(loco).clip;
      const auto g = gen_sample(m.entries[i].gesture).clip;
      CHECK(max_col_diff(a.clip.frames, l.frames, rotation_columns(locomotion_joints())) == 0.0);
      CHECK(max_col_diff(a.clip.frames, g.frames, rotation_columns(motif_joints())) == 0.0);
      CHECK(a.text != "stand still");
    } else {
      CHECK(a.clip.source == motion::ClipSource::gesture);
      CHECK(a.text == "stand still");
    }
    CHECK(a.clip.emotion == m.entries[i].gesture.emotion);
  }
}

TEST_CASE("corpus directory layout") {
  const auto dir = std::filesystem::temp_directory_path() / "cogest_synth_corpus";
  std::filesystem::remove_all(dir);
  const auto m = gen_dataset(3, 8);
  write_corpus(dir, m);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  for (const auto& e : m.entries) {
    CHECK(std::filesystem::exists(dir / "audio" / (e.id + ".wav")));
    const auto clip = motion::load_clip(dir / "clips" / e.id);
    CHECK(clip.frames == realize(e).clip.frames);
  }
  std::filesystem::remove_all(dir);
}
