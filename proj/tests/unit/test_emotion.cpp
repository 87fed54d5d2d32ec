#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "cogest/core/log.hpp"
#include "cogest/emotion/classifier.hpp"

using namespace cogest;
using namespace cogest::emotion;
using nn::Var;

namespace {

constexpr int kW = motion::layout::kWidth;

ClassifierConfig tiny(bool timed = true) {
  ClassifierConfig c;
  c.width = 8;
  c.layers = 1;
  c.heads = 2;
  c.time_conditioned = timed;
  return c;
}

template <typename S>
void randomize(EmotionClassifier<S>& clf, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  for (const auto& [_, cv] : clf.params().entries()) {
    Var<S> v = cv;
    v.mutable_value() += rng.normal_matrix<S>(v.rows(), v.cols()) * static_cast<S>(scale);
  }
}

// Labels only; frames are never requested.
class LabelSet : public data::ExampleSet {
 public:
  explicit LabelSet(int n) : n_(n) {}
  int size() const override { return n_; }
  data::Example get(int) const override { throw UsageError("labels only"); }
  int emotion(int i) const override { return i % kClasses; }

 private:
  int n_;
};

// Same clips with labels permuted by a fixed seed.
class ShuffledLabels : public data::ExampleSet {
 public:
  explicit ShuffledLabels(const data::ExampleSet& base) : base_(base) {
    for (int i = 0; i < base.size(); ++i) labels_.push_back(base.emotion(i));
    Rng rng(1234);
    std::shuffle(labels_.begin(), labels_.end(), rng.engine());
  }
  int size() const override { return base_.size(); }
  data::Example get(int i) const override {
    auto e = base_.get(i);
    e.emotion = labels_[static_cast<std::size_t>(i)];
    return e;
  }
  int emotion(int i) const override { return labels_[static_cast<std::size_t>(i)]; }

 private:
  const data::ExampleSet& base_;
  std::vector<int> labels_;
};

synth::CorpusManifest gesture_corpus(int n, int duration, std::uint64_t seed) {
  synth::CorpusManifest m;
  m.seed = seed;
  for (int i = 0; i < n; ++i) {
    synth::CorpusEntry e;
    e.id = "c" + std::to_string(i);
    e.gesture = synth::random_gesture_spec(mix_seed(seed, static_cast<std::uint64_t>(i)));
    e.gesture.emotion = i % kClasses;
    e.gesture.duration = duration;
    m.entries.push_back(e);
  }
  return m;
}

double log_prob(const EmotionClassifier<double>& clf, const MatrixXd& x, int frames, int t, int target) {
  const MatrixXd l = clf.predict_logits(x, frames, {t});
  const double m = l.maxCoeff();
  return l(0, target) - m - std::log((l.array() - m).exp().sum());
}

}  // namespace

TEST_CASE("classifier outputs") {
  EmotionClassifier<double> clf(tiny(), 1);
  Rng rng(2);
  const MatrixXd x = rng.normal_matrix<double>(2 * 6, kW);
  const MatrixXd zero_head = clf.predict_logits(x, 6, {3, 40});
  CHECK(zero_head.rows() == 2);
  CHECK(zero_head.cols() == kClasses);
  CHECK(zero_head.cwiseAbs().maxCoeff() == 0.0);
  // zero-initialized head: uniform prediction, loss ln 8
  const std::vector<int> labels{1, 5};
  CHECK(nn::softmax_cross_entropy(nn::constant(zero_head), std::span<const int>(labels)).item() == doctest::Approx(std::log(8.0)).epsilon(1e-12));

  randomize(clf, 3);
  const MatrixXd l = clf.predict_logits(x, 6, {3, 40});
  CHECK(l.allFinite());
  CHECK(l == clf.predict_logits(x, 6, {3, 40}));
  CHECK(l != clf.predict_logits(x, 6, {4, 40}));
  for (Eigen::Index r = 0; r < 2; ++r) {
    const Eigen::ArrayXd p = (l.row(r).array() - l.row(r).maxCoeff()).exp();
    CHECK(std::abs((p / p.sum()).sum() - 1.0) < 1e-6);
  }
  // masked frames do not matter when a pooled window is fully masked
  std::vector<float> mask(12, 1.0f);
  std::fill(mask.begin() + 3, mask.begin() + 6, 0.0f);
  MatrixXd y = x;
  y.middleRows(3, 3).setConstant(9.0);
  CHECK((clf.predict_logits(x, 6, {3, 40}, mask) - clf.predict_logits(y, 6, {3, 40}, mask)).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(clf.predict_logits(x, 4, {3, 40, 1}), ShapeError);
  CHECK_THROWS_AS(clf.predict_logits(x, 6, {3}), ShapeError);
  EmotionClassifier<double> clean(tiny(false), 1);
  CHECK(clean.predict_logits(x, 6, {}).rows() == 2);
}

TEST_CASE("noisy pair dataset") {
  const auto s = diffusion::NoiseSchedule::make(100);
  const LabelSet labels(100);
  const auto a = noisy_pair_dataset(labels, s, 7, 100);
  const auto b = noisy_pair_dataset(labels, s, 7, 100);
  REQUIRE(a.size() == 10000);
  CHECK(std::equal(a.begin(), a.end(), b.begin(), [](const NoisyPair& p, const NoisyPair& q) {
    return p.t == q.t && p.noise_seed == q.noise_seed && p.item == q.item && p.label == q.label;
  }));
  std::vector<int> counts(10, 0);
  for (const auto& p : a) {
    CHECK(p.t >= 1);
    CHECK(p.t <= 100);
    counts[static_cast<std::size_t>((p.t - 1) / 10)]++;
    CHECK(p.label == p.item % kClasses);
  }
  for (int c : counts) CHECK(std::abs(c - 1000) <= 50);
  // odd pass sizes still spread evenly
  std::vector<int> odd(10, 0);
  for (const auto& p : noisy_pair_dataset(LabelSet(37), s, 3, 270)) odd[static_cast<std::size_t>((p.t - 1) / 10)]++;
  for (int c : odd) CHECK(std::abs(c - 999) <= 50);
  CHECK(noisy_pair_dataset(labels, s, 8, 1).front().noise_seed != a.front().noise_seed);

  // lowest noise level stays within the closed-form scale
  Rng rng(9);
  const MatrixXf x0 = rng.normal_matrix<float>(30, kW);
  NoisyPair p = a.front();
  p.t = 1;
  const MatrixXf xt = materialize(p, x0, s);
  CHECK(xt == materialize(p, x0, s));
  const double scale = std::sqrt(1 - s.alpha_bar(1));
  CHECK((xt - x0).cwiseAbs().maxCoeff() < 6 * scale + 1e-4 * x0.cwiseAbs().maxCoeff());
}

TEST_CASE("guidance gradient and step") {
  const auto s = diffusion::NoiseSchedule::make(100);
  EmotionClassifier<double> clf(tiny(), 4);
  randomize(clf, 5);
  Rng rng(6);
  const int frames = 6;

  // directional finite difference of the target log-probability
  double worst = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const MatrixXd x = rng.normal_matrix<double>(frames, kW);
    const MatrixXd dir = rng.normal_matrix<double>(frames, kW).normalized();
    const int t = rng.uniform_int(1, 100), y = rng.uniform_int(0, 7);
    const MatrixXd g = target_log_prob_grad(clf, x, frames, t, {y});
    const double h = 1e-5;
    const double fd = (log_prob(clf, MatrixXd(x + h * dir), frames, t, y) - log_prob(clf, MatrixXd(x - h * dir), frames, t, y)) / (2 * h);
    const double an = (g.array() * dir.array()).sum();
    worst = std::max(worst, std::abs(fd - an) / std::max(1e-8, std::abs(fd) + std::abs(an)));
  }
  CHECK(worst < 1e-4);
  // parameters are left without gradients
  for (const auto& [_, v] : clf.params().entries()) CHECK(!v.has_grad());

  const MatrixXd x = rng.normal_matrix<double>(2 * frames, kW);
  GuidanceConfig cfg;
  cfg.alpha = 0;
  CHECK(guidance_step(clf, x, frames, 10, {1, 2}, cfg, 100) == x);
  cfg.alpha = 50;
  CHECK(guidance_step(clf, x, frames, 81, {1, 2}, cfg, 100) == x);  // default range ends at 0.8 T
  CHECK(guidance_step(clf, x, frames, 80, {1, 2}, cfg, 100) != x);
  CHECK(cfg.range(100) == std::pair<int, int>{1, 80});
  GuidanceConfig bad;
  bad.t_lo = 50;
  bad.t_hi = 20;
  CHECK_THROWS_AS(bad.range(100), UsageError);
  bad = {};
  bad.alpha = -1;
  CHECK_THROWS_AS(bad.range(100), UsageError);

  // first-order ascent over random states
  int ok = 0;
  cfg.alpha = 1e-3;
  for (int i = 0; i < 100; ++i) {
    const MatrixXd xi = rng.normal_matrix<double>(frames, kW);
    const int t = rng.uniform_int(1, 80), y = rng.uniform_int(0, 7);
    const MatrixXd stepped = guidance_step(clf, xi, frames, t, {y}, cfg, 100);
    ok += log_prob(clf, stepped, frames, t, y) >= log_prob(clf, xi, frames, t, y);
  }
  CHECK(ok == 100);
}

TEST_CASE("guide hook checks the schedule and skips bad steps") {
  const auto s = diffusion::NoiseSchedule::make(20);
  auto clf = std::make_shared<EmotionClassifier<float>>(tiny(), 7);
  randomize(*clf, 8);
  const EmotionGuide guide(clf, s.hash(), {});
  CHECK_THROWS_AS(guide.hook(diffusion::NoiseSchedule::make(30), 6, {0}), DependencyError);
  const auto fn = guide.hook(s, 6, {3});
  MatrixXf x = Rng(1).normal_matrix<float>(6, kW);
  CHECK(fn(x, 5) != x);
  CHECK(fn(x, 0) == x);
  x(0, 0) = std::nanf("");
  int warnings = 0;
  auto prev = set_log_sink([&](LogLevel l, const std::string&) { warnings += l == LogLevel::warning; });
  const MatrixXf out = fn(x, 5);
  set_log_sink(prev);
  CHECK(warnings == 1);
  CHECK(out.block(1, 0, 5, kW) == x.block(1, 0, 5, kW));
  CHECK_THROWS_AS(EmotionGuide(std::make_shared<EmotionClassifier<float>>(tiny(false), 1), s.hash(), {}), UsageError);
}

TEST_CASE("classifier training on synthetic clips") {
  const diffusion::NoiseSchedule s(diffusion::ScheduleConfig::scaled_linear(100));
  audio::LogMelProvider mel;
  const int duration = 60;
  data::SynthExampleSet items(gesture_corpus(480, duration, 21), data::synth_vocabulary(), mel, duration);
  items.set_standardizer(items.fit_standardizer());

  ClassifierConfig cc;
  cc.width = 64;
  ClassifierTrainConfig tc;
  tc.steps = 400;
  tc.holdout = 0.2;

  // single-batch overfit
  {
    EmotionClassifier<float> clf(cc, 30);
    std::vector<int> idx(16);
    std::iota(idx.begin(), idx.end(), 0);
    MatrixXf x(16 * duration, kW);
    std::vector<int> labels, ts(16, 1);
    for (int i = 0; i < 16; ++i) {
      const auto e = items.get(i);
      x.middleRows(i * duration, duration) = e.x;
      labels.push_back(e.emotion);
    }
    nn::Adam<float> opt(clf.params(), {.lr = 1e-3});
    int steps = 0;
    double acc = 0;
    for (; steps < 500 && acc < 1.0; ++steps) {
      nn::backward(nn::softmax_cross_entropy(clf.logits(nn::constant(x), duration, ts), std::span<const int>(labels)));
      opt.step();
      const MatrixXf l = clf.predict_logits(x, duration, ts);
      int hits = 0;
      for (int i = 0; i < 16; ++i) {
        Eigen::Index best;
        l.row(i).maxCoeff(&best);
        hits += best == labels[static_cast<std::size_t>(i)];
      }
      acc = hits / 16.0;
    }
    MESSAGE("overfit in " << steps << " steps");
    CHECK(acc == 1.0);
  }

  EmotionClassifier<float> clf(cc, 31);
  const ClassifierReport rep = train_classifier(clf, items, &s, tc);
  std::string deciles;
  for (double a : rep.decile_accuracy) deciles += std::to_string(a).substr(0, 5) + " ";
  MESSAGE("decile accuracy " << deciles);
  REQUIRE(rep.decile_accuracy.size() == 10);
  CHECK(rep.decile_accuracy.front() >= 0.9);
  CHECK(rep.decile_accuracy.front() > rep.decile_accuracy.back());
  // decreasing on average: first half beats second half
  const double early = std::accumulate(rep.decile_accuracy.begin(), rep.decile_accuracy.begin() + 5, 0.0);
  const double late = std::accumulate(rep.decile_accuracy.begin() + 5, rep.decile_accuracy.end(), 0.0);
  CHECK(early > late);

  // checkpoint round trip
  const auto path = std::filesystem::temp_directory_path() / "cogest_test_emotion.ckpt";
  save_classifier(path, clf, &s, rep);
  const auto loaded = load_classifier(path);
  CHECK(loaded.schedule_hash == s.hash());
  const auto e = items.get(0);
  CHECK(loaded.model->predict_logits(e.x, duration, {5}) == clf.predict_logits(e.x, duration, {5}));
  std::filesystem::remove(path);

  // clean classifier
  EmotionClassifier<float> clean(tiny(false), 32);
  CHECK_THROWS_AS(train_classifier(clean, items, &s, tc), UsageError);
  ClassifierConfig ccl = cc;
  ccl.time_conditioned = false;
  EmotionClassifier<float> clean2(ccl, 33);
  auto tcc = tc;
  tcc.steps = 200;
  const auto crep = train_classifier(clean2, items, nullptr, tcc);
  MESSAGE("clean accuracy " << crep.accuracy);
  CHECK(crep.accuracy >= 0.9);
  CHECK(crep.decile_accuracy.empty());

  // label-shuffled control stays at chance and trips the failure check
  ShuffledLabels shuffled(items);
  EmotionClassifier<float> control(cc, 34);
  CHECK_THROWS_AS(train_classifier(control, shuffled, &s, tc), TrainingFailure);
  data::SynthExampleSet fresh(gesture_corpus(200, duration, 22), data::synth_vocabulary(), mel, duration);
  fresh.set_standardizer(*items.standardizer());
  ShuffledLabels fresh_shuffled(fresh);
  std::vector<int> all(static_cast<std::size_t>(fresh.size()));
  std::iota(all.begin(), all.end(), 0);
  const auto ctrl = decile_accuracy(control, fresh_shuffled, all, s, 5);
  const double mean_acc = std::accumulate(ctrl.begin(), ctrl.end(), 0.0) / 10;
  MESSAGE("control accuracy " << mean_acc);
  CHECK(std::abs(mean_acc - 0.125) <= 0.05);
}
