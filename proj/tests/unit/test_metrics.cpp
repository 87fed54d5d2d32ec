#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <set>

#include <Eigen/Eigenvalues>

#include "cogest/core/schema.hpp"
#include "cogest/metrics/metrics.hpp"

using namespace cogest;
using namespace cogest::metrics;

namespace {

constexpr int kW = motion::layout::kWidth;

GaussianStats random_stats(Rng& rng, int d) {
  GaussianStats g;
  g.mean = rng.normal_matrix<double>(d, 1);
  const MatrixXd a = rng.normal_matrix<double>(d, d);
  g.cov = a * a.transpose() / d + 0.1 * MatrixXd::Identity(d, d);
  return g;
}

// tr((Sa Sb)^{1/2}) through the eigenvalues of the non-symmetric product.
double frechet_oracle(const GaussianStats& a, const GaussianStats& b) {
  const Eigen::EigenSolver<MatrixXd> es(a.cov * b.cov);
  double root = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) root += std::sqrt(es.eigenvalues()(i)).real();
  return (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2 * root;
}

synth::CorpusManifest gesture_corpus(int n, int duration, std::uint64_t seed) {
  synth::CorpusManifest m;
  m.seed = seed;
  for (int i = 0; i < n; ++i) {
    synth::CorpusEntry e;
    e.id = "m" + std::to_string(i);
    e.gesture = synth::random_gesture_spec(mix_seed(seed, static_cast<std::uint64_t>(i)));
    e.gesture.emotion = i % emotion::kClasses;
    e.gesture.duration = duration;
    m.entries.push_back(e);
  }
  return m;
}

std::vector<int> range(int lo, int hi) {
  std::vector<int> v;
  for (int i = lo; i < hi; ++i) v.push_back(i);
  return v;
}

ExtractorConfig small_extractor(int steps) {
  ExtractorConfig c;
  c.hidden = 64;
  c.bottleneck = 32;
  c.steps = steps;
  c.batch = 8;
  c.lr = 2e-3;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("Frechet distance oracles") {
  Rng rng(1);
  const GaussianStats a = random_stats(rng, 6), b = random_stats(rng, 6);
  CHECK(frechet_distance(a, a) < 1e-8);
  CHECK(frechet_distance(a, b) == doctest::Approx(frechet_oracle(a, b)).epsilon(1e-9));
  CHECK(frechet_distance(a, b) == doctest::Approx(frechet_distance(b, a)).epsilon(1e-9));

  // 1-D: (m1 - m2)^2 + (s1 - s2)^2
  GaussianStats p, q;
  p.mean = VectorXd::Constant(1, 0.7);
  p.cov = MatrixXd::Constant(1, 1, 2.25);
  q.mean = VectorXd::Constant(1, -0.3);
  q.cov = MatrixXd::Constant(1, 1, 0.16);
  CHECK(std::abs(frechet_distance(p, q) - (1.0 + (1.5 - 0.4) * (1.5 - 0.4))) < 1e-8);

  // diagonal covariances reduce to a per-dimension sum
  GaussianStats da, db;
  da.mean = VectorXd::Zero(3);
  db.mean = VectorXd::Ones(3);
  da.cov = VectorXd(Eigen::Vector3d(1, 4, 9)).asDiagonal();
  db.cov = VectorXd(Eigen::Vector3d(4, 4, 1)).asDiagonal();
  CHECK(std::abs(frechet_distance(da, db) - (3.0 + 1 + 0 + 4)) < 1e-10);

  CHECK_THROWS_AS(frechet_distance(a, random_stats(rng, 5)), ShapeError);
  CHECK_THROWS_AS(fit_gaussian(MatrixXd::Ones(1, 3)), DataError);
  const GaussianStats fit = fit_gaussian((MatrixXd(3, 2) << 1, 2, 3, 4, 5, 9).finished());
  CHECK(fit.mean(1) == doctest::Approx(5.0));
  CHECK(fit.cov(0, 0) == doctest::Approx(4.0));
  CHECK(fit.cov(0, 1) == doctest::Approx(7.0));
}

TEST_CASE("FGD in raw and feature space") {
  audio::LogMelProvider mel;
  const int frames = 60;
  data::SynthExampleSet items(gesture_corpus(160, frames, 41), data::synth_vocabulary(), mel, frames);
  items.set_standardizer(items.fit_standardizer());
  const ClipSet a = ClipSet::from_examples(items, range(0, 80));
  const ClipSet b = ClipSet::from_examples(items, range(80, 160));
  ClipSet noisy = b;
  noisy.x = Rng(2).normal_matrix<float>(noisy.x.rows(), kW);

  CHECK(fgd(a, a, FgdSpace::raw) < 1e-6);
  // rank-deficient covariances (10 clips in 994 dims) keep the identity exact
  const ClipSet few = ClipSet::from_examples(items, range(0, 10));
  CHECK(fgd(few, few, FgdSpace::raw) < 1e-6);
  const double split = fgd(a, b, FgdSpace::raw);
  const double corrupted = fgd(a, noisy, FgdSpace::raw);
  MESSAGE("raw split " << split << " noisy " << corrupted);
  CHECK(corrupted >= 5 * split);
  CHECK_THROWS_AS(fgd(a, b, FgdSpace::feature), DependencyError);

  // padded frames are ignored by the temporal mean
  ClipSet padded = a;
  for (int i = 0; i < padded.size(); ++i) {
    padded.mask[static_cast<std::size_t>(i * frames + frames - 1)] = 0;
    padded.x.row(i * frames + frames - 1).setConstant(100);
  }
  ClipSet cut = a;
  for (int i = 0; i < cut.size(); ++i) cut.mask[static_cast<std::size_t>(i * frames + frames - 1)] = 0;
  CHECK((raw_features(padded) - raw_features(cut)).cwiseAbs().maxCoeff() < 1e-9);

  FeatureExtractor fx(small_extractor(300));
  const ExtractorReport rep = train_extractor(fx, a);
  MESSAGE("extractor reconstruction " << rep.reconstruction);
  CHECK(fgd(a, a, FgdSpace::feature, &fx) < 1e-6);
  const double fsplit = fgd(a, b, FgdSpace::feature, &fx);
  const double fnoisy = fgd(a, noisy, FgdSpace::feature, &fx);
  MESSAGE("feature split " << fsplit << " noisy " << fnoisy);
  CHECK(fnoisy >= 5 * fsplit);
  CHECK(fx.features(a).cols() == 32);

  const auto path = std::filesystem::temp_directory_path() / "cogest_fx.ckpt";
  save_extractor(path, fx, rep);
  const auto back = load_extractor(path);
  CHECK(back->features(b) == fx.features(b));
  std::filesystem::remove(path);
}

TEST_CASE("extractor overfits a few clips") {
  Rng rng(3);
  ClipSet c;
  c.frames = 12;
  c.x = rng.normal_matrix<float>(4 * 12, kW) * 0.5f;
  c.mask.assign(48, 1.0f);
  ExtractorConfig cfg = small_extractor(600);
  cfg.batch = 4;
  cfg.max_error = 1e-2;
  FeatureExtractor fx(cfg);
  const ExtractorReport rep = train_extractor(fx, c);
  MESSAGE("overfit reconstruction " << rep.reconstruction);
  CHECK(rep.reconstruction < 1e-2);

  ExtractorConfig untrained = small_extractor(0);
  untrained.max_error = 1e-3;
  FeatureExtractor fresh(untrained);
  CHECK_THROWS_AS(train_extractor(fresh, c), TrainingFailure);
  CHECK_THROWS_AS(FeatureExtractor(small_extractor(-1)), UsageError);
}

TEST_CASE("emotion scores and hand masking") {
  const std::vector<int> pred{0, 3, 3, 7, 1, 3}, truth{0, 2, 3, 7, 5, 3}, target{3, 3, 3, 1, 1, 0};
  int ea = 0, ec = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == truth[i]) ++ea;
    if (pred[i] == target[i]) ++ec;
  }
  const EmotionScores s = emotion_scores(pred, truth, target);
  CHECK(s.ea == doctest::Approx(ea / 6.0));
  CHECK(s.ec == doctest::Approx(ec / 6.0));
  CHECK(s.ea == doctest::Approx(4 / 6.0));
  CHECK(s.ec == doctest::Approx(3 / 6.0));
  CHECK_THROWS_AS(emotion_scores({}, {}, {}), UsageError);
  CHECK_THROWS_AS(emotion_scores(pred, truth, {1}), ShapeError);

  emotion::ClassifierConfig cc;
  cc.width = 8;
  cc.layers = 1;
  cc.heads = 2;
  cc.time_conditioned = false;
  const emotion::EmotionClassifier<float> clf(cc, 1);
  Rng rng(4);
  ClipSet c;
  c.frames = 6;
  c.x = rng.normal_matrix<float>(20 * 6, kW);
  const auto labels = classify(clf, c);
  CHECK(labels.size() == 20);
  for (int l : labels) CHECK(l == 0);  // zero head: all logits tie
  cc.time_conditioned = true;
  CHECK_THROWS_AS(classify(emotion::EmotionClassifier<float>(cc, 1), c), UsageError);

  const auto& cols = hand_columns();
  CHECK(cols.size() == 30 * (6 + 3 + 3 + 6));
  const std::set<int> keep(cols.begin(), cols.end());
  const ClipSet h = hands_only(c);
  for (int col = 0; col < kW; ++col) {
    if (keep.count(col)) {
      CHECK(h.x.col(col) == c.x.col(col));
    } else {
      CHECK(h.x.col(col).isZero());
    }
  }
}

TEST_CASE("semantic alignment") {
  align::AlignConfig cfg;
  cfg.latent = 16;
  cfg.hidden = 16;
  cfg.text_width = 8;
  cfg.vocab = 12;
  const align::AlignmentModel<float> m(cfg, 7);
  Rng rng(5);
  ClipSet c;
  c.frames = 5;
  c.x = rng.normal_matrix<float>(20 * 5, kW);
  std::vector<std::vector<int>> ids;
  for (int i = 0; i < 20; ++i) ids.push_back({2 + i % 9, 3 + i % 7, 4});
  const auto sa = semantic_alignment(m, c, ids);
  REQUIRE(sa.size() == 20);
  const MatrixXf g = m.encode_gesture(c.x, 5, {});
  const MatrixXf t = m.encode_transcript(ids);
  for (int i = 0; i < 20; ++i) {
    const double oracle = g.row(i).cast<double>().normalized().dot(t.row(i).cast<double>().normalized());
    CHECK(sa[static_cast<std::size_t>(i)] == doctest::Approx(oracle).epsilon(1e-6));
    CHECK(std::abs(sa[static_cast<std::size_t>(i)]) <= 1.0 + 1e-12);
  }
  CHECK_THROWS_AS(semantic_alignment(m, c, {{1}}), ShapeError);

  const RowVectorXd u = rng.normal_matrix<double>(1, 16), v = rng.normal_matrix<double>(1, 16);
  CHECK(code_cosine(u, u) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(code_cosine(3.5 * u, 0.02 * v) == doctest::Approx(code_cosine(u, v)).epsilon(1e-12));
  CHECK(code_cosine(u, -u) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK_THROWS_AS(code_cosine(u, RowVectorXd::Zero(16)), NumericalError);
}

TEST_CASE("metric report serialization") {
  MetricReport r;
  r.fgd_raw = 1.5;
  r.sa = 0.3;
  r.ea = 0.5;
  r.ec = 0.25;
  r.real_count = 10;
  r.generated_count = 10;
  r.config_hash = "abc";
  r.checkpoints["gdm"] = "h1";
  CHECK(validate_schema(r.to_json(), MetricReport::schema()).empty());
  auto bad = r.to_json();
  bad["ea"] = 1.5;
  CHECK(!validate_schema(bad, MetricReport::schema()).empty());
  bad = r.to_json();
  bad.erase("sa");
  CHECK(!validate_schema(bad, MetricReport::schema()).empty());
  CHECK(r.to_json()["fgd_feature"].is_null());

  const auto count = [](const std::string& s) { return std::count(s.begin(), s.end(), ','); };
  CHECK(count(MetricReport::csv_header()) == count(r.csv_row("x")));
  CHECK(r.csv_row("x").rfind("x,1.5,,0.3,", 0) == 0);
  CHECK(r.table().find("ec") != std::string::npos);
}
