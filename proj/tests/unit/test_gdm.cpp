#include <doctest.h>

#include <filesystem>
#include <numeric>

#include "cogest/model/gdm.hpp"
#include "cogest/motion/unified.hpp"

using namespace cogest;
using namespace cogest::model;
using nn::Var;

namespace {

constexpr int kW = motion::layout::kWidth;

DenoiserConfig tiny_config() {
  auto c = DenoiserConfig::preset("tiny");
  c.frames = 12;
  c.seed_frames = 4;
  c.audio_dim = 6;
  c.semantic_dim = 8;
  c.vocab = 16;
  return c;
}

data::Batch random_batch(int b, int frames, int audio_dim, std::uint64_t seed) {
  Rng rng(seed);
  data::Batch out;
  out.size = b;
  out.frames = frames;
  out.x0 = rng.normal_matrix<float>(b * frames, kW);
  out.mask.assign(static_cast<std::size_t>(b * frames), 1.0f);
  out.audio = rng.normal_matrix<float>(b * frames, audio_dim);
  out.audio_null.assign(static_cast<std::size_t>(b), 0);
  for (int i = 0; i < b; ++i) {
    out.text.push_back({2 + i, 3, 4 + i});
    out.transcript.push_back({5, 6 + i});
    out.emotion.push_back(i % 8);
  }
  return out;
}

template <typename S>
ConditionInput<S> full_conditions(const data::Batch& b, const DenoiserConfig& cfg, int t) {
  auto in = batch_conditions<S>(b, cfg, {});
  in.t.assign(static_cast<std::size_t>(b.size), t);
  Rng rng(77);
  in.semantic = rng.normal_matrix<S>(b.size, cfg.semantic_dim);
  in.semantic_null.assign(static_cast<std::size_t>(b.size), 0);
  return in;
}

GdmDraws no_dropout(const data::Batch& b, const diffusion::NoiseSchedule& s, std::uint64_t seed) {
  Rng rng(seed);
  GdmDraws d;
  for (int i = 0; i < b.size; ++i) d.t.push_back(rng.uniform_int(1, s.steps()));
  d.eps = rng.normal_matrix<double>(b.x0.rows(), b.x0.cols());
  d.seed_null.assign(static_cast<std::size_t>(b.size), 0);
  d.text_null = d.audio_null = d.semantic_null = d.seed_null;
  return d;
}

}  // namespace

TEST_CASE("denoiser output shape and determinism") {
  const auto cfg = tiny_config();
  Denoiser<float> a(cfg, 5), b(cfg, 5), c(cfg, 6);
  const auto batch = random_batch(3, cfg.frames, cfg.audio_dim, 1);
  const auto in = full_conditions<float>(batch, cfg, 7);
  const MatrixXf xt = Rng(2).normal_matrix<float>(3 * cfg.frames, kW);
  const MatrixXf ya = a.predict(xt, in);
  CHECK(ya.rows() == 3 * cfg.frames);
  CHECK(ya.cols() == kW);
  CHECK(ya.allFinite());
  CHECK(ya == b.predict(xt, in));
  CHECK(ya != c.predict(xt, in));
  CHECK_THROWS_AS(a.predict(MatrixXf::Zero(3 * cfg.frames, 10), in), ShapeError);
}

TEST_CASE("items in a batch do not interact") {
  const auto cfg = tiny_config();
  Denoiser<float> m(cfg, 3);
  const int n = cfg.frames;
  const auto batch = random_batch(2, n, cfg.audio_dim, 4);
  auto in = full_conditions<float>(batch, cfg, 9);
  in.t = {9, 40};
  const MatrixXf xt = Rng(5).normal_matrix<float>(2 * n, kW);
  const MatrixXf y = m.predict(xt, in);

  // swapped order
  auto sw = in;
  sw.t = {40, 9};
  sw.seed.topRows(cfg.seed_frames) = in.seed.bottomRows(cfg.seed_frames);
  sw.seed.bottomRows(cfg.seed_frames) = in.seed.topRows(cfg.seed_frames);
  std::swap(sw.text[0], sw.text[1]);
  sw.audio.topRows(n) = in.audio.bottomRows(n);
  sw.audio.bottomRows(n) = in.audio.topRows(n);
  sw.semantic.row(0) = in.semantic.row(1);
  sw.semantic.row(1) = in.semantic.row(0);
  MatrixXf xs(2 * n, kW);
  xs.topRows(n) = xt.bottomRows(n);
  xs.bottomRows(n) = xt.topRows(n);
  const MatrixXf ys = m.predict(xs, sw);
  CHECK((ys.topRows(n) - y.bottomRows(n)).cwiseAbs().maxCoeff() < 1e-5);
  CHECK((ys.bottomRows(n) - y.topRows(n)).cwiseAbs().maxCoeff() < 1e-5);

  // one item alone
  auto one = ConditionInput<float>::empty(1, n, cfg);
  one.t = {9};
  one.seed = in.seed.topRows(cfg.seed_frames);
  one.seed_null = {0};
  one.text = {in.text[0]};
  one.text_null = {0};
  one.audio = in.audio.topRows(n);
  one.audio_null = {0};
  one.semantic = in.semantic.topRows(1);
  one.semantic_null = {0};
  CHECK((m.predict(xt.topRows(n), one) - y.topRows(n)).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("null conditions ignore their payload") {
  auto cfg = tiny_config();
  cfg.w_sem_fingers = cfg.w_sem_limbs = 0;
  Denoiser<float> m(cfg, 8);
  const auto batch = random_batch(2, cfg.frames, cfg.audio_dim, 6);
  const MatrixXf xt = Rng(7).normal_matrix<float>(2 * cfg.frames, kW);

  // zero semantic gains: output does not depend on the code
  auto in = full_conditions<float>(batch, cfg, 20);
  const MatrixXf y = m.predict(xt, in);
  in.semantic = Rng(8).normal_matrix<float>(2, cfg.semantic_dim) * 10.0f;
  CHECK((m.predict(xt, in) - y).cwiseAbs().maxCoeff() == 0.0f);
  in.semantic_null = {1, 1};
  CHECK((m.predict(xt, in) - y).cwiseAbs().maxCoeff() < 1e-5);

  // nulled text equals a missing description, whatever the ids
  Denoiser<float> d(tiny_config(), 8);
  auto a = full_conditions<float>(batch, tiny_config(), 20);
  a.text_null = {1, 1};
  auto b = a;
  b.text = {{9, 9, 9}, {}};
  CHECK(d.predict(xt, a) == d.predict(xt, b));
  a.audio_null = {1, 1};
  b.audio_null = {1, 1};
  b.audio.setRandom();
  CHECK(d.predict(xt, a) == d.predict(xt, b));
  a.seed_null = {1, 1};
  b.seed_null = {1, 1};
  b.seed.setRandom();
  CHECK(d.predict(xt, a) == d.predict(xt, b));
}

TEST_CASE("condition contracts") {
  const auto cfg = tiny_config();
  Denoiser<float> m(cfg, 1);
  const int n = cfg.frames;
  auto in = ConditionInput<float>::empty(2, n, cfg);
  CHECK_THROWS_AS(m.encode_conditions(in, n), ConditionError);
  CHECK_THROWS_AS(in.require_audio_or_text(), ConditionError);

  in.audio_null = {0, 0};
  in.require_audio_or_text();
  const auto bundle = m.encode_conditions(in, n);
  CHECK(bundle.audio_null == std::vector<char>{0, 0});
  CHECK(bundle.text_null == std::vector<char>{1, 1});
  CHECK(bundle.seed_null == std::vector<char>{1, 1});
  CHECK(bundle.semantic_null == std::vector<char>{1, 1});
  CHECK(bundle.prefix.rows() == 4);
  CHECK(bundle.frame_term.rows() == 2 * n);

  // text longer than the token limit is truncated
  std::vector<int> long_text(25);
  std::iota(long_text.begin(), long_text.end(), 0);
  for (auto& id : long_text) id = 2 + id % 14;
  auto t1 = in, t2 = in;
  t1.text = {long_text, long_text};
  t2.text = {std::vector<int>(long_text.begin(), long_text.begin() + text::kMaxTokens),
             std::vector<int>(long_text.begin(), long_text.begin() + text::kMaxTokens)};
  t1.text_null = t2.text_null = {0, 0};
  const MatrixXf xt = Rng(3).normal_matrix<float>(2 * n, kW);
  CHECK(m.predict(xt, t1) == m.predict(xt, t2));
  CHECK(pad_tokens({long_text}).ids.size() == static_cast<std::size_t>(text::kMaxTokens));

  // out-of-vocabulary ids are rejected
  t1.text[0] = {99};
  CHECK_THROWS_AS(m.predict(xt, t1), DataError);

  DenoiserConfig bad = cfg;
  bad.seed_frames = bad.frames;
  CHECK_THROWS_AS(Denoiser<float>(bad, 0), UsageError);
  CHECK_THROWS_AS(DenoiserConfig::preset("huge"), UsageError);
  CHECK(DenoiserConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
}

TEST_CASE("loss gradient matches finite differences") {
  auto cfg = tiny_config();
  cfg.frames = 6;
  cfg.seed_frames = 2;
  cfg.width = 8;
  cfg.text_width = 4;
  Denoiser<double> m(cfg, 21);
  const auto s = diffusion::NoiseSchedule::make(50);
  const auto batch = random_batch(2, cfg.frames, cfg.audio_dim, 22);
  const auto cond = full_conditions<double>(batch, cfg, 1);
  auto draws = no_dropout(batch, s, 23);
  draws.semantic_null = {0, 1};
  draws.seed_null = {1, 0};
  // large delta keeps the objective smooth
  auto loss = [&] { return gdm_loss(m, s, batch, cond, draws, 100.0); };

  m.params().zero_grad();
  nn::backward(loss());
  Rng pick(24);
  const double h = 1e-6;
  double worst = 0;
  int checked = 0;
  for (auto& [name, v] : m.params().entries()) {
    Var<double> p = v;
    if (!p.has_grad()) continue;
    for (int k = 0; k < 3; ++k) {
      const auto i = static_cast<Eigen::Index>(pick.uniform_int(0, static_cast<int>(p.value().size()) - 1));
      const double orig = p.value().data()[i];
      p.mutable_value().data()[i] = orig + h;
      const double up = loss().item();
      p.mutable_value().data()[i] = orig - h;
      const double down = loss().item();
      p.mutable_value().data()[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p.grad().data()[i];
      worst = std::max(worst, std::abs(numeric - analytic) / std::max(1e-4, std::abs(numeric) + std::abs(analytic)));
      ++checked;
    }
  }
  CHECK(checked > 60);
  CHECK(worst < 1e-3);
}

TEST_CASE("fixed batch overfits") {
  const auto cfg = tiny_config();
  Denoiser<float> m(cfg, 31);
  const auto s = diffusion::NoiseSchedule::make(100);
  const auto batch = random_batch(2, cfg.frames, cfg.audio_dim, 32);
  const auto cond = full_conditions<float>(batch, cfg, 1);
  const auto draws = no_dropout(batch, s, 33);
  nn::Adam<float> opt(m.params(), {.lr = 3e-3});
  double first = 0, last = 0;
  for (int i = 0; i < 200; ++i) {
    auto l = gdm_loss(m, s, batch, cond, draws, 1.0);
    nn::backward(l);
    opt.step();
    if (i == 0) first = l.item();
    last = l.item();
  }
  MESSAGE("overfit loss " << first << " -> " << last);
  CHECK(last < 0.1 * first);
}

TEST_CASE("trainer mechanics") {
  const auto cfg = tiny_config();
  const auto s = diffusion::NoiseSchedule::make(100);
  const auto batch = random_batch(2, cfg.frames, cfg.audio_dim, 41);

  // zero learning rate leaves the weights untouched
  Denoiser<float> m(cfg, 40);
  const auto before = m.params().export_values();
  GdmTrainConfig tc;
  tc.adam.lr = 0;
  tc.warmup = 0;
  GdmTrainer<float> tr(m, s, tc);
  for (int i = 0; i < 3; ++i) CHECK(std::isfinite(tr.train_step(batch)));
  CHECK(tr.step() == 3);
  CHECK(m.params().export_values() == before);

  // a perfect x0 prediction has zero objective
  CHECK(nn::masked_huber(nn::constant(MatrixXf(batch.x0)), batch.x0, std::span<const float>(batch.mask), 1.0f).item() == 0.0f);

  // objective equals the masked Huber of a direct prediction
  auto padded = batch;
  for (int f = cfg.frames - 3; f < cfg.frames; ++f) {
    padded.mask[static_cast<std::size_t>(f)] = 0;
    padded.x0.row(f).setConstant(1e3f);
  }
  auto cond = full_conditions<float>(padded, cfg, 1);
  const auto draws = no_dropout(padded, s, 42);
  MatrixXf xt(padded.x0.rows(), kW);
  for (int i = 0; i < 2; ++i) {
    xt.middleRows(i * cfg.frames, cfg.frames) =
        diffusion::q_sample<float>(s, padded.x0.middleRows(i * cfg.frames, cfg.frames), draws.t[static_cast<std::size_t>(i)],
                                   draws.eps.middleRows(i * cfg.frames, cfg.frames).cast<float>());
  }
  cond.t = draws.t;
  const double direct = diffusion::huber_loss<float>(m.predict(xt, cond), padded.x0, padded.mask, 1.0);
  CHECK(gdm_loss(m, s, padded, cond, draws, 1.0).item() == doctest::Approx(direct).epsilon(1e-5));
  CHECK(direct < 10);

  // semantic codes are requested for items with a transcript only
  auto sparse = batch;
  sparse.transcript[1].clear();
  int calls = 0;
  SemanticFn fn = [&](const std::vector<std::vector<int>>& tr) {
    ++calls;
    CHECK(tr.size() == 1);
    return MatrixXf(MatrixXf::Ones(static_cast<Eigen::Index>(tr.size()), cfg.semantic_dim));
  };
  const auto bc = batch_conditions<float>(sparse, cfg, fn);
  CHECK(calls == 1);
  CHECK(bc.semantic_null == std::vector<char>{0, 1});
  CHECK(bc.seed == batch.x0.topRows(cfg.seed_frames));
  SemanticFn wrong = [&](const std::vector<std::vector<int>>& tr) {
    return MatrixXf(MatrixXf::Ones(static_cast<Eigen::Index>(tr.size()), 3));
  };
  CHECK_THROWS_AS(batch_conditions<float>(sparse, cfg, wrong), ShapeError);
}

TEST_CASE("windowed generation") {
  auto cfg = tiny_config();
  Denoiser<float> m(cfg, 50);
  const auto s = diffusion::NoiseSchedule::make(4);
  Rng arng(51);
  ConditionStream stream;
  stream.audio = arng.normal_matrix<float>(cfg.frames, cfg.audio_dim);
  stream.text = {2, 3};

  // one window is exactly the plain sampler
  Rng r1(9), r2(9);
  const MatrixXf w = windowed_generate(m, s, stream, cfg.frames, r1);
  auto in = ConditionInput<float>::empty(1, cfg.frames, cfg);
  in.audio = stream.audio;
  in.audio_null = {0};
  in.text = {stream.text};
  in.text_null = {0};
  CHECK(w == generate<float>(m, s, in, cfg.frames, r2));

  // longer streams are stitched to the requested length
  stream.audio = arng.normal_matrix<float>(30, cfg.audio_dim);
  Rng r3(10), r4(10);
  const MatrixXf long_out = windowed_generate(m, s, stream, 30, r3);
  CHECK(long_out.rows() == 30);
  CHECK(long_out.cols() == kW);
  CHECK(long_out.allFinite());
  CHECK(long_out == windowed_generate(m, s, stream, 30, r4));
  CHECK_THROWS_AS(windowed_generate(m, s, stream, 31, r4), ShapeError);

  ConditionStream nothing;
  CHECK_THROWS_AS(windowed_generate(m, s, nothing, 30, r4), ConditionError);
}

TEST_CASE("checkpoint resume reproduces training") {
  const auto cfg = tiny_config();
  const auto s = diffusion::NoiseSchedule::make(100);
  text::Vocabulary vocab;
  for (int i = 0; i < cfg.vocab - 2; ++i) vocab.add("w" + std::to_string(i));
  const auto b1 = random_batch(2, cfg.frames, cfg.audio_dim, 61);
  const auto b2 = random_batch(2, cfg.frames, cfg.audio_dim, 62);
  GdmTrainConfig tc;
  tc.warmup = 3;
  tc.seed = 5;
  const auto path = std::filesystem::temp_directory_path() / "cogest_test_gdm.ckpt";

  Denoiser<float> m(cfg, 60);
  GdmTrainer<float> tr(m, s, tc);
  for (int i = 0; i < 3; ++i) tr.train_step(b1);
  save_gdm(path, m, s, std::nullopt, vocab, &tr);
  std::vector<double> expected;
  for (int i = 0; i < 3; ++i) expected.push_back(tr.train_step(i % 2 ? b1 : b2));

  auto loaded = load_gdm(path);
  CHECK(loaded.model->config().to_json() == cfg.to_json());
  CHECK(loaded.schedule.hash() == s.hash());
  CHECK(loaded.vocab.size() == vocab.size());
  CHECK(!loaded.stats);
  GdmTrainer<float> resumed(*loaded.model, loaded.schedule, tc);
  restore_trainer(loaded.raw, resumed);
  CHECK(resumed.step() == 3);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(resumed.train_step(i % 2 ? b1 : b2) - expected[static_cast<std::size_t>(i)]) < 1e-6);
  std::filesystem::remove(path);

  GdmTrainConfig bad;
  CHECK_THROWS_AS(GdmTrainConfig::from_json({{"batch", 0}}), UsageError);
  CHECK(GdmTrainConfig::from_json(bad.to_json()).to_json() == bad.to_json());
}
