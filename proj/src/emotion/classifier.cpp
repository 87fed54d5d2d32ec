#include "cogest/emotion/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "cogest/core/log.hpp"
#include "cogest/model/encoders.hpp"
#include "cogest/motion/unified.hpp"

namespace cogest::emotion {

void ClassifierConfig::validate() const {
  if (width < 1 || heads < 1 || width % heads != 0) throw UsageError("classifier width must be a positive multiple of heads");
  if (layers < 0 || ff_mult < 1 || pool < 1) throw UsageError("bad classifier shape");
}

nlohmann::json ClassifierConfig::to_json() const {
  return {{"width", width}, {"layers", layers}, {"heads", heads}, {"ff_mult", ff_mult}, {"pool", pool}, {"time_conditioned", time_conditioned}};
}

ClassifierConfig ClassifierConfig::from_json(const nlohmann::json& j) {
  ClassifierConfig c;
  c.width = j.value("width", c.width);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.ff_mult = j.value("ff_mult", c.ff_mult);
  c.pool = j.value("pool", c.pool);
  c.time_conditioned = j.value("time_conditioned", c.time_conditioned);
  c.validate();
  return c;
}

template <typename Scalar>
EmotionClassifier<Scalar>::EmotionClassifier(const ClassifierConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int w = cfg_.width;
  in_ = nn::Linear<Scalar>(store_, "in", motion::layout::kWidth, w, rng);
  if (cfg_.time_conditioned) {
    time1_ = nn::Linear<Scalar>(store_, "time.fc1", w, w, rng);
    time2_ = nn::Linear<Scalar>(store_, "time.fc2", w, w, rng);
  }
  for (int l = 0; l < cfg_.layers; ++l) {
    layers_.emplace_back(store_, "layer" + std::to_string(l), w, cfg_.heads, cfg_.ff_mult, rng);
  }
  norm_ = nn::LayerNorm<Scalar>(store_, "norm", w);
  head_ = nn::Linear<Scalar>(store_, "head", w, kClasses, rng);
  head_.weight.mutable_value().setZero();
}

template <typename Scalar>
Var<Scalar> EmotionClassifier<Scalar>::logits(const Var<Scalar>& x, Eigen::Index frames, const std::vector<int>& t,
                                              std::span<const float> mask) const {
  if (x.cols() != motion::layout::kWidth) throw ShapeError("classifier expects 994-wide frames");
  if (frames < 1 || x.rows() % frames != 0) throw ShapeError("rows are not a whole number of clips");
  if (frames % cfg_.pool != 0) throw ShapeError("clip length must be a multiple of the pool stride " + std::to_string(cfg_.pool));
  const Eigen::Index b = x.rows() / frames;
  const int w = cfg_.width, k = cfg_.pool;
  Var<Scalar> h = nn::gelu(in_(x));
  if (cfg_.time_conditioned) {
    if (static_cast<Eigen::Index>(t.size()) != b) throw ShapeError("one diffusion step per clip expected");
    Matrix<Scalar> temb(b, w);
    for (Eigen::Index i = 0; i < b; ++i) temb.row(i) = nn::sinusoidal_embedding<Scalar>(t[static_cast<std::size_t>(i)], w);
    h = nn::seq_broadcast_add(h, time2_(nn::silu(time1_(nn::constant(std::move(temb))))), frames);
  }
  h = model::mask_rows(h, mask);

  // average pooling over k consecutive frames
  const Eigen::Index p = frames / k;
  Matrix<Scalar> avg = Matrix<Scalar>::Zero(k * w, w);
  for (int j = 0; j < k; ++j) avg.middleRows(j * w, w).diagonal().setConstant(Scalar(1) / Scalar(k));
  h = nn::matmul(nn::reshape(h, b * p, k * w), nn::constant(std::move(avg)));
  std::vector<float> pmask;
  if (!mask.empty()) {
    pmask.assign(static_cast<std::size_t>(b * p), 0.0f);
    for (Eigen::Index r = 0; r < b * frames; ++r) {
      if (mask[static_cast<std::size_t>(r)] > 0) pmask[static_cast<std::size_t>(r / k)] = 1.0f;
    }
  }
  h = nn::add(h, nn::constant(nn::tile_rows(nn::positional_table<Scalar>(p, w), b)));
  for (const auto& layer : layers_) h = layer(h, p);
  return head_(nn::seq_mean_pool(norm_(h), p, std::span<const float>(pmask)));
}

template <typename Scalar>
Matrix<Scalar> EmotionClassifier<Scalar>::predict_logits(const Matrix<Scalar>& x, Eigen::Index frames, const std::vector<int>& t,
                                                         std::span<const float> mask) const {
  nn::NoGradGuard guard;
  return logits(nn::constant(x), frames, t, mask).value();
}

std::vector<NoisyPair> noisy_pair_dataset(const data::ExampleSet& items, const diffusion::NoiseSchedule& s, std::uint64_t seed, int repeats) {
  Rng rng(mix_seed(seed, 0x6e6f697379));
  std::vector<NoisyPair> out;
  std::vector<int> labeled;
  for (int i = 0; i < items.size(); ++i) {
    const int label = items.emotion(i);
    if (label < 0) continue;
    if (label >= kClasses) throw DataError("emotion label " + std::to_string(label) + " outside [0, 8)");
    labeled.push_back(i);
  }
  const int n = static_cast<int>(labeled.size());
  for (int r = 0; r < repeats; ++r) {
    // stratified draws: each step is uniform on [1, T], the pass covers T evenly
    const double offset = rng.uniform();
    std::vector<int> ts;
    for (int k = 0; k < n; ++k) ts.push_back(1 + static_cast<int>(std::floor((k + offset) * s.steps() / n)));
    std::shuffle(ts.begin(), ts.end(), rng.engine());
    for (int k = 0; k < n; ++k) {
      NoisyPair p;
      p.item = labeled[static_cast<std::size_t>(k)];
      p.t = ts[static_cast<std::size_t>(k)];
      p.noise_seed = rng.engine()();
      p.label = items.emotion(p.item);
      out.push_back(p);
    }
  }
  return out;
}

MatrixXf materialize(const NoisyPair& p, const MatrixXf& x0, const diffusion::NoiseSchedule& s) {
  Rng rng(p.noise_seed);
  return diffusion::q_sample<float>(s, x0, p.t, rng.normal_matrix<float>(x0.rows(), x0.cols()));
}

nlohmann::json ClassifierTrainConfig::to_json() const {
  return {{"steps", steps}, {"batch", batch}, {"lr", lr}, {"holdout", holdout}, {"seed", seed}};
}

ClassifierTrainConfig ClassifierTrainConfig::from_json(const nlohmann::json& j) {
  ClassifierTrainConfig c;
  c.steps = j.value("steps", c.steps);
  c.batch = j.value("batch", c.batch);
  c.lr = j.value("lr", c.lr);
  c.holdout = j.value("holdout", c.holdout);
  c.seed = j.value("seed", c.seed);
  if (c.steps < 0 || c.batch < 1 || !(c.lr >= 0) || !(c.holdout > 0 && c.holdout < 1)) throw UsageError("bad classifier training config");
  return c;
}

nlohmann::json ClassifierReport::to_json() const {
  return {{"final_loss", final_loss}, {"accuracy", accuracy}, {"decile_accuracy", decile_accuracy}, {"holdout", holdout}};
}

namespace {

struct Stacked {
  MatrixXf x;
  std::vector<float> mask;
  std::vector<int> labels;
  Eigen::Index frames = 0;
};

Stacked stack(const data::ExampleSet& items, const std::vector<int>& idx) {
  Stacked s;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const data::Example e = items.get(idx[k]);
    if (k == 0) {
      s.frames = e.x.rows();
      s.x.resize(static_cast<Eigen::Index>(idx.size()) * s.frames, e.x.cols());
    } else if (e.x.rows() != s.frames) {
      throw ShapeError("classifier items must share one frame count");
    }
    s.x.middleRows(static_cast<Eigen::Index>(k) * s.frames, s.frames) = e.x;
    s.mask.insert(s.mask.end(), e.mask.begin(), e.mask.end());
    s.labels.push_back(e.emotion);
  }
  return s;
}

std::pair<int, int> decile_bounds(int d, int steps) {
  return {d * steps / 10 + 1, (d + 1) * steps / 10};
}

double accuracy_of(const MatrixXf& logits, const std::vector<int>& labels) {
  int hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    hits += best == labels[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

}  // namespace

std::vector<double> decile_accuracy(const EmotionClassifier<float>& clf, const data::ExampleSet& items, const std::vector<int>& indices,
                                    const diffusion::NoiseSchedule& s, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x646563));
  std::vector<double> out;
  const std::size_t chunk = 16;
  for (int d = 0; d < 10; ++d) {
    const auto [lo, hi] = decile_bounds(d, s.steps());
    if (hi < lo) {
      out.push_back(std::nan(""));
      continue;
    }
    int hits = 0;
    for (std::size_t start = 0; start < indices.size(); start += chunk) {
      const std::vector<int> idx(indices.begin() + static_cast<long>(start),
                                 indices.begin() + static_cast<long>(std::min(indices.size(), start + chunk)));
      Stacked b = stack(items, idx);
      std::vector<int> ts;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const int t = rng.uniform_int(lo, hi);
        ts.push_back(t);
        const auto rows = b.x.middleRows(static_cast<Eigen::Index>(i) * b.frames, b.frames);
        b.x.middleRows(static_cast<Eigen::Index>(i) * b.frames, b.frames) =
            diffusion::q_sample<float>(s, MatrixXf(rows), t, rng.normal_matrix<float>(b.frames, rows.cols()));
      }
      hits += static_cast<int>(std::lround(accuracy_of(clf.predict_logits(b.x, b.frames, ts, b.mask), b.labels) *
                                           static_cast<double>(idx.size())));
    }
    out.push_back(static_cast<double>(hits) / static_cast<double>(indices.size()));
  }
  return out;
}

ClassifierReport train_classifier(EmotionClassifier<float>& clf, const data::ExampleSet& items, const diffusion::NoiseSchedule* schedule,
                                  const ClassifierTrainConfig& cfg, const ProgressFn& progress) {
  if (clf.config().time_conditioned != (schedule != nullptr)) {
    throw UsageError("a noisy classifier needs a schedule and a clean one must not get one");
  }
  std::vector<int> labeled;
  for (int i = 0; i < items.size(); ++i) {
    if (items.emotion(i) >= 0) labeled.push_back(i);
  }
  if (labeled.size() < 4) throw DataError("classifier training needs at least four labeled clips");
  Rng rng(mix_seed(cfg.seed, 0x656d6f));
  std::shuffle(labeled.begin(), labeled.end(), rng.engine());
  const auto n_hold = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(cfg.holdout * static_cast<double>(labeled.size()))));
  const std::vector<int> held(labeled.begin(), labeled.begin() + static_cast<long>(n_hold));
  const std::vector<int> train(labeled.begin() + static_cast<long>(n_hold), labeled.end());

  nn::Adam<float> opt(clf.params(), {.lr = cfg.lr, .clip_norm = 1.0});
  ClassifierReport report;
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<int> idx;
    for (int i = 0; i < cfg.batch; ++i) idx.push_back(train[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(train.size()) - 1))]);
    Stacked b = stack(items, idx);
    std::vector<int> ts;
    if (schedule) {
      for (int i = 0; i < cfg.batch; ++i) {
        const int t = rng.uniform_int(1, schedule->steps());
        ts.push_back(t);
        auto rows = b.x.middleRows(static_cast<Eigen::Index>(i) * b.frames, b.frames);
        rows = diffusion::q_sample<float>(*schedule, MatrixXf(rows), t, rng.normal_matrix<float>(b.frames, rows.cols()));
      }
    }
    const Var<float> loss = nn::softmax_cross_entropy(clf.logits(nn::constant(b.x), b.frames, ts, b.mask), std::span<const int>(b.labels));
    report.final_loss = loss.item();
    if (!std::isfinite(report.final_loss)) throw TrainingFailure("classifier loss is not finite at step " + std::to_string(step));
    nn::backward(loss);
    opt.step();
    if (progress) progress(step, report.final_loss);
  }

  report.holdout = static_cast<int>(held.size());
  double floor_acc = 0;
  if (schedule) {
    report.decile_accuracy = decile_accuracy(clf, items, held, *schedule, cfg.seed);
    double sum = 0;
    int n = 0;
    for (double a : report.decile_accuracy) {
      if (std::isnan(a)) continue;
      sum += a;
      ++n;
    }
    report.accuracy = sum / n;
    floor_acc = report.decile_accuracy.front();
    if (std::isnan(floor_acc)) floor_acc = report.accuracy;
  } else {
    int hits = 0;
    for (std::size_t start = 0; start < held.size(); start += 16) {
      const std::vector<int> idx(held.begin() + static_cast<long>(start), held.begin() + static_cast<long>(std::min(held.size(), start + 16)));
      const Stacked b = stack(items, idx);
      hits += static_cast<int>(std::lround(accuracy_of(clf.predict_logits(b.x, b.frames, {}, b.mask), b.labels) * static_cast<double>(idx.size())));
    }
    report.accuracy = static_cast<double>(hits) / static_cast<double>(held.size());
    floor_acc = report.accuracy;
  }
  if (floor_acc < 2.0 / kClasses) {
    throw TrainingFailure("held-out emotion accuracy " + std::to_string(floor_acc) + " is below twice chance");
  }
  return report;
}

std::pair<int, int> GuidanceConfig::range(int steps) const {
  const int hi = t_hi > 0 ? t_hi : std::max(1, static_cast<int>(std::floor(0.8 * steps)));
  if (!std::isfinite(alpha) || alpha < 0) throw UsageError("guidance alpha must be finite and non-negative");
  if (t_lo < 1 || t_lo > hi || hi > steps) throw UsageError("guidance range must satisfy 1 <= t_lo <= t_hi <= T");
  return {t_lo, hi};
}

nlohmann::json GuidanceConfig::to_json() const { return {{"alpha", alpha}, {"t_lo", t_lo}, {"t_hi", t_hi}}; }

GuidanceConfig GuidanceConfig::from_json(const nlohmann::json& j) {
  GuidanceConfig c;
  c.alpha = j.value("alpha", c.alpha);
  c.t_lo = j.value("t_lo", c.t_lo);
  c.t_hi = j.value("t_hi", c.t_hi);
  return c;
}

template <typename Scalar>
Matrix<Scalar> target_log_prob_grad(const EmotionClassifier<Scalar>& clf, const Matrix<Scalar>& x, Eigen::Index frames, int t,
                                    const std::vector<int>& targets) {
  const Eigen::Index b = x.rows() / std::max<Eigen::Index>(frames, 1);
  if (static_cast<Eigen::Index>(targets.size()) != b) throw ShapeError("one target emotion per clip expected");
  for (int y : targets) {
    if (y < 0 || y >= kClasses) throw UsageError("target emotion " + std::to_string(y) + " outside [0, 8)");
  }
  Var<Scalar> leaf(x, true);
  const Var<Scalar> obj = nn::sum_log_softmax_at(clf.logits(leaf, frames, std::vector<int>(static_cast<std::size_t>(b), t)),
                                                 std::span<const int>(targets));
  nn::backward(obj);
  for (const auto& [_, cv] : clf.params().entries()) {
    Var<Scalar> v = cv;
    v.zero_grad();
  }
  return leaf.has_grad() ? leaf.grad() : Matrix<Scalar>::Zero(x.rows(), x.cols());
}

template <typename Scalar>
Matrix<Scalar> guidance_step(const EmotionClassifier<Scalar>& clf, const Matrix<Scalar>& x, Eigen::Index frames, int t,
                             const std::vector<int>& targets, const GuidanceConfig& cfg, int steps) {
  const auto [lo, hi] = cfg.range(steps);
  if (cfg.alpha == 0 || t < lo || t > hi) return x;
  const Matrix<Scalar> g = target_log_prob_grad(clf, x, frames, t, targets);
  if (!g.allFinite()) throw GuidanceError("non-finite classifier gradient at t = " + std::to_string(t));
  return x + static_cast<Scalar>(cfg.alpha) * g;
}

EmotionGuide::EmotionGuide(std::shared_ptr<const EmotionClassifier<float>> clf, std::string schedule_hash, GuidanceConfig cfg)
    : clf_(std::move(clf)), schedule_hash_(std::move(schedule_hash)), cfg_(cfg) {
  if (!clf_) throw UsageError("guidance needs a classifier");
  if (!clf_->config().time_conditioned) throw UsageError("guidance needs the noise-conditioned classifier");
}

diffusion::GuidanceFn<float> EmotionGuide::hook(const diffusion::NoiseSchedule& s, Eigen::Index frames, std::vector<int> targets) const {
  if (s.hash() != schedule_hash_) {
    throw DependencyError("emotion classifier was trained against schedule " + schedule_hash_ + ", sampler uses " + s.hash());
  }
  cfg_.range(s.steps());
  return [clf = clf_, cfg = cfg_, steps = s.steps(), frames, targets = std::move(targets)](const MatrixXf& x, int t) {
    try {
      return guidance_step(*clf, x, frames, t, targets, cfg, steps);
    } catch (const GuidanceError& e) {
      log_warning(std::string(e.what()) + "; step left unguided");
      return x;
    }
  };
}

void save_classifier(const std::filesystem::path& path, const EmotionClassifier<float>& clf, const diffusion::NoiseSchedule* schedule,
                     const ClassifierReport& report) {
  nn::Checkpoint ck;
  ck.meta = {{"kind", "emotion-classifier"},
             {"version", 1},
             {"config", clf.config().to_json()},
             {"schedule", schedule ? schedule->config().to_json() : nlohmann::json(nullptr)},
             {"schedule_hash", schedule ? schedule->hash() : std::string()},
             {"report", report.to_json()}};
  ck.put_section("", clf.params().export_values());
  ck.save(path);
}

LoadedClassifier load_classifier(const std::filesystem::path& path) {
  LoadedClassifier out;
  out.raw = nn::Checkpoint::load(path);
  if (out.raw.meta.value("kind", "") != "emotion-classifier") throw DataError(path.string() + " is not an emotion classifier checkpoint");
  out.model = std::make_shared<EmotionClassifier<float>>(ClassifierConfig::from_json(out.raw.meta.at("config")), 0);
  out.model->params().import_values(out.raw.tensors);
  if (!out.raw.meta.at("schedule").is_null()) out.schedule = diffusion::ScheduleConfig::from_json(out.raw.meta.at("schedule"));
  out.schedule_hash = out.raw.meta.value("schedule_hash", "");
  return out;
}

template class EmotionClassifier<float>;
template class EmotionClassifier<double>;
template MatrixXf target_log_prob_grad(const EmotionClassifier<float>&, const MatrixXf&, Eigen::Index, int, const std::vector<int>&);
template MatrixXd target_log_prob_grad(const EmotionClassifier<double>&, const MatrixXd&, Eigen::Index, int, const std::vector<int>&);
template MatrixXf guidance_step(const EmotionClassifier<float>&, const MatrixXf&, Eigen::Index, int, const std::vector<int>&,
                                const GuidanceConfig&, int);
template MatrixXd guidance_step(const EmotionClassifier<double>&, const MatrixXd&, Eigen::Index, int, const std::vector<int>&,
                                const GuidanceConfig&, int);

}  // namespace cogest::emotion
