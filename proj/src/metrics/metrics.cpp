#include "cogest/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "cogest/core/log.hpp"
#include "cogest/motion/skeleton.hpp"
#include "cogest/motion/unified.hpp"
#include "cogest/nn/adam.hpp"
#include "cogest/nn/checkpoint.hpp"

namespace cogest::metrics {

GaussianStats fit_gaussian(const MatrixXd& features) {
  if (features.rows() < 2) throw DataError("Gaussian fit needs at least two clips");
  GaussianStats g;
  g.mean = features.colwise().mean().transpose();
  const MatrixXd c = features.rowwise() - g.mean.transpose();
  g.cov = (c.transpose() * c) / static_cast<double>(features.rows() - 1);
  return g;
}

namespace {

MatrixXd sym_sqrt(const MatrixXd& m) {
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  const VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.mean.size() != b.mean.size() || a.cov.rows() != b.cov.rows() || a.cov.rows() != a.mean.size() || b.cov.cols() != b.cov.rows())
    throw ShapeError("Gaussian statistics differ in dimension");
  // tr((Sa^1/2 Sb Sa^1/2)^1/2) is the nuclear norm of Sa^1/2 Sb^1/2; taking
  // singular values directly avoids squaring small eigenvalues
  const MatrixXd m = sym_sqrt(a.cov) * sym_sqrt(b.cov);
  const Eigen::BDCSVD<MatrixXd> svd(m);
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * svd.singularValues().sum();
  if (!std::isfinite(d)) throw NumericalError("Frechet distance is not finite");
  return std::max(d, 0.0);
}

ClipSet ClipSet::from_examples(const data::ExampleSet& items, const std::vector<int>& indices) {
  ClipSet c;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const data::Example e = items.get(indices[k]);
    if (k == 0) {
      c.frames = static_cast<int>(e.x.rows());
      c.x.resize(static_cast<Eigen::Index>(indices.size()) * c.frames, e.x.cols());
    } else if (e.x.rows() != c.frames) {
      throw ShapeError("clips must share one frame count");
    }
    c.x.middleRows(static_cast<Eigen::Index>(k) * c.frames, c.frames) = e.x;
    c.mask.insert(c.mask.end(), e.mask.begin(), e.mask.end());
  }
  return c;
}

namespace {

void check_clips(const ClipSet& c) {
  if (c.frames <= 0 || c.x.rows() % c.frames != 0) throw ShapeError("clip rows are not a multiple of the frame count");
  if (!c.mask.empty() && static_cast<Eigen::Index>(c.mask.size()) != c.x.rows()) throw ShapeError("mask does not match the clips");
}

}  // namespace

MatrixXd raw_features(const ClipSet& clips) {
  check_clips(clips);
  MatrixXd out(clips.size(), clips.x.cols());
  for (int i = 0; i < clips.size(); ++i) {
    const auto m = clips.clip_mask(i);
    RowVectorXd acc = RowVectorXd::Zero(clips.x.cols());
    double w = 0;
    for (int f = 0; f < clips.frames; ++f) {
      const double k = m.empty() ? 1.0 : m[static_cast<std::size_t>(f)];
      if (k == 0) continue;
      acc += k * clips.x.row(static_cast<Eigen::Index>(i) * clips.frames + f).cast<double>();
      w += k;
    }
    if (w == 0) throw DataError("clip " + std::to_string(i) + " has no valid frames");
    out.row(i) = acc / w;
  }
  return out;
}

nlohmann::json ExtractorConfig::to_json() const {
  return {{"hidden", hidden}, {"bottleneck", bottleneck}, {"kernel", kernel},       {"steps", steps},
          {"batch", batch},   {"lr", lr},                 {"max_error", max_error}, {"seed", seed}};
}

ExtractorConfig ExtractorConfig::from_json(const nlohmann::json& j) {
  ExtractorConfig c;
  c.hidden = j.value("hidden", c.hidden);
  c.bottleneck = j.value("bottleneck", c.bottleneck);
  c.kernel = j.value("kernel", c.kernel);
  c.steps = j.value("steps", c.steps);
  c.batch = j.value("batch", c.batch);
  c.lr = j.value("lr", c.lr);
  c.max_error = j.value("max_error", c.max_error);
  c.seed = j.value("seed", c.seed);
  if (c.hidden < 1 || c.bottleneck < 1 || c.kernel < 1 || c.kernel % 2 == 0) throw UsageError("bad extractor widths");
  if (c.steps < 0 || c.batch < 1 || !(c.lr > 0) || !(c.max_error > 0)) throw UsageError("bad extractor training settings");
  return c;
}

namespace {

Rng init_rng(const ExtractorConfig& c) { return Rng(mix_seed(c.seed, 0x66676466)); }

}  // namespace

FeatureExtractor::FeatureExtractor(const ExtractorConfig& cfg) : cfg_(ExtractorConfig::from_json(cfg.to_json())) {
  Rng rng = init_rng(cfg_);
  enc_ = model::FrameEncoder<float>(store_, "fx.enc", motion::layout::kWidth, cfg_.hidden, cfg_.kernel, rng);
  down_ = nn::Linear<float>(store_, "fx.down", cfg_.hidden, cfg_.bottleneck, rng);
  up_ = nn::Linear<float>(store_, "fx.up", cfg_.bottleneck, cfg_.hidden, rng);
  out_ = nn::Linear<float>(store_, "fx.out", cfg_.hidden, motion::layout::kWidth, rng);
}

Var<float> FeatureExtractor::bottleneck(const Var<float>& x, Eigen::Index frames, std::span<const float> mask) const {
  return down_(enc_(x, frames, mask));
}

Var<float> FeatureExtractor::reconstruct(const Var<float>& x, Eigen::Index frames, std::span<const float> mask) const {
  return out_(nn::gelu(up_(bottleneck(x, frames, mask))));
}

Var<float> FeatureExtractor::loss(const MatrixXf& x, Eigen::Index frames, std::span<const float> mask) const {
  return nn::masked_mse(reconstruct(nn::constant(x), frames, mask), x, mask);
}

MatrixXd FeatureExtractor::features(const ClipSet& clips) const {
  check_clips(clips);
  nn::NoGradGuard guard;
  MatrixXd out(clips.size(), cfg_.bottleneck);
  const int chunk = 16;
  for (int start = 0; start < clips.size(); start += chunk) {
    const int n = std::min(chunk, clips.size() - start);
    const Eigen::Index rows = static_cast<Eigen::Index>(n) * clips.frames;
    const MatrixXf x = clips.x.middleRows(static_cast<Eigen::Index>(start) * clips.frames, rows);
    const std::span<const float> m =
        clips.mask.empty() ? std::span<const float>() : std::span<const float>(clips.mask).subspan(static_cast<std::size_t>(start) * clips.frames, rows);
    const Var<float> pooled = nn::seq_mean_pool(bottleneck(nn::constant(x), clips.frames, m), clips.frames, m);
    out.middleRows(start, n) = pooled.value().cast<double>();
  }
  return out;
}

ExtractorReport train_extractor(FeatureExtractor& fx, const ClipSet& real, const std::function<void(int, double)>& progress) {
  check_clips(real);
  const ExtractorConfig& cfg = fx.config();
  if (real.size() < 2) throw DataError("extractor training needs at least two clips");
  Rng rng(mix_seed(cfg.seed, 0x66787472));
  nn::Adam<float> opt(fx.params(), {.lr = cfg.lr, .clip_norm = 1.0});
  const int k = std::min(cfg.batch, real.size());
  std::vector<int> order(static_cast<std::size_t>(real.size()));
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  for (int step = 0; step < cfg.steps; ++step) {
    MatrixXf x(static_cast<Eigen::Index>(k) * real.frames, real.x.cols());
    std::vector<float> mask;
    for (int b = 0; b < k; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        cursor = 0;
      }
      const int i = order[cursor++];
      x.middleRows(static_cast<Eigen::Index>(b) * real.frames, real.frames) = real.clip(i);
      const auto m = real.clip_mask(i);
      if (m.empty()) {
        mask.insert(mask.end(), static_cast<std::size_t>(real.frames), 1.0f);
      } else {
        mask.insert(mask.end(), m.begin(), m.end());
      }
    }
    const Var<float> l = fx.loss(x, real.frames, mask);
    const double v = l.item();
    if (!std::isfinite(v)) throw TrainingFailure("extractor loss is not finite at step " + std::to_string(step));
    nn::backward(l);
    opt.step();
    if (progress) progress(step, v);
  }

  ExtractorReport report;
  double total = 0, weight = 0;
  {
    nn::NoGradGuard guard;
    for (int i = 0; i < real.size(); ++i) {
      const auto m = real.clip_mask(i);
      double w = 0;
      for (int f = 0; f < real.frames; ++f) w += m.empty() ? 1.0 : m[static_cast<std::size_t>(f)];
      if (w == 0) continue;
      total += w * fx.loss(real.clip(i), real.frames, m).item();
      weight += w;
    }
  }
  report.reconstruction = total / weight;
  if (!(report.reconstruction <= cfg.max_error))
    throw TrainingFailure("extractor reconstruction error " + std::to_string(report.reconstruction) + " exceeds " + std::to_string(cfg.max_error));
  return report;
}

double fgd(const ClipSet& real, const ClipSet& generated, FgdSpace space, const FeatureExtractor* extractor) {
  MatrixXd a, b;
  if (space == FgdSpace::raw) {
    a = raw_features(real);
    b = raw_features(generated);
  } else {
    if (!extractor) throw DependencyError("feature-space FGD needs a trained extractor");
    a = extractor->features(real);
    b = extractor->features(generated);
  }
  GaussianStats ga = fit_gaussian(a), gb = fit_gaussian(b);
  const double reg = 1e-6;
  ga.cov.diagonal().array() += reg;
  gb.cov.diagonal().array() += reg;
  log(LogLevel::debug, "fgd: covariance regularization " + std::to_string(reg) + " over " + std::to_string(a.cols()) + " dims");
  return frechet_distance(ga, gb);
}

double code_cosine(const RowVectorXd& a, const RowVectorXd& b) {
  if (a.size() != b.size()) throw ShapeError("codes differ in width");
  const double na = a.norm(), nb = b.norm();
  if (!(na > 0) || !(nb > 0)) throw NumericalError("cosine of a zero-norm code");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

std::vector<double> semantic_alignment(const align::AlignmentModel<float>& m, const ClipSet& clips,
                                       const std::vector<std::vector<int>>& transcripts) {
  check_clips(clips);
  if (static_cast<int>(transcripts.size()) != clips.size()) throw ShapeError("one transcript per clip expected");
  std::vector<double> out;
  const int chunk = 16;
  for (int start = 0; start < clips.size(); start += chunk) {
    const int n = std::min(chunk, clips.size() - start);
    const Eigen::Index rows = static_cast<Eigen::Index>(n) * clips.frames;
    const std::span<const float> mk =
        clips.mask.empty() ? std::span<const float>() : std::span<const float>(clips.mask).subspan(static_cast<std::size_t>(start) * clips.frames, rows);
    const MatrixXf g = m.encode_gesture(clips.x.middleRows(static_cast<Eigen::Index>(start) * clips.frames, rows), clips.frames, mk);
    const std::vector<std::vector<int>> ids(transcripts.begin() + start, transcripts.begin() + start + n);
    const MatrixXf s = m.encode_transcript(ids);
    for (int i = 0; i < n; ++i) out.push_back(code_cosine(g.row(i).cast<double>(), s.row(i).cast<double>()));
  }
  return out;
}

const std::vector<int>& hand_columns() {
  static const std::vector<int> cols = motion::layout::joint_columns(motion::BodyPartition::canonical().fingers);
  return cols;
}

ClipSet hands_only(const ClipSet& clips) {
  ClipSet out = clips;
  out.x.setZero();
  for (int c : hand_columns()) out.x.col(c) = clips.x.col(c);
  return out;
}

data::Example HandsOnlySet::get(int i) const {
  data::Example e = base_.get(i);
  const MatrixXf x = e.x;
  e.x.setZero();
  for (int c : hand_columns()) e.x.col(c) = x.col(c);
  return e;
}

std::vector<int> classify(const emotion::EmotionClassifier<float>& clf, const ClipSet& clips) {
  check_clips(clips);
  if (clf.config().time_conditioned) throw UsageError("emotion metrics need a clean-motion classifier");
  std::vector<int> out;
  const int chunk = 16;
  for (int start = 0; start < clips.size(); start += chunk) {
    const int n = std::min(chunk, clips.size() - start);
    const Eigen::Index rows = static_cast<Eigen::Index>(n) * clips.frames;
    const std::span<const float> mk =
        clips.mask.empty() ? std::span<const float>() : std::span<const float>(clips.mask).subspan(static_cast<std::size_t>(start) * clips.frames, rows);
    const MatrixXf logits = clf.predict_logits(clips.x.middleRows(static_cast<Eigen::Index>(start) * clips.frames, rows), clips.frames, {}, mk);
    for (int i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      logits.row(i).maxCoeff(&best);
      out.push_back(static_cast<int>(best));
    }
  }
  return out;
}

EmotionScores emotion_scores(const std::vector<int>& predicted, const std::vector<int>& truth, const std::vector<int>& target) {
  if (predicted.empty()) throw UsageError("emotion scores over an empty set");
  if (truth.size() != predicted.size() || target.size() != predicted.size()) throw ShapeError("emotion label lists differ in length");
  int ea = 0, ec = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    ea += predicted[i] == truth[i];
    ec += predicted[i] == target[i];
  }
  const auto n = static_cast<double>(predicted.size());
  return {ea / n, ec / n};
}

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

const std::vector<std::pair<const char*, std::optional<double> MetricReport::*>>& metric_fields() {
  static const std::vector<std::pair<const char*, std::optional<double> MetricReport::*>> f{
      {"fgd_raw", &MetricReport::fgd_raw}, {"fgd_feature", &MetricReport::fgd_feature}, {"sa", &MetricReport::sa},
      {"ea", &MetricReport::ea},           {"ec", &MetricReport::ec},                   {"ea_hands", &MetricReport::ea_hands},
      {"ec_hands", &MetricReport::ec_hands}};
  return f;
}

}  // namespace

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j = {{"real_count", real_count}, {"generated_count", generated_count}, {"config_hash", config_hash},
                      {"checkpoints", checkpoints}};
  for (const auto& [name, field] : metric_fields()) j[name] = opt(this->*field);
  return j;
}

const nlohmann::json& MetricReport::schema() {
  static const nlohmann::json s = [] {
    nlohmann::json props = {{"real_count", {{"type", "integer"}, {"minimum", 0}}},
                            {"generated_count", {{"type", "integer"}, {"minimum", 0}}},
                            {"config_hash", {{"type", "string"}}},
                            {"checkpoints", {{"type", "object"}}}};
    nlohmann::json required = {"real_count", "generated_count", "config_hash", "checkpoints"};
    for (const auto& [name, field] : metric_fields()) {
      props[name] = {{"type", {"number", "null"}}};
      required.push_back(name);
    }
    props["fgd_raw"]["minimum"] = 0;
    props["fgd_feature"]["minimum"] = 0;
    props["sa"]["minimum"] = -1;
    props["sa"]["maximum"] = 1;
    for (const char* k : {"ea", "ec", "ea_hands", "ec_hands"}) {
      props[k]["minimum"] = 0;
      props[k]["maximum"] = 1;
    }
    return nlohmann::json{{"type", "object"}, {"properties", props}, {"required", required}, {"additionalProperties", false}};
  }();
  return s;
}

std::string MetricReport::csv_header() {
  std::string h = "label";
  for (const auto& [name, field] : metric_fields()) h += std::string(",") + name;
  return h + ",real_count,generated_count";
}

std::string MetricReport::csv_row(const std::string& label) const {
  std::ostringstream os;
  os << label << std::setprecision(9);
  for (const auto& [name, field] : metric_fields()) {
    os << ',';
    if (this->*field) os << *(this->*field);
  }
  os << ',' << real_count << ',' << generated_count;
  return os.str();
}

std::string MetricReport::table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  for (const auto& [name, field] : metric_fields()) {
    os << std::left << std::setw(12) << name;
    if (this->*field) {
      os << *(this->*field);
    } else {
      os << "-";
    }
    os << '\n';
  }
  os << std::left << std::setw(12) << "clips" << generated_count << " generated / " << real_count << " real\n";
  return os.str();
}

void save_extractor(const std::filesystem::path& path, const FeatureExtractor& fx, const ExtractorReport& report) {
  nn::Checkpoint ck;
  ck.meta = {{"kind", "fgd-extractor"}, {"version", 1}, {"config", fx.config().to_json()}, {"report", report.to_json()}};
  ck.put_section("", fx.params().export_values());
  ck.save(path);
}

std::unique_ptr<FeatureExtractor> load_extractor(const std::filesystem::path& path) {
  const nn::Checkpoint ck = nn::Checkpoint::load(path);
  if (ck.meta.value("kind", "") != "fgd-extractor") throw DataError(path.string() + " is not an FGD extractor checkpoint");
  auto fx = std::make_unique<FeatureExtractor>(ExtractorConfig::from_json(ck.meta.at("config")));
  fx->params().import_values(ck.tensors);
  return fx;
}

}  // namespace cogest::metrics
