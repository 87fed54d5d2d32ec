#include "cogest/align/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cogest::align {

void AlignConfig::validate() const {
  if (!(tau > 0)) throw UsageError("contrastive temperature must be positive");
  if (latent < 1 || hidden < 1 || text_width < 1 || vocab < 2) throw UsageError("bad alignment widths");
  if (kernel < 1 || kernel % 2 == 0) throw UsageError("alignment kernel must be odd");
  if (!(kl_weight >= 0)) throw UsageError("KL weight must be non-negative");
  if (batch < 2) throw UsageError("contrastive batch needs at least two pairs");
  if (vae_steps < 0 || contrastive_steps < 0 || !(lr > 0)) throw UsageError("bad alignment schedule");
  if (!(holdout > 0 && holdout < 1)) throw UsageError("holdout fraction must lie in (0, 1)");
}

nlohmann::json AlignConfig::to_json() const {
  return {{"latent", latent},       {"hidden", hidden},         {"kernel", kernel},
          {"text_width", text_width}, {"vocab", vocab},         {"tau", tau},
          {"kl_weight", kl_weight}, {"batch", batch},           {"vae_steps", vae_steps},
          {"contrastive_steps", contrastive_steps}, {"lr", lr}, {"holdout", holdout},
          {"seed", seed}};
}

AlignConfig AlignConfig::from_json(const nlohmann::json& j) {
  AlignConfig c;
  c.latent = j.value("latent", c.latent);
  c.hidden = j.value("hidden", c.hidden);
  c.kernel = j.value("kernel", c.kernel);
  c.text_width = j.value("text_width", c.text_width);
  c.vocab = j.value("vocab", c.vocab);
  c.tau = j.value("tau", c.tau);
  c.kl_weight = j.value("kl_weight", c.kl_weight);
  c.batch = j.value("batch", c.batch);
  c.vae_steps = j.value("vae_steps", c.vae_steps);
  c.contrastive_steps = j.value("contrastive_steps", c.contrastive_steps);
  c.lr = j.value("lr", c.lr);
  c.holdout = j.value("holdout", c.holdout);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

template <typename Scalar>
Var<Scalar> nt_xent_loss(const Var<Scalar>& s, const Var<Scalar>& g, double tau) {
  if (!(tau > 0)) throw UsageError("contrastive temperature must be positive");
  if (s.rows() != g.rows() || s.cols() != g.cols()) throw ShapeError("contrastive codes must pair up row by row");
  if (s.rows() < 2) throw UsageError("contrastive batch needs at least two pairs");
  const Var<Scalar> logits = nn::scale(nn::matmul_nt(nn::normalize_rows(s), nn::normalize_rows(g)), static_cast<Scalar>(1.0 / tau));
  std::vector<int> labels(static_cast<std::size_t>(s.rows()));
  std::iota(labels.begin(), labels.end(), 0);
  return nn::softmax_cross_entropy(logits, std::span<const int>(labels));
}

template <typename Scalar>
GestureVae<Scalar>::GestureVae(nn::ParameterStore<Scalar>& store, const AlignConfig& cfg, Rng& rng)
    : enc_(store, "gesture.enc", motion::layout::kWidth, cfg.hidden, cfg.kernel, rng),
      mu_(store, "gesture.mu", cfg.hidden, cfg.latent, rng),
      logvar_(store, "gesture.logvar", cfg.hidden, cfg.latent, rng, 0.1),
      dec1_(store, "gesture.dec1", cfg.latent, cfg.hidden, rng),
      dec2_(store, "gesture.dec2", cfg.hidden, motion::layout::kWidth, rng) {}

template <typename Scalar>
typename GestureVae<Scalar>::Posterior GestureVae<Scalar>::posterior(const Var<Scalar>& x, Eigen::Index frames,
                                                                     std::span<const float> mask) const {
  const Var<Scalar> h = enc_(x, frames, mask);
  return {mu_(h), logvar_(h)};
}

template <typename Scalar>
Var<Scalar> GestureVae<Scalar>::decode(const Var<Scalar>& z) const {
  return dec2_(nn::gelu(dec1_(z)));
}

template <typename Scalar>
Var<Scalar> GestureVae<Scalar>::code(const Var<Scalar>& x, Eigen::Index frames, std::span<const float> mask) const {
  return nn::seq_mean_pool(posterior(x, frames, mask).mu, frames, mask);
}

template <typename Scalar>
Var<Scalar> GestureVae<Scalar>::loss(const Matrix<Scalar>& x, Eigen::Index frames, std::span<const float> mask, const Matrix<Scalar>& eps,
                                     double kl_weight) const {
  const auto p = posterior(nn::constant(x), frames, mask);
  const Var<Scalar> z = nn::add(p.mu, nn::hadamard(nn::exp(nn::scale(p.logvar, Scalar(0.5))), nn::constant(eps)));
  const Var<Scalar> recon = nn::masked_mse(decode(z), x, mask);
  if (kl_weight == 0) return recon;
  double rows = 0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) rows += mask.empty() ? 1.0 : mask[static_cast<std::size_t>(r)];
  // KL(q || N(0, I)) summed over latent dims, averaged over frames
  const Var<Scalar> inner = nn::add_scalar(nn::sub(nn::sub(p.logvar, nn::square(p.mu)), nn::exp(p.logvar)), Scalar(1));
  const Var<Scalar> kl = nn::scale(nn::sum(model::mask_rows(inner, mask)), static_cast<Scalar>(-0.5 / rows));
  return nn::add(recon, nn::scale(kl, static_cast<Scalar>(kl_weight)));
}

template <typename Scalar>
AlignmentModel<Scalar>::AlignmentModel(const AlignConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  vae_ = GestureVae<Scalar>(store_, cfg_, rng);
  text_ = model::TokenEncoder<Scalar>(store_, "transcript", cfg_.vocab, cfg_.text_width, cfg_.latent, rng);
}

template <typename Scalar>
Matrix<Scalar> AlignmentModel<Scalar>::encode_gesture(const Matrix<Scalar>& x, Eigen::Index frames, std::span<const float> mask) const {
  nn::NoGradGuard guard;
  return gesture_code(nn::constant(x), frames, mask).value();
}

template <typename Scalar>
Matrix<Scalar> AlignmentModel<Scalar>::encode_transcript(const std::vector<std::vector<int>>& ids) const {
  nn::NoGradGuard guard;
  return transcript_code(ids).value();
}

FrozenTranscriptEncoder::FrozenTranscriptEncoder(const AlignConfig& cfg, const std::map<std::string, MatrixXd>& values,
                                                 text::Vocabulary vocab)
    : cfg_(cfg), vocab_(std::move(vocab)) {
  Rng rng(0);
  enc_ = model::TokenEncoder<float>(store_, "transcript", cfg_.vocab, cfg_.text_width, cfg_.latent, rng);
  store_.import_values(values);
  store_.set_trainable(false);
  if (vocab_.size() != cfg_.vocab) throw DataError("alignment vocabulary does not match the encoder");
}

MatrixXf FrozenTranscriptEncoder::encode(const std::vector<std::vector<int>>& ids) const {
  nn::NoGradGuard guard;
  MatrixXf z = enc_(ids).value();
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const float n = z.row(r).norm();
    if (!(n > 0) || !std::isfinite(n)) throw NumericalError("transcript code has zero or non-finite norm");
    z.row(r) /= n;
  }
  return z;
}

std::vector<int> FrozenTranscriptEncoder::tokenize(const std::string& transcript) const {
  return vocab_.encode(transcript, text::WhitespaceTokenizer());
}

std::function<MatrixXf(const std::vector<std::vector<int>>&)> FrozenTranscriptEncoder::as_function() const {
  return [this](const std::vector<std::vector<int>>& ids) { return encode(ids); };
}

double retrieval_accuracy(const MatrixXf& queries, const MatrixXf& candidates, const std::vector<int>& query_group,
                          const std::vector<int>& candidate_group) {
  if (queries.rows() == 0 || candidates.rows() == 0) throw DataError("retrieval over an empty set");
  if (queries.cols() != candidates.cols()) throw ShapeError("retrieval codes differ in width");
  if (static_cast<Eigen::Index>(query_group.size()) != queries.rows() ||
      static_cast<Eigen::Index>(candidate_group.size()) != candidates.rows()) {
    throw ShapeError("retrieval groups do not match the codes");
  }
  const MatrixXf q = queries.rowwise().normalized(), c = candidates.rowwise().normalized();
  const MatrixXf sim = q * c.transpose();
  int hits = 0;
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    Eigen::Index best = 0;
    sim.row(i).maxCoeff(&best);
    hits += candidate_group[static_cast<std::size_t>(best)] == query_group[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(hits) / static_cast<double>(sim.rows());
}

nlohmann::json AlignReport::to_json() const {
  return {{"vae_loss", vae_loss}, {"contrastive_loss", contrastive_loss}, {"retrieval", retrieval}, {"chance", chance}, {"holdout", holdout}};
}

namespace {

struct Stacked {
  MatrixXf x;
  std::vector<float> mask;
  std::vector<std::vector<int>> ids;
  int frames = 0;
};

Stacked stack(const data::ExampleSet& items, const std::vector<int>& idx) {
  Stacked s;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const data::Example e = items.get(idx[k]);
    if (k == 0) {
      s.frames = static_cast<int>(e.x.rows());
      s.x.resize(static_cast<Eigen::Index>(idx.size()) * s.frames, e.x.cols());
    } else if (e.x.rows() != s.frames) {
      throw ShapeError("alignment items must share one frame count");
    }
    s.x.middleRows(static_cast<Eigen::Index>(k) * s.frames, s.frames) = e.x;
    s.mask.insert(s.mask.end(), e.mask.begin(), e.mask.end());
    s.ids.push_back(e.transcript);
  }
  return s;
}

}  // namespace

AlignReport train_alignment(AlignmentModel<float>& model, const data::ExampleSet& items, const std::vector<int>& group,
                            const ProgressFn& progress) {
  const AlignConfig& cfg = model.config();
  if (!group.empty() && static_cast<int>(group.size()) != items.size()) throw ShapeError("one group per item expected");
  std::vector<int> usable;
  for (int i = 0; i < items.size(); ++i) {
    if (!items.get(i).transcript.empty()) usable.push_back(i);
  }
  if (usable.size() < 4) throw DataError("alignment needs at least four transcribed clips");
  Rng rng(mix_seed(cfg.seed, 0x616c69676e));
  std::shuffle(usable.begin(), usable.end(), rng.engine());
  const auto n_hold = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(cfg.holdout * static_cast<double>(usable.size()))));
  if (n_hold >= usable.size() - 1) throw DataError("too few clips to hold out a retrieval set");
  const std::vector<int> held(usable.begin(), usable.begin() + static_cast<long>(n_hold));
  const std::vector<int> train(usable.begin() + static_cast<long>(n_hold), usable.end());
  const int k = std::min<int>(cfg.batch, static_cast<int>(train.size()));

  auto draw = [&] {
    std::vector<int> idx;
    std::vector<int> pool = train;
    for (int i = 0; i < k; ++i) {
      const int j = rng.uniform_int(i, static_cast<int>(pool.size()) - 1);
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
      idx.push_back(pool[static_cast<std::size_t>(i)]);
    }
    return stack(items, idx);
  };
  auto check = [](double v, const char* phase, int step) {
    if (!std::isfinite(v)) throw TrainingFailure(std::string(phase) + " loss is not finite at step " + std::to_string(step));
  };

  AlignReport report;
  {
    nn::Adam<float> opt(model.params(), {.lr = cfg.lr, .clip_norm = 1.0});
    for (int step = 0; step < cfg.vae_steps; ++step) {
      const Stacked b = draw();
      const MatrixXf eps = rng.normal_matrix<float>(b.x.rows(), cfg.latent);
      const Var<float> loss = model.vae().loss(b.x, b.frames, b.mask, eps, cfg.kl_weight);
      report.vae_loss = loss.item();
      check(report.vae_loss, "vae", step);
      nn::backward(loss);
      opt.step();
      if (progress) progress("vae", step, report.vae_loss);
    }
  }
  {
    nn::Adam<float> opt(model.params(), {.lr = cfg.lr, .clip_norm = 1.0});
    for (int step = 0; step < cfg.contrastive_steps; ++step) {
      const Stacked b = draw();
      const Var<float> loss =
          nt_xent_loss(model.transcript_code(b.ids), model.gesture_code(nn::constant(b.x), b.frames, b.mask), cfg.tau);
      report.contrastive_loss = loss.item();
      check(report.contrastive_loss, "contrastive", step);
      nn::backward(loss);
      opt.step();
      if (progress) progress("contrastive", step, report.contrastive_loss);
    }
  }

  // held-out retrieval: every transcript against every held-out gesture
  MatrixXf sq(static_cast<Eigen::Index>(held.size()), cfg.latent), gq(static_cast<Eigen::Index>(held.size()), cfg.latent);
  for (std::size_t start = 0; start < held.size(); start += static_cast<std::size_t>(cfg.batch)) {
    const std::size_t end = std::min(held.size(), start + static_cast<std::size_t>(cfg.batch));
    const Stacked b = stack(items, std::vector<int>(held.begin() + static_cast<long>(start), held.begin() + static_cast<long>(end)));
    const auto rows = static_cast<Eigen::Index>(end - start);
    sq.middleRows(static_cast<Eigen::Index>(start), rows) = model.encode_transcript(b.ids);
    gq.middleRows(static_cast<Eigen::Index>(start), rows) = model.encode_gesture(b.x, b.frames, b.mask);
  }
  std::vector<int> g;
  for (int i : held) g.push_back(group.empty() ? i : group[static_cast<std::size_t>(i)]);
  report.retrieval = retrieval_accuracy(sq, gq, g, g);
  report.holdout = static_cast<int>(held.size());
  for (int a : g) report.chance += static_cast<double>(std::count(g.begin(), g.end(), a)) / static_cast<double>(g.size());
  report.chance /= static_cast<double>(g.size());
  if (report.retrieval < 2 * report.chance) {
    throw TrainingFailure("held-out retrieval " + std::to_string(report.retrieval) + " is below twice chance (" +
                          std::to_string(report.chance) + ")");
  }
  return report;
}

void save_alignment(const std::filesystem::path& path, const AlignmentModel<float>& m, const text::Vocabulary& vocab,
                    const AlignReport& report) {
  if (vocab.size() != m.config().vocab) throw UsageError("vocabulary does not match the alignment model");
  nn::Checkpoint ck;
  ck.meta = {{"kind", "align"}, {"version", 1}, {"config", m.config().to_json()}, {"tau", m.config().tau},
             {"vocab", vocab.to_json()}, {"report", report.to_json()}};
  ck.put_section("", m.params().export_values());
  ck.save(path);
}

namespace {

nn::Checkpoint load_align_checkpoint(const std::filesystem::path& path) {
  nn::Checkpoint ck = nn::Checkpoint::load(path);
  if (ck.meta.value("kind", "") != "align") throw DataError(path.string() + " is not an alignment checkpoint");
  return ck;
}

}  // namespace

LoadedAlignment load_alignment(const std::filesystem::path& path) {
  LoadedAlignment out{nullptr, {}, load_align_checkpoint(path)};
  out.model = std::make_unique<AlignmentModel<float>>(AlignConfig::from_json(out.raw.meta.at("config")), 0);
  out.model->params().import_values(out.raw.tensors);
  out.vocab = text::Vocabulary::from_json(out.raw.meta.at("vocab"));
  return out;
}

FrozenTranscriptEncoder load_transcript_encoder(const std::filesystem::path& path) {
  const nn::Checkpoint ck = load_align_checkpoint(path);
  std::map<std::string, MatrixXd> part;
  for (const auto& [name, v] : ck.tensors) {
    if (name.rfind("transcript.", 0) == 0) part[name] = v;
  }
  return FrozenTranscriptEncoder(AlignConfig::from_json(ck.meta.at("config")), part, text::Vocabulary::from_json(ck.meta.at("vocab")));
}

template Var<float> nt_xent_loss(const Var<float>&, const Var<float>&, double);
template Var<double> nt_xent_loss(const Var<double>&, const Var<double>&, double);
template class GestureVae<float>;
template class GestureVae<double>;
template class AlignmentModel<float>;
template class AlignmentModel<double>;

}  // namespace cogest::align
