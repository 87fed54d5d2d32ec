#include "cogest/model/gdm.hpp"

#include <cmath>

#include "cogest/motion/unified.hpp"

namespace cogest::model {

using nn::Var;

nlohmann::json GdmTrainConfig::to_json() const {
  return {{"batch", batch}, {"steps", steps}, {"lr", adam.lr}, {"clip_norm", adam.clip_norm},
          {"warmup", warmup}, {"huber_delta", huber_delta}, {"seed", seed}};
}

GdmTrainConfig GdmTrainConfig::from_json(const nlohmann::json& j) {
  GdmTrainConfig c;
  c.batch = j.value("batch", c.batch);
  c.steps = j.value("steps", c.steps);
  c.adam.lr = j.value("lr", c.adam.lr);
  c.adam.clip_norm = j.value("clip_norm", c.adam.clip_norm);
  c.warmup = j.value("warmup", c.warmup);
  c.huber_delta = j.value("huber_delta", c.huber_delta);
  c.seed = j.value("seed", c.seed);
  if (c.batch < 1 || c.steps < 0 || !(c.adam.lr >= 0) || !(c.huber_delta > 0)) throw UsageError("bad gdm training config");
  return c;
}

template <typename Scalar>
ConditionInput<Scalar> batch_conditions(const data::Batch& b, const DenoiserConfig& cfg, const SemanticFn& semantic) {
  auto in = ConditionInput<Scalar>::empty(b.size, b.frames, cfg);
  const int s = cfg.seed_frames;
  if (b.frames < s) throw ShapeError("clips shorter than the seed length");
  for (int i = 0; i < b.size; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    in.seed.middleRows(i * s, s) = b.x0.middleRows(static_cast<Eigen::Index>(i) * b.frames, s).template cast<Scalar>();
    in.seed_null[ui] = 0;
    in.text[ui] = b.text[ui];
    in.text_null[ui] = b.text[ui].empty();
    in.audio_null[ui] = b.audio_null[ui];
  }
  in.audio = b.audio.template cast<Scalar>();
  if (semantic) {
    std::vector<std::vector<int>> present;
    for (const auto& tr : b.transcript) {
      if (!tr.empty()) present.push_back(tr);
    }
    if (!present.empty()) {
      const MatrixXf codes = semantic(present);
      if (codes.cols() != cfg.semantic_dim) throw ShapeError("semantic code width does not match the denoiser");
      Eigen::Index k = 0;
      for (int i = 0; i < b.size; ++i) {
        if (b.transcript[static_cast<std::size_t>(i)].empty()) continue;
        in.semantic.row(i) = codes.row(k++).template cast<Scalar>();
        in.semantic_null[static_cast<std::size_t>(i)] = 0;
      }
    }
  }
  return in;
}

template <typename Scalar>
Var<Scalar> gdm_loss(const Denoiser<Scalar>& m, const diffusion::NoiseSchedule& s, const data::Batch& b, ConditionInput<Scalar> cond,
                     const GdmDraws& d, double delta) {
  const Eigen::Index n = b.frames;
  const Matrix<Scalar> x0 = b.x0.template cast<Scalar>();
  Matrix<Scalar> xt(x0.rows(), x0.cols());
  for (int i = 0; i < b.size; ++i) {
    const double ab = s.alpha_bar(d.t[static_cast<std::size_t>(i)]);
    xt.middleRows(i * n, n) = Scalar(std::sqrt(ab)) * x0.middleRows(i * n, n) +
                              Scalar(std::sqrt(1 - ab)) * d.eps.middleRows(i * n, n).template cast<Scalar>();
  }
  cond.t = d.t;
  for (std::size_t i = 0; i < d.t.size(); ++i) {
    cond.seed_null[i] = cond.seed_null[i] || d.seed_null[i];
    cond.text_null[i] = cond.text_null[i] || d.text_null[i];
    cond.audio_null[i] = cond.audio_null[i] || d.audio_null[i];
    cond.semantic_null[i] = cond.semantic_null[i] || d.semantic_null[i];
    if (cond.text_null[i] && cond.audio_null[i] && cond.semantic_null[i]) {
      // keep one modality so the item stays conditioned
      if (!b.audio_null[i]) {
        cond.audio_null[i] = 0;
      } else if (!b.text[i].empty()) {
        cond.text_null[i] = 0;
      }
    }
  }
  const Var<Scalar> pred = m.denoise(nn::constant(std::move(xt)), m.encode_conditions(cond, b.frames));
  return nn::masked_huber(pred, x0, std::span<const float>(b.mask), static_cast<Scalar>(delta));
}

template <typename Scalar>
GdmTrainer<Scalar>::GdmTrainer(Denoiser<Scalar>& model, diffusion::NoiseSchedule schedule, GdmTrainConfig cfg, SemanticFn semantic)
    : model_(model), schedule_(std::move(schedule)), cfg_(cfg), semantic_(std::move(semantic)), opt_(model.params(), cfg.adam),
      rng_(mix_seed(cfg.seed, 0x67646d)) {}

template <typename Scalar>
GdmDraws GdmTrainer<Scalar>::draw(const data::Batch& b) {
  GdmDraws d;
  const auto& mc = model_.config();
  for (int i = 0; i < b.size; ++i) d.t.push_back(rng_.uniform_int(1, schedule_.steps()));
  d.eps = rng_.normal_matrix<double>(b.x0.rows(), b.x0.cols());
  for (int i = 0; i < b.size; ++i) {
    d.seed_null.push_back(rng_.uniform() < mc.seed_dropout);
    d.text_null.push_back(rng_.uniform() < mc.modality_dropout);
    d.audio_null.push_back(rng_.uniform() < mc.modality_dropout);
    d.semantic_null.push_back(rng_.uniform() < mc.modality_dropout);
  }
  return d;
}

template <typename Scalar>
double GdmTrainer<Scalar>::train_step(const data::Batch& b) {
  const GdmDraws d = draw(b);
  const Var<Scalar> loss = gdm_loss(model_, schedule_, b, batch_conditions<Scalar>(b, model_.config(), semantic_), d, cfg_.huber_delta);
  const double value = static_cast<double>(loss.item());
  if (!std::isfinite(value)) {
    std::string ts;
    for (int t : d.t) ts += std::to_string(t) + " ";
    throw TrainingFailure("gdm loss is not finite at step " + std::to_string(opt_.step_count()) + " (t = " + ts + ")");
  }
  nn::backward(loss);
  const double warm = cfg_.warmup > 0 ? std::min(1.0, static_cast<double>(opt_.step_count() + 1) / cfg_.warmup) : 1.0;
  opt_.set_lr(cfg_.adam.lr * warm);
  const double gnorm = opt_.step();
  if (!std::isfinite(gnorm)) throw TrainingFailure("gdm gradient norm is not finite at step " + std::to_string(opt_.step_count()));
  return value;
}

template <typename Scalar>
Matrix<Scalar> generate(const Denoiser<Scalar>& m, const diffusion::NoiseSchedule& s, ConditionInput<Scalar> cond, int frames, Rng& rng,
                        const diffusion::GuidanceFn<Scalar>& guidance) {
  const int b = cond.batch();
  diffusion::DenoiseFn<Scalar> fn = [&](const Matrix<Scalar>& x, int t) {
    cond.t.assign(static_cast<std::size_t>(b), t);
    return m.predict(x, cond);
  };
  return diffusion::sample_loop<Scalar>(fn, static_cast<Eigen::Index>(b) * frames, motion::layout::kWidth, s, guidance, rng);
}

MatrixXf windowed_generate(const Denoiser<float>& m, const diffusion::NoiseSchedule& s, const ConditionStream& stream, int total_frames,
                           Rng& rng, const diffusion::GuidanceFn<float>& guidance) {
  const auto& cfg = m.config();
  const int n = cfg.frames, sf = cfg.seed_frames;
  if (sf >= n) throw UsageError("seed length must be shorter than the window");
  if (total_frames < 1) throw UsageError("total frames must be positive");
  if (stream.audio.size() != 0 && stream.audio.rows() != total_frames) throw ShapeError("audio stream must cover every frame");

  auto window_conditions = [&](int start, int len) {
    auto in = ConditionInput<float>::empty(1, len, cfg);
    if (!stream.text.empty()) {
      in.text[0] = stream.text;
      in.text_null[0] = 0;
    }
    if (stream.audio.size() != 0) {
      in.audio = stream.audio.middleRows(start, len);
      in.audio_null[0] = 0;
    }
    if (stream.semantic) {
      in.semantic.row(0) = *stream.semantic;
      in.semantic_null[0] = 0;
    }
    in.require_audio_or_text();
    return in;
  };

  if (total_frames <= n) return generate<float>(m, s, window_conditions(0, total_frames), total_frames, rng, guidance);

  MatrixXf out = MatrixXf::Zero(total_frames, motion::layout::kWidth);
  int filled = 0;
  int start = 0;
  while (true) {
    auto in = window_conditions(start, n);
    if (filled > 0) {
      in.seed = out.middleRows(start, sf);
      in.seed_null[0] = 0;
    }
    const MatrixXf w = generate<float>(m, s, std::move(in), n, rng, guidance);
    const int overlap = filled - start;
    for (int k = 0; k < n; ++k) {
      const int f = start + k;
      if (k < overlap) {
        const float a = static_cast<float>(k + 1) / static_cast<float>(overlap + 1);
        out.row(f) = (1 - a) * out.row(f) + a * w.row(k);
      } else {
        out.row(f) = w.row(k);
      }
    }
    filled = start + n;
    if (filled >= total_frames) break;
    start = std::min(start + n - sf, total_frames - n);
  }
  return out;
}

void save_gdm(const std::filesystem::path& path, const Denoiser<float>& m, const diffusion::NoiseSchedule& s,
              const std::optional<data::Standardizer>& stats, const text::Vocabulary& vocab, GdmTrainer<float>* trainer) {
  nn::Checkpoint ck;
  ck.meta = {{"kind", "gdm"},
             {"version", 1},
             {"config", m.config().to_json()},
             {"schedule", s.config().to_json()},
             {"schedule_hash", s.hash()},
             {"vocab", vocab.to_json()}};
  ck.put_section("model.", m.params().export_values());
  if (stats) {
    ck.tensors["stats.mean"] = stats->mean();
    ck.tensors["stats.std"] = stats->std();
  }
  if (trainer) {
    ck.meta["train"] = {{"step", trainer->optimizer().step_count()},
                        {"rng", trainer->rng().state()},
                        {"config", trainer->config().to_json()}};
    ck.put_section("opt.", trainer->optimizer().export_state());
  }
  ck.save(path);
}

LoadedGdm load_gdm(const std::filesystem::path& path) {
  LoadedGdm out{nullptr, diffusion::NoiseSchedule::make(1), std::nullopt, {}, nn::Checkpoint::load(path)};
  const auto& meta = out.raw.meta;
  if (meta.value("kind", "") != "gdm") throw DataError(path.string() + " is not a gesture diffusion checkpoint");
  out.model = std::make_unique<Denoiser<float>>(DenoiserConfig::from_json(meta.at("config")), 0);
  out.model->params().import_values(out.raw.section("model."));
  out.schedule = diffusion::NoiseSchedule(diffusion::ScheduleConfig::from_json(meta.at("schedule")));
  out.vocab = text::Vocabulary::from_json(meta.at("vocab"));
  if (out.raw.tensors.count("stats.mean")) {
    out.stats = data::Standardizer(out.raw.tensors.at("stats.mean"), out.raw.tensors.at("stats.std"));
  }
  return out;
}

void restore_trainer(const nn::Checkpoint& ck, GdmTrainer<float>& trainer) {
  if (!ck.meta.contains("train")) throw DataError("checkpoint has no optimizer state to resume from");
  trainer.optimizer().import_state(ck.section("opt."), ck.meta["train"].at("step").get<long>());
  trainer.rng().set_state(ck.meta["train"].at("rng").get<std::string>());
}

template ConditionInput<float> batch_conditions<float>(const data::Batch&, const DenoiserConfig&, const SemanticFn&);
template ConditionInput<double> batch_conditions<double>(const data::Batch&, const DenoiserConfig&, const SemanticFn&);
template Var<float> gdm_loss<float>(const Denoiser<float>&, const diffusion::NoiseSchedule&, const data::Batch&, ConditionInput<float>,
                                    const GdmDraws&, double);
template Var<double> gdm_loss<double>(const Denoiser<double>&, const diffusion::NoiseSchedule&, const data::Batch&, ConditionInput<double>,
                                      const GdmDraws&, double);
template class GdmTrainer<float>;
template class GdmTrainer<double>;
template MatrixXf generate<float>(const Denoiser<float>&, const diffusion::NoiseSchedule&, ConditionInput<float>, int, Rng&,
                                  const diffusion::GuidanceFn<float>&);
template MatrixXd generate<double>(const Denoiser<double>&, const diffusion::NoiseSchedule&, ConditionInput<double>, int, Rng&,
                                   const diffusion::GuidanceFn<double>&);

}  // namespace cogest::model
