#include "cogest/model/denoiser.hpp"

#include "cogest/motion/unified.hpp"

namespace cogest::model {

using nn::Var;

void DenoiserConfig::validate() const {
  if (layers < 1) throw UsageError("denoiser needs at least one layer");
  if (width < 1 || heads < 1 || width % heads != 0) throw UsageError("denoiser width must be a positive multiple of heads");
  if (frames < 1) throw UsageError("denoiser frame count must be positive");
  if (seed_frames < 1 || seed_frames >= frames) throw UsageError("seed frames must lie in [1, frames)");
  if (audio_dim < 1 || audio_kernel < 1 || audio_kernel % 2 == 0) throw UsageError("audio kernel must be odd and positive");
  if (semantic_dim < 1 || vocab < 2 || text_width < 1) throw UsageError("bad text or semantic width");
  for (double w : {w_sem_fingers, w_mel_fingers, w_sem_limbs, w_mel_limbs}) {
    if (!(w >= 0)) throw UsageError("partition weights must be non-negative");
  }
  if (!(modality_dropout >= 0 && modality_dropout < 1) || !(seed_dropout >= 0 && seed_dropout <= 1)) {
    throw UsageError("dropout probabilities must lie in [0, 1)");
  }
}

nlohmann::json DenoiserConfig::to_json() const {
  return {{"layers", layers},           {"width", width},
          {"heads", heads},             {"ff_mult", ff_mult},
          {"frames", frames},           {"seed_frames", seed_frames},
          {"audio_dim", audio_dim},     {"audio_kernel", audio_kernel},
          {"semantic_dim", semantic_dim}, {"vocab", vocab},
          {"text_width", text_width},   {"w_sem_fingers", w_sem_fingers},
          {"w_mel_fingers", w_mel_fingers}, {"w_sem_limbs", w_sem_limbs},
          {"w_mel_limbs", w_mel_limbs}, {"modality_dropout", modality_dropout},
          {"seed_dropout", seed_dropout}};
}

DenoiserConfig DenoiserConfig::from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  try {
    c.layers = j.at("layers").get<int>();
    c.width = j.at("width").get<int>();
    c.heads = j.at("heads").get<int>();
    c.ff_mult = j.value("ff_mult", c.ff_mult);
    c.frames = j.value("frames", c.frames);
    c.seed_frames = j.value("seed_frames", c.seed_frames);
    c.audio_dim = j.value("audio_dim", c.audio_dim);
    c.audio_kernel = j.value("audio_kernel", c.audio_kernel);
    c.semantic_dim = j.value("semantic_dim", c.semantic_dim);
    c.vocab = j.value("vocab", c.vocab);
    c.text_width = j.value("text_width", c.text_width);
    c.w_sem_fingers = j.value("w_sem_fingers", c.w_sem_fingers);
    c.w_mel_fingers = j.value("w_mel_fingers", c.w_mel_fingers);
    c.w_sem_limbs = j.value("w_sem_limbs", c.w_sem_limbs);
    c.w_mel_limbs = j.value("w_mel_limbs", c.w_mel_limbs);
    c.modality_dropout = j.value("modality_dropout", c.modality_dropout);
    c.seed_dropout = j.value("seed_dropout", c.seed_dropout);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("bad denoiser config: ") + e.what());
  }
  c.validate();
  return c;
}

DenoiserConfig DenoiserConfig::preset(const std::string& name) {
  DenoiserConfig c;
  if (name == "tiny") {
    c.layers = 1;
    c.width = 32;
    c.heads = 2;
    c.ff_mult = 2;
    c.semantic_dim = 16;
    c.text_width = 16;
  } else if (name == "small") {
    c.layers = 3;
    c.width = 128;
    c.heads = 4;
  } else if (name == "desk") {
    c.layers = 4;
    c.width = 256;
    c.heads = 4;
  } else if (name == "full") {
    c.layers = 12;
    c.width = 256;
    c.heads = 8;
  } else {
    throw UsageError("unknown model preset '" + name + "'");
  }
  return c;
}

template <typename Scalar>
ConditionInput<Scalar> ConditionInput<Scalar>::empty(int batch, int frames, const DenoiserConfig& cfg) {
  ConditionInput in;
  in.t.assign(static_cast<std::size_t>(batch), 1);
  in.seed = Matrix<Scalar>::Zero(batch * cfg.seed_frames, motion::layout::kWidth);
  in.seed_null.assign(static_cast<std::size_t>(batch), 1);
  in.text.assign(static_cast<std::size_t>(batch), {});
  in.text_null.assign(static_cast<std::size_t>(batch), 1);
  in.audio = Matrix<Scalar>::Zero(batch * frames, cfg.audio_dim);
  in.audio_null.assign(static_cast<std::size_t>(batch), 1);
  in.semantic = Matrix<Scalar>::Zero(batch, cfg.semantic_dim);
  in.semantic_null.assign(static_cast<std::size_t>(batch), 1);
  return in;
}

template <typename Scalar>
void ConditionInput<Scalar>::require_audio_or_text() const {
  for (int b = 0; b < batch(); ++b) {
    if (audio_null[static_cast<std::size_t>(b)] && text_null[static_cast<std::size_t>(b)]) {
      throw ConditionError("item " + std::to_string(b) + " has neither audio nor text");
    }
  }
}

template <typename Scalar>
Denoiser<Scalar>::Denoiser(const DenoiserConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int w = cfg_.width;
  const auto& part = motion::BodyPartition::canonical();
  finger_cols_ = motion::layout::joint_columns(part.fingers);
  limb_cols_ = motion::layout::joint_columns(part.limbs);
  for (int c = 0; c < 4; ++c) limb_cols_.push_back(motion::layout::kContacts + c);

  time1_ = Linear<Scalar>(store_, "time.fc1", w, w, rng);
  time2_ = Linear<Scalar>(store_, "time.fc2", w, w, rng);
  seed_proj_ = Linear<Scalar>(store_, "seed.proj", cfg_.seed_frames * motion::layout::kWidth, w, rng);
  finger_in_ = Linear<Scalar>(store_, "frame.fingers", static_cast<int>(finger_cols_.size()), w, rng);
  limb_in_ = Linear<Scalar>(store_, "frame.limbs", static_cast<int>(limb_cols_.size()), w, rng);
  audio_conv_ = Linear<Scalar>(store_, "audio.conv", cfg_.audio_kernel * cfg_.audio_dim, w, rng);
  mel_f_ = Linear<Scalar>(store_, "audio.fingers", w, w, rng);
  mel_l_ = Linear<Scalar>(store_, "audio.limbs", w, w, rng);
  sem_f_ = Linear<Scalar>(store_, "semantic.fingers", cfg_.semantic_dim, w, rng);
  sem_l_ = Linear<Scalar>(store_, "semantic.limbs", cfg_.semantic_dim, w, rng);
  text_enc_ = TokenEncoder<Scalar>(store_, "text", cfg_.vocab, cfg_.text_width, cfg_.text_width, rng);
  text_proj_ = Linear<Scalar>(store_, "text.proj", cfg_.text_width, w, rng);
  null_seed_ = store_.add("null.seed", rng.normal_matrix<Scalar>(1, w) * Scalar(0.1));
  null_text_ = store_.add("null.text", rng.normal_matrix<Scalar>(1, w) * Scalar(0.1));
  null_audio_ = store_.add("null.audio", rng.normal_matrix<Scalar>(1, w) * Scalar(0.1));
  null_sem_ = store_.add("null.semantic", rng.normal_matrix<Scalar>(1, cfg_.semantic_dim) * Scalar(0.1));
  for (int l = 0; l < cfg_.layers; ++l) {
    layers_.emplace_back(store_, "layer" + std::to_string(l), w, cfg_.heads, cfg_.ff_mult, rng);
  }
  out_norm_ = nn::LayerNorm<Scalar>(store_, "out.norm", w);
  head_ = Linear<Scalar>(store_, "out.head", w, motion::layout::kWidth, rng, 0.5);
}

template <typename Scalar>
ConditionBundle<Scalar> Denoiser<Scalar>::encode_conditions(const ConditionInput<Scalar>& in, int frames) const {
  const int b = in.batch();
  const int s = cfg_.seed_frames;
  const auto ub = static_cast<std::size_t>(b);
  if (b < 1) throw ConditionError("empty batch");
  if (in.seed_null.size() != ub || in.text_null.size() != ub || in.audio_null.size() != ub || in.semantic_null.size() != ub ||
      in.text.size() != ub) {
    throw ShapeError("condition flags do not match the batch size");
  }
  if (in.seed.rows() != b * s || in.seed.cols() != motion::layout::kWidth) throw ShapeError("seed pose must be (B*S) x 994");
  if (in.audio.rows() != b * frames || in.audio.cols() != cfg_.audio_dim) throw ShapeError("audio features must be (B*N) x A");
  if (in.semantic.rows() != b || in.semantic.cols() != cfg_.semantic_dim) throw ShapeError("semantic latent must be B x D");
  for (std::size_t i = 0; i < ub; ++i) {
    if (in.text_null[i] && in.audio_null[i] && in.semantic_null[i]) {
      throw ConditionError("item " + std::to_string(i) + " has no text, audio or semantic condition");
    }
  }

  ConditionBundle<Scalar> c;
  c.frames = frames;
  c.seed_null = in.seed_null;
  c.text_null = in.text_null;
  c.audio_null = in.audio_null;
  c.semantic_null = in.semantic_null;

  // timestep + seed posture -> one token per item
  Matrix<Scalar> temb(b, cfg_.width);
  for (int i = 0; i < b; ++i) temb.row(i) = nn::sinusoidal_embedding<Scalar>(in.t[static_cast<std::size_t>(i)], cfg_.width);
  const Var<Scalar> t_tok = time2_(nn::silu(time1_(nn::constant(std::move(temb)))));
  const Var<Scalar> seed_flat = nn::reshape(nn::constant(in.seed), b, static_cast<Eigen::Index>(s) * motion::layout::kWidth);
  const Var<Scalar> seed_tok = nn::where_rows(std::span<const char>(in.seed_null), seed_proj_(seed_flat), null_seed_);
  const Var<Scalar> tok0 = nn::add(t_tok, seed_tok);

  // text token; null items get a placeholder id that is replaced anyway
  std::vector<std::vector<int>> ids = in.text;
  for (std::size_t i = 0; i < ub; ++i) {
    if (in.text_null[i] || ids[i].empty()) ids[i] = {text::Vocabulary::kUnk};
  }
  std::vector<char> text_null = in.text_null;
  for (std::size_t i = 0; i < ub; ++i) text_null[i] = text_null[i] || in.text[i].empty();
  c.text_null = text_null;
  const Var<Scalar> text_tok = nn::where_rows(std::span<const char>(text_null), text_proj_(text_enc_(ids)), null_text_);
  c.prefix = nn::seq_concat(tok0, 1, text_tok, 1);

  // audio -> per-frame features, semantic -> broadcast vector, both weighted per partition
  const Var<Scalar> a = nn::where_seq(std::span<const char>(in.audio_null),
                                      nn::gelu(audio_conv_(nn::time_unfold(nn::constant(in.audio), frames, cfg_.audio_kernel))),
                                      null_audio_, frames);
  Var<Scalar> term = nn::add(nn::scale(mel_f_(a), static_cast<Scalar>(cfg_.w_mel_fingers)),
                             nn::scale(mel_l_(a), static_cast<Scalar>(cfg_.w_mel_limbs)));
  const Var<Scalar> z = nn::where_rows(std::span<const char>(in.semantic_null), nn::constant(in.semantic), null_sem_);
  const Var<Scalar> sem = nn::add(nn::scale(sem_f_(z), static_cast<Scalar>(cfg_.w_sem_fingers)),
                                  nn::scale(sem_l_(z), static_cast<Scalar>(cfg_.w_sem_limbs)));
  c.frame_term = nn::seq_broadcast_add(term, sem, frames);
  return c;
}

template <typename Scalar>
Var<Scalar> Denoiser<Scalar>::denoise(const Var<Scalar>& x_t, const ConditionBundle<Scalar>& c) const {
  const int n = c.frames;
  if (x_t.cols() != motion::layout::kWidth || x_t.rows() != c.frame_term.rows()) {
    throw ShapeError("denoiser input must be (B*N) x 994 matching the conditions");
  }
  const Eigen::Index b = x_t.rows() / n;
  const Var<Scalar> pos = nn::constant(nn::tile_rows(nn::positional_table<Scalar>(n, cfg_.width), b));
  Var<Scalar> frames = nn::add(finger_in_(nn::select_cols(x_t, std::span<const int>(finger_cols_))),
                               limb_in_(nn::select_cols(x_t, std::span<const int>(limb_cols_))));
  frames = nn::add(nn::add(frames, pos), c.frame_term);
  Var<Scalar> h = nn::seq_concat(c.prefix, 2, frames, n);
  for (const auto& layer : layers_) h = layer(h, n + 2);
  return head_(out_norm_(nn::seq_slice(h, n + 2, 2, n)));
}

template <typename Scalar>
Matrix<Scalar> Denoiser<Scalar>::predict(const Matrix<Scalar>& x_t, const ConditionInput<Scalar>& in) const {
  if (in.batch() < 1 || x_t.rows() % in.batch() != 0) throw ShapeError("x_t rows must be a multiple of the batch size");
  const int frames = static_cast<int>(x_t.rows() / in.batch());
  const nn::NoGradGuard no_grad;
  return denoise(nn::constant(x_t), encode_conditions(in, frames)).value();
}

template struct ConditionInput<float>;
template struct ConditionInput<double>;
template class Denoiser<float>;
template class Denoiser<double>;

}  // namespace cogest::model
