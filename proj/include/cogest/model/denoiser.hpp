#ifndef COGEST_MODEL_DENOISER_HPP_
#define COGEST_MODEL_DENOISER_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogest/model/encoders.hpp"

namespace cogest::model {

class ConditionError : public UsageError {
 public:
  explicit ConditionError(const std::string& what) : UsageError("condition error: " + what) {}
};

struct DenoiserConfig {
  int layers = 4;
  int width = 256;
  int heads = 4;
  int ff_mult = 4;
  int frames = 180;
  int seed_frames = 20;
  int audio_dim = 80;
  int audio_kernel = 5;
  int semantic_dim = 256;
  int vocab = 2;
  int text_width = 64;
  double w_sem_fingers = 1.0;
  double w_mel_fingers = 0.3;
  double w_sem_limbs = 0.3;
  double w_mel_limbs = 1.0;
  double modality_dropout = 0.1;
  double seed_dropout = 0.5;

  void validate() const;
  nlohmann::json to_json() const;
  static DenoiserConfig from_json(const nlohmann::json& j);
  /// "tiny" (tests), "small", "desk" (4 x 256), "full" (12 layers).
  static DenoiserConfig preset(const std::string& name);
};

/// Raw conditions for a batch of B items. A set null flag marks the modality
/// as absent for that item; its rows are then ignored.
template <typename Scalar>
struct ConditionInput {
  std::vector<int> t;
  Matrix<Scalar> seed;  // (B*S) x 994
  std::vector<char> seed_null;
  std::vector<std::vector<int>> text;
  std::vector<char> text_null;
  Matrix<Scalar> audio;  // (B*N) x A
  std::vector<char> audio_null;
  Matrix<Scalar> semantic;  // B x semantic_dim
  std::vector<char> semantic_null;

  int batch() const { return static_cast<int>(t.size()); }
  /// Every modality null for `batch` items.
  static ConditionInput empty(int batch, int frames, const DenoiserConfig& cfg);
  /// Inference contract: audio or text present for every item.
  void require_audio_or_text() const;
};

/// Encoded conditions: prefix tokens per item and a per-frame additive term.
template <typename Scalar>
struct ConditionBundle {
  nn::Var<Scalar> prefix;      // (B*2) x width: [timestep + seed, text]
  nn::Var<Scalar> frame_term;  // (B*N) x width: weighted audio + semantic
  std::vector<char> seed_null, text_null, audio_null, semantic_null;
  int frames = 0;
};

/// Transformer encoder over [condition tokens | frame tokens] predicting x0.
template <typename Scalar>
class Denoiser {
 public:
  Denoiser(const DenoiserConfig& cfg, std::uint64_t seed);
  Denoiser(const Denoiser&) = delete;
  Denoiser& operator=(const Denoiser&) = delete;

  const DenoiserConfig& config() const { return cfg_; }
  ParameterStore<Scalar>& params() { return store_; }
  const ParameterStore<Scalar>& params() const { return store_; }

  ConditionBundle<Scalar> encode_conditions(const ConditionInput<Scalar>& in, int frames) const;
  /// x_t: (B*N) x 994 -> x0_hat of the same shape.
  nn::Var<Scalar> denoise(const nn::Var<Scalar>& x_t, const ConditionBundle<Scalar>& c) const;
  /// Graph-free convenience wrapper.
  Matrix<Scalar> predict(const Matrix<Scalar>& x_t, const ConditionInput<Scalar>& in) const;

 private:
  DenoiserConfig cfg_;
  ParameterStore<Scalar> store_;
  std::vector<int> finger_cols_, limb_cols_;
  Linear<Scalar> time1_, time2_, seed_proj_, finger_in_, limb_in_, audio_conv_, mel_f_, mel_l_, sem_f_, sem_l_, text_proj_, head_;
  TokenEncoder<Scalar> text_enc_;
  nn::Var<Scalar> null_seed_, null_text_, null_audio_, null_sem_;
  std::vector<nn::TransformerLayer<Scalar>> layers_;
  nn::LayerNorm<Scalar> out_norm_;
};

}  // namespace cogest::model

#endif  // COGEST_MODEL_DENOISER_HPP_
