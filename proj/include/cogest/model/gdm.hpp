#ifndef COGEST_MODEL_GDM_HPP_
#define COGEST_MODEL_GDM_HPP_

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>

#include "cogest/data/examples.hpp"
#include "cogest/diffusion/process.hpp"
#include "cogest/model/denoiser.hpp"
#include "cogest/nn/adam.hpp"
#include "cogest/nn/checkpoint.hpp"

namespace cogest::model {

/// Transcript token ids -> B x D unit-norm semantic codes.
using SemanticFn = std::function<MatrixXf(const std::vector<std::vector<int>>&)>;

struct GdmTrainConfig {
  int batch = 16;
  int steps = 2000;
  nn::AdamConfig adam{2e-4, 0.9, 0.999, 1e-8, 1.0};
  int warmup = 100;
  double huber_delta = 1.0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static GdmTrainConfig from_json(const nlohmann::json& j);
};

/// Draws of one training step, exposed so the loss can be replayed.
struct GdmDraws {
  std::vector<int> t;
  MatrixXd eps;
  std::vector<char> seed_null, text_null, audio_null, semantic_null;
};

/// Conditions for a batch: seed = the first S ground-truth frames, semantic
/// codes from `semantic` (null when absent or no function given).
template <typename Scalar>
ConditionInput<Scalar> batch_conditions(const data::Batch& b, const DenoiserConfig& cfg, const SemanticFn& semantic);

/// Masked Huber objective on x0 for fixed draws.
template <typename Scalar>
nn::Var<Scalar> gdm_loss(const Denoiser<Scalar>& m, const diffusion::NoiseSchedule& s, const data::Batch& b,
                         ConditionInput<Scalar> cond, const GdmDraws& d, double delta);

template <typename Scalar>
class GdmTrainer {
 public:
  GdmTrainer(Denoiser<Scalar>& model, diffusion::NoiseSchedule schedule, GdmTrainConfig cfg, SemanticFn semantic = {});

  /// One optimizer update; returns the loss. Throws TrainingFailure on a
  /// non-finite loss.
  double train_step(const data::Batch& b);
  GdmDraws draw(const data::Batch& b);

  long step() const { return opt_.step_count(); }
  Rng& rng() { return rng_; }
  nn::Adam<Scalar>& optimizer() { return opt_; }
  const GdmTrainConfig& config() const { return cfg_; }

 private:
  Denoiser<Scalar>& model_;
  diffusion::NoiseSchedule schedule_;
  GdmTrainConfig cfg_;
  SemanticFn semantic_;
  nn::Adam<Scalar> opt_;
  Rng rng_;
};

/// Reverse diffusion for a batch; `cond.t` is overwritten at every step.
template <typename Scalar>
Matrix<Scalar> generate(const Denoiser<Scalar>& m, const diffusion::NoiseSchedule& s, ConditionInput<Scalar> cond, int frames,
                        Rng& rng, const diffusion::GuidanceFn<Scalar>& guidance = {});

/// Conditions for a whole long sequence of one item.
struct ConditionStream {
  MatrixXf audio;  // total x A, empty when absent
  std::vector<int> text;
  std::optional<RowVector<float>> semantic;
};

/// Successive windows of `cfg.frames`; each later window is seeded with the
/// last S frames of the previous one and the S overlapping frames are
/// cross-faded linearly.
MatrixXf windowed_generate(const Denoiser<float>& m, const diffusion::NoiseSchedule& s, const ConditionStream& stream,
                           int total_frames, Rng& rng, const diffusion::GuidanceFn<float>& guidance = {});

/// Model, config, schedule manifest, standardizer, vocabulary and (when a
/// trainer is given) optimizer and RNG state for resuming.
void save_gdm(const std::filesystem::path& path, const Denoiser<float>& m, const diffusion::NoiseSchedule& s,
              const std::optional<data::Standardizer>& stats, const text::Vocabulary& vocab, GdmTrainer<float>* trainer = nullptr);
struct LoadedGdm {
  std::unique_ptr<Denoiser<float>> model;
  diffusion::NoiseSchedule schedule;
  std::optional<data::Standardizer> stats;
  text::Vocabulary vocab;
  nn::Checkpoint raw;
};
LoadedGdm load_gdm(const std::filesystem::path& path);
/// Restores optimizer and RNG state written by save_gdm.
void restore_trainer(const nn::Checkpoint& ck, GdmTrainer<float>& trainer);

}  // namespace cogest::model

#endif  // COGEST_MODEL_GDM_HPP_
