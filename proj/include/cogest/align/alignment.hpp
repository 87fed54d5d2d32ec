#ifndef COGEST_ALIGN_ALIGNMENT_HPP_
#define COGEST_ALIGN_ALIGNMENT_HPP_

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogest/data/examples.hpp"
#include "cogest/model/encoders.hpp"
#include "cogest/nn/adam.hpp"
#include "cogest/nn/checkpoint.hpp"

namespace cogest::align {

using nn::Var;

struct AlignConfig {
  int latent = 256;  // D, shared by both encoders
  int hidden = 256;
  int kernel = 5;
  int text_width = 128;
  int vocab = 2;
  double tau = 0.07;
  double kl_weight = 1e-4;
  int batch = 32;
  int vae_steps = 600;
  int contrastive_steps = 600;
  double lr = 1e-3;
  double holdout = 0.1;  // fraction of pairs kept for the retrieval check
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static AlignConfig from_json(const nlohmann::json& j);
};

/// -log softmax of the matched pair over in-batch gesture candidates, averaged
/// over anchors. Rows are unit-normalized first; row i of `s` matches row i
/// of `g`.
template <typename Scalar>
Var<Scalar> nt_xent_loss(const Var<Scalar>& s, const Var<Scalar>& g, double tau);

/// Per-frame gesture VAE. Encoding uses the posterior mean.
template <typename Scalar>
class GestureVae {
 public:
  GestureVae() = default;
  GestureVae(nn::ParameterStore<Scalar>& store, const AlignConfig& cfg, Rng& rng);

  struct Posterior {
    Var<Scalar> mu, logvar;  // (B*N) x D
  };
  Posterior posterior(const Var<Scalar>& x, Eigen::Index frames, std::span<const float> mask) const;
  Var<Scalar> decode(const Var<Scalar>& z) const;
  /// Masked mean of the posterior mean over frames: B x D.
  Var<Scalar> code(const Var<Scalar>& x, Eigen::Index frames, std::span<const float> mask) const;
  /// Reconstruction MSE + kl_weight * KL, both averaged over unmasked frames.
  Var<Scalar> loss(const Matrix<Scalar>& x, Eigen::Index frames, std::span<const float> mask, const Matrix<Scalar>& eps,
                   double kl_weight) const;

 private:
  model::FrameEncoder<Scalar> enc_;
  nn::Linear<Scalar> mu_, logvar_, dec1_, dec2_;
};

/// Both encoders in one parameter store, names "gesture.*" and "transcript.*".
template <typename Scalar>
class AlignmentModel {
 public:
  AlignmentModel(const AlignConfig& cfg, std::uint64_t seed);
  AlignmentModel(const AlignmentModel&) = delete;
  AlignmentModel& operator=(const AlignmentModel&) = delete;

  const AlignConfig& config() const { return cfg_; }
  nn::ParameterStore<Scalar>& params() { return store_; }
  const nn::ParameterStore<Scalar>& params() const { return store_; }
  const GestureVae<Scalar>& vae() const { return vae_; }

  Var<Scalar> gesture_code(const Var<Scalar>& x, Eigen::Index frames, std::span<const float> mask) const {
    return vae_.code(x, frames, mask);
  }
  /// Throws UsageError on an empty sequence.
  Var<Scalar> transcript_code(const std::vector<std::vector<int>>& ids) const { return text_(ids); }

  /// Graph-free B x D codes.
  Matrix<Scalar> encode_gesture(const Matrix<Scalar>& x, Eigen::Index frames, std::span<const float> mask) const;
  Matrix<Scalar> encode_transcript(const std::vector<std::vector<int>>& ids) const;

 private:
  AlignConfig cfg_;
  nn::ParameterStore<Scalar> store_;
  GestureVae<Scalar> vae_;
  model::TokenEncoder<Scalar> text_;
};

/// Transcript encoder detached from training: its own parameters, never
/// trainable, returning unit-norm codes.
class FrozenTranscriptEncoder {
 public:
  FrozenTranscriptEncoder(const AlignConfig& cfg, const std::map<std::string, MatrixXd>& values, text::Vocabulary vocab);

  MatrixXf encode(const std::vector<std::vector<int>>& ids) const;
  std::vector<int> tokenize(const std::string& transcript) const;
  int width() const { return cfg_.latent; }
  const text::Vocabulary& vocabulary() const { return vocab_; }
  /// Adapter for the denoiser's semantic input.
  std::function<MatrixXf(const std::vector<std::vector<int>>&)> as_function() const;

 private:
  AlignConfig cfg_;
  nn::ParameterStore<float> store_;
  model::TokenEncoder<float> enc_;
  text::Vocabulary vocab_;
};

/// Fraction of rows whose most similar candidate (cosine) shares its group.
double retrieval_accuracy(const MatrixXf& queries, const MatrixXf& candidates, const std::vector<int>& query_group,
                          const std::vector<int>& candidate_group);

struct AlignReport {
  double vae_loss = 0;          // final phase-1 loss
  double contrastive_loss = 0;  // final phase-2 loss
  double retrieval = 0;         // held-out top-1
  double chance = 0;
  int holdout = 0;
  nlohmann::json to_json() const;
};

/// Phase 1 trains the VAE, phase 2 both encoders with the contrastive loss.
/// `group` (optional, one per item) marks items that count as the same
/// match in retrieval, e.g. equal motif content. Throws TrainingFailure when
/// held-out retrieval is below twice chance.
using ProgressFn = std::function<void(const std::string& phase, int step, double loss)>;
AlignReport train_alignment(AlignmentModel<float>& model, const data::ExampleSet& items, const std::vector<int>& group,
                            const ProgressFn& progress = {});

void save_alignment(const std::filesystem::path& path, const AlignmentModel<float>& m, const text::Vocabulary& vocab,
                    const AlignReport& report);
struct LoadedAlignment {
  std::unique_ptr<AlignmentModel<float>> model;
  text::Vocabulary vocab;
  nn::Checkpoint raw;
};
LoadedAlignment load_alignment(const std::filesystem::path& path);
/// Reads only the transcript section.
FrozenTranscriptEncoder load_transcript_encoder(const std::filesystem::path& path);

}  // namespace cogest::align

#endif  // COGEST_ALIGN_ALIGNMENT_HPP_
