#ifndef COGEST_EMOTION_CLASSIFIER_HPP_
#define COGEST_EMOTION_CLASSIFIER_HPP_

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogest/data/examples.hpp"
#include "cogest/diffusion/process.hpp"
#include "cogest/nn/adam.hpp"
#include "cogest/nn/checkpoint.hpp"

namespace cogest::emotion {

using nn::Var;

inline constexpr int kClasses = 8;

class GuidanceError : public NumericalError {
 public:
  explicit GuidanceError(const std::string& what) : NumericalError("guidance error: " + what) {}
};

struct ClassifierConfig {
  int width = 128;
  int layers = 2;
  int heads = 4;
  int ff_mult = 2;
  int pool = 3;  // temporal average-pool stride before the transformer
  bool time_conditioned = true;

  void validate() const;
  nlohmann::json to_json() const;
  static ClassifierConfig from_json(const nlohmann::json& j);
};

/// Per-frame projection (+ timestep embedding), temporal pooling, transformer
/// layers, masked mean pool and a zero-initialized linear head over 8 classes.
template <typename Scalar>
class EmotionClassifier {
 public:
  EmotionClassifier(const ClassifierConfig& cfg, std::uint64_t seed);
  EmotionClassifier(const EmotionClassifier&) = delete;
  EmotionClassifier& operator=(const EmotionClassifier&) = delete;

  const ClassifierConfig& config() const { return cfg_; }
  nn::ParameterStore<Scalar>& params() { return store_; }
  const nn::ParameterStore<Scalar>& params() const { return store_; }

  /// x: (B*N) x 994, t: one step per item (ignored when not time conditioned),
  /// mask: B*N row flags or empty. Returns B x 8 logits. N must be a
  /// multiple of the pool stride.
  Var<Scalar> logits(const Var<Scalar>& x, Eigen::Index frames, const std::vector<int>& t, std::span<const float> mask = {}) const;
  Matrix<Scalar> predict_logits(const Matrix<Scalar>& x, Eigen::Index frames, const std::vector<int>& t,
                                std::span<const float> mask = {}) const;

 private:
  ClassifierConfig cfg_;
  nn::ParameterStore<Scalar> store_;
  nn::Linear<Scalar> in_, time1_, time2_, head_;
  std::vector<nn::TransformerLayer<Scalar>> layers_;
  nn::LayerNorm<Scalar> norm_;
};

/// One noisy training pair, kept as draws so x_t can be rebuilt on demand.
struct NoisyPair {
  int item = 0;
  int t = 0;
  std::uint64_t noise_seed = 0;
  int label = 0;
};

/// For every labeled item, `repeats` times: a step t and a noise seed. Steps
/// are stratified over each pass (a shuffled even cover of [1, T]), so every
/// pair's t is uniform and the pass hits each decile equally. Deterministic
/// under `seed`.
std::vector<NoisyPair> noisy_pair_dataset(const data::ExampleSet& items, const diffusion::NoiseSchedule& s, std::uint64_t seed,
                                          int repeats = 1);
/// q_sample(x0, t, eps) with eps drawn from the pair's noise seed.
MatrixXf materialize(const NoisyPair& p, const MatrixXf& x0, const diffusion::NoiseSchedule& s);

struct ClassifierTrainConfig {
  int steps = 1500;
  int batch = 16;
  double lr = 5e-4;
  double holdout = 0.1;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static ClassifierTrainConfig from_json(const nlohmann::json& j);
};

struct ClassifierReport {
  double final_loss = 0;
  double accuracy = 0;                // held-out, all noise levels (or clean)
  std::vector<double> decile_accuracy;  // noisy classifier only, deciles of t
  int holdout = 0;
  nlohmann::json to_json() const;
};

using ProgressFn = std::function<void(int step, double loss)>;

/// Cross-entropy training. With a schedule, inputs are noised at a uniform
/// random step; without one, clean clips are used. Throws TrainingFailure
/// when held-out accuracy at the lowest-noise decile (or clean accuracy) is
/// below twice chance.
ClassifierReport train_classifier(EmotionClassifier<float>& clf, const data::ExampleSet& items, const diffusion::NoiseSchedule* schedule,
                                  const ClassifierTrainConfig& cfg, const ProgressFn& progress = {});

/// Held-out accuracy per decile of t (10 entries); every item is evaluated
/// once per decile at a seeded step inside it.
std::vector<double> decile_accuracy(const EmotionClassifier<float>& clf, const data::ExampleSet& items, const std::vector<int>& indices,
                                    const diffusion::NoiseSchedule& s, std::uint64_t seed);

struct GuidanceConfig {
  double alpha = 50.0;
  int t_lo = 1;
  int t_hi = 0;  // 0 means 0.8 * T

  /// Resolved active range for a schedule; throws UsageError when invalid.
  std::pair<int, int> range(int steps) const;
  nlohmann::json to_json() const;
  static GuidanceConfig from_json(const nlohmann::json& j);
};

/// d/dx of sum_b log softmax(logits_b)[target_b] at step t.
template <typename Scalar>
Matrix<Scalar> target_log_prob_grad(const EmotionClassifier<Scalar>& clf, const Matrix<Scalar>& x, Eigen::Index frames, int t,
                                    const std::vector<int>& targets);
/// x + alpha * grad inside the active range, x otherwise. Throws
/// GuidanceError on a non-finite gradient.
template <typename Scalar>
Matrix<Scalar> guidance_step(const EmotionClassifier<Scalar>& clf, const Matrix<Scalar>& x, Eigen::Index frames, int t,
                             const std::vector<int>& targets, const GuidanceConfig& cfg, int steps);

/// Noisy classifier paired with the schedule it was trained against.
class EmotionGuide {
 public:
  EmotionGuide(std::shared_ptr<const EmotionClassifier<float>> clf, std::string schedule_hash, GuidanceConfig cfg);

  /// Sampler hook steering every item to its target. Throws DependencyError
  /// when `s` differs from the training schedule. Non-finite gradients skip
  /// the step with a logged warning.
  diffusion::GuidanceFn<float> hook(const diffusion::NoiseSchedule& s, Eigen::Index frames, std::vector<int> targets) const;
  const GuidanceConfig& config() const { return cfg_; }
  const EmotionClassifier<float>& classifier() const { return *clf_; }

 private:
  std::shared_ptr<const EmotionClassifier<float>> clf_;
  std::string schedule_hash_;
  GuidanceConfig cfg_;
};

/// `schedule` is null for the clean classifier.
void save_classifier(const std::filesystem::path& path, const EmotionClassifier<float>& clf, const diffusion::NoiseSchedule* schedule,
                     const ClassifierReport& report);
struct LoadedClassifier {
  std::shared_ptr<EmotionClassifier<float>> model;
  std::optional<diffusion::ScheduleConfig> schedule;
  std::string schedule_hash;
  nn::Checkpoint raw;
};
LoadedClassifier load_classifier(const std::filesystem::path& path);

}  // namespace cogest::emotion

#endif  // COGEST_EMOTION_CLASSIFIER_HPP_
