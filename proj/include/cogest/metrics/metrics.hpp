#ifndef COGEST_METRICS_METRICS_HPP_
#define COGEST_METRICS_METRICS_HPP_

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogest/align/alignment.hpp"
#include "cogest/emotion/classifier.hpp"
#include "cogest/model/encoders.hpp"

namespace cogest::metrics {

using nn::Var;

struct GaussianStats {
  VectorXd mean;
  MatrixXd cov;
};

/// Rows are samples. Needs at least two rows.
GaussianStats fit_gaussian(const MatrixXd& features);

/// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}). Square roots of the
/// covariances come from symmetric eigendecomposition with negative
/// eigenvalues clamped to zero; the cross term is the sum of singular values
/// of S_a^{1/2} S_b^{1/2}.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

/// A set of clips in model space: item i owns rows [i*frames, (i+1)*frames).
struct ClipSet {
  MatrixXf x;
  std::vector<float> mask;
  int frames = 0;

  int size() const { return frames > 0 ? static_cast<int>(x.rows() / frames) : 0; }
  MatrixXf clip(int i) const { return x.middleRows(static_cast<Eigen::Index>(i) * frames, frames); }
  std::span<const float> clip_mask(int i) const {
    return mask.empty() ? std::span<const float>() : std::span<const float>(mask).subspan(static_cast<std::size_t>(i) * frames, frames);
  }
  static ClipSet from_examples(const data::ExampleSet& items, const std::vector<int>& indices);
};

/// Per-clip masked temporal mean of the frames: clips x 994.
MatrixXd raw_features(const ClipSet& clips);

struct ExtractorConfig {
  int hidden = 256;
  int bottleneck = 128;  // D_f
  int kernel = 5;
  int steps = 800;
  int batch = 16;
  double lr = 1e-3;
  double max_error = 0.5;  // training fails above this held-in reconstruction MSE
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static ExtractorConfig from_json(const nlohmann::json& j);
};

/// Clip autoencoder whose per-frame bottleneck, mean-pooled over unmasked
/// frames, is the feature space for FGD.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(const ExtractorConfig& cfg);
  FeatureExtractor(const FeatureExtractor&) = delete;
  FeatureExtractor& operator=(const FeatureExtractor&) = delete;

  const ExtractorConfig& config() const { return cfg_; }
  nn::ParameterStore<float>& params() { return store_; }
  const nn::ParameterStore<float>& params() const { return store_; }

  Var<float> bottleneck(const Var<float>& x, Eigen::Index frames, std::span<const float> mask) const;
  Var<float> reconstruct(const Var<float>& x, Eigen::Index frames, std::span<const float> mask) const;
  /// Masked reconstruction MSE.
  Var<float> loss(const MatrixXf& x, Eigen::Index frames, std::span<const float> mask) const;
  /// clips x D_f
  MatrixXd features(const ClipSet& clips) const;

 private:
  ExtractorConfig cfg_;
  nn::ParameterStore<float> store_;
  model::FrameEncoder<float> enc_;
  nn::Linear<float> down_, up_, out_;
};

struct ExtractorReport {
  double reconstruction = 0;  // masked MSE over all training clips
  nlohmann::json to_json() const { return {{"reconstruction", reconstruction}}; }
};
ExtractorReport train_extractor(FeatureExtractor& fx, const ClipSet& real, const std::function<void(int, double)>& progress = {});

enum class FgdSpace { raw, feature };
/// Needs at least two clips per side; covariances get +1e-6 I.
double fgd(const ClipSet& real, const ClipSet& generated, FgdSpace space, const FeatureExtractor* extractor = nullptr);

/// Throws NumericalError on a zero-norm code.
double code_cosine(const RowVectorXd& a, const RowVectorXd& b);
/// Cosine of the pooled gesture code and the transcript code, per pair.
std::vector<double> semantic_alignment(const align::AlignmentModel<float>& m, const ClipSet& clips,
                                       const std::vector<std::vector<int>>& transcripts);

/// Columns of the 30 finger joints in every block.
const std::vector<int>& hand_columns();
/// Copy with every non-finger column zeroed.
ClipSet hands_only(const ClipSet& clips);

/// Items of another set with every non-finger column zeroed; used to train
/// the hands-only emotion classifier.
class HandsOnlySet : public data::ExampleSet {
 public:
  explicit HandsOnlySet(const data::ExampleSet& base) : base_(base) {}
  int size() const override { return base_.size(); }
  data::Example get(int i) const override;
  int emotion(int i) const override { return base_.emotion(i); }

 private:
  const data::ExampleSet& base_;
};

/// Argmax class of the clean classifier per clip.
std::vector<int> classify(const emotion::EmotionClassifier<float>& clf, const ClipSet& clips);
struct EmotionScores {
  double ea = 0;
  double ec = 0;
};
/// EA = share predicted as the true emotion, EC = share predicted as the
/// target emotion; denominators are the clip count.
EmotionScores emotion_scores(const std::vector<int>& predicted, const std::vector<int>& truth, const std::vector<int>& target);

struct MetricReport {
  std::optional<double> fgd_raw, fgd_feature, sa, ea, ec, ea_hands, ec_hands;
  int real_count = 0;
  int generated_count = 0;
  std::string config_hash;
  std::map<std::string, std::string> checkpoints;  // role -> content hash

  nlohmann::json to_json() const;
  static const nlohmann::json& schema();
  static std::string csv_header();
  std::string csv_row(const std::string& label) const;
  /// Aligned two-column text table.
  std::string table() const;
};

void save_extractor(const std::filesystem::path& path, const FeatureExtractor& fx, const ExtractorReport& report);
std::unique_ptr<FeatureExtractor> load_extractor(const std::filesystem::path& path);

}  // namespace cogest::metrics

#endif  // COGEST_METRICS_METRICS_HPP_
