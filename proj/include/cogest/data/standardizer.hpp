#ifndef COGEST_DATA_STANDARDIZER_HPP_
#define COGEST_DATA_STANDARDIZER_HPP_

#include <span>
#include <vector>

#include <json.hpp>

#include "cogest/core/types.hpp"

namespace cogest::data {

/// Per-column mean/std over valid frames. Padded rows stay zero after
/// `apply` so masks keep their meaning.
class Standardizer {
 public:
  static constexpr double kMinStd = 1e-3;

  Standardizer() = default;
  Standardizer(RowVectorXd mean, RowVectorXd std) : mean_(std::move(mean)), std_(std::move(std)) {}

  /// Accumulates frames with mask > 0.5.
  void accumulate(const MatrixXf& frames, std::span<const float> mask);
  void finalize();

  MatrixXf apply(const MatrixXf& frames, std::span<const float> mask = {}) const;
  MatrixXf invert(const MatrixXf& z) const;

  int dim() const { return static_cast<int>(mean_.size()); }
  const RowVectorXd& mean() const { return mean_; }
  const RowVectorXd& std() const { return std_; }

  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);

 private:
  RowVectorXd mean_, std_;
  RowVectorXd sum_, sum_sq_;
  double count_ = 0;
};

}  // namespace cogest::data

#endif  // COGEST_DATA_STANDARDIZER_HPP_
