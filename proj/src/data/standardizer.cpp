#include "cogest/data/standardizer.hpp"

#include <cmath>

#include "cogest/core/error.hpp"

namespace cogest::data {

void Standardizer::accumulate(const MatrixXf& frames, std::span<const float> mask) {
  if (sum_.size() == 0) {
    sum_ = RowVectorXd::Zero(frames.cols());
    sum_sq_ = RowVectorXd::Zero(frames.cols());
  }
  if (frames.cols() != sum_.size()) throw ShapeError("standardizer width mismatch");
  for (Eigen::Index r = 0; r < frames.rows(); ++r) {
    if (!mask.empty() && mask[static_cast<std::size_t>(r)] < 0.5f) continue;
    const RowVectorXd row = frames.row(r).cast<double>();
    sum_ += row;
    sum_sq_ += row.array().square().matrix();
    count_ += 1;
  }
}

void Standardizer::finalize() {
  if (count_ < 2) throw DataError("standardizer needs at least two valid frames");
  mean_ = sum_ / count_;
  const RowVectorXd var = (sum_sq_ / count_).array() - mean_.array().square();
  std_ = var.array().max(0.0).sqrt().max(kMinStd).matrix();
}

MatrixXf Standardizer::apply(const MatrixXf& frames, std::span<const float> mask) const {
  if (frames.cols() != mean_.size()) throw ShapeError("standardizer width mismatch");
  const RowVector<float> m = mean_.cast<float>(), inv = std_.cwiseInverse().cast<float>();
  MatrixXf z = (frames.rowwise() - m).array().rowwise() * inv.array();
  for (std::size_t r = 0; r < mask.size(); ++r) {
    if (mask[r] < 0.5f) z.row(static_cast<Eigen::Index>(r)).setZero();
  }
  return z;
}

MatrixXf Standardizer::invert(const MatrixXf& z) const {
  if (z.cols() != mean_.size()) throw ShapeError("standardizer width mismatch");
  return (z.array().rowwise() * std_.cast<float>().array()).rowwise() + mean_.cast<float>().array();
}

nlohmann::json Standardizer::to_json() const {
  return {{"mean", std::vector<double>(mean_.data(), mean_.data() + mean_.size())},
          {"std", std::vector<double>(std_.data(), std_.data() + std_.size())}};
}

Standardizer Standardizer::from_json(const nlohmann::json& j) {
  const auto m = j.at("mean").get<std::vector<double>>();
  const auto s = j.at("std").get<std::vector<double>>();
  if (m.size() != s.size()) throw DataError("standardizer mean/std lengths differ");
  return Standardizer(Eigen::Map<const RowVectorXd>(m.data(), static_cast<Eigen::Index>(m.size())),
                      Eigen::Map<const RowVectorXd>(s.data(), static_cast<Eigen::Index>(s.size())));
}

}  // namespace cogest::data
