#ifndef COGEST_NN_ADAM_HPP_
#define COGEST_NN_ADAM_HPP_

#include <cmath>
#include <map>
#include <string>

#include "cogest/nn/layers.hpp"

namespace cogest::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables global-norm clipping
};

/// Adam over every parameter of a store that currently holds a gradient.
template <typename Scalar>
class Adam {
 public:
  Adam(ParameterStore<Scalar>& store, AdamConfig cfg) : store_(&store), cfg_(cfg) {}

  /// Applies one update and clears gradients. Returns the pre-clip gradient norm.
  double step() {
    ++t_;
    double sq = 0;
    for (const auto& [_, v] : store_->entries()) {
      if (v.has_grad()) sq += v.grad().template cast<double>().squaredNorm();
    }
    const double norm = std::sqrt(sq);
    const double clip = (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (const auto& [name, cv] : store_->entries()) {
      Var<Scalar> v = cv;
      if (!v.has_grad() || !v.requires_grad()) continue;
      auto& m = m_[name];
      auto& s = v_[name];
      if (m.size() == 0) {
        m = Matrix<Scalar>::Zero(v.rows(), v.cols());
        s = Matrix<Scalar>::Zero(v.rows(), v.cols());
      }
      const Matrix<Scalar> g = v.grad() * static_cast<Scalar>(clip);
      m = static_cast<Scalar>(cfg_.beta1) * m + static_cast<Scalar>(1 - cfg_.beta1) * g;
      s = static_cast<Scalar>(cfg_.beta2) * s + static_cast<Scalar>(1 - cfg_.beta2) * g.cwiseAbs2();
      const auto lr = static_cast<Scalar>(cfg_.lr / bc1);
      const auto sb = static_cast<Scalar>(1.0 / std::sqrt(bc2));
      v.mutable_value().array() -= lr * m.array() / ((s.array().sqrt() * sb) + static_cast<Scalar>(cfg_.eps));
    }
    store_->zero_grad();
    return norm;
  }

  long step_count() const { return t_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  const AdamConfig& config() const { return cfg_; }

  // Moment buffers as double for checkpointing.
  std::map<std::string, MatrixXd> export_state() const {
    std::map<std::string, MatrixXd> out;
    for (const auto& [k, m] : m_) out["m." + k] = m.template cast<double>();
    for (const auto& [k, s] : v_) out["v." + k] = s.template cast<double>();
    return out;
  }
  void import_state(const std::map<std::string, MatrixXd>& state, long step) {
    m_.clear();
    v_.clear();
    for (const auto& [k, m] : state) {
      if (k.rfind("m.", 0) == 0) m_[k.substr(2)] = m.template cast<Scalar>();
      if (k.rfind("v.", 0) == 0) v_[k.substr(2)] = m.template cast<Scalar>();
    }
    t_ = step;
  }

 private:
  ParameterStore<Scalar>* store_;
  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, Matrix<Scalar>> m_, v_;
};

}  // namespace cogest::nn

#endif  // COGEST_NN_ADAM_HPP_
