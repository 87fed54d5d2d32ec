#ifndef COGEST_NN_LAYERS_HPP_
#define COGEST_NN_LAYERS_HPP_

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cogest/core/error.hpp"
#include "cogest/core/random.hpp"
#include "cogest/nn/autodiff.hpp"

namespace cogest::nn {

/// Named, ordered collection of trainable leaves.
template <typename Scalar>
class ParameterStore {
 public:
  Var<Scalar> add(const std::string& name, Matrix<Scalar> init) {
    if (index_.count(name)) throw UsageError("duplicate parameter " + name);
    Var<Scalar> v(std::move(init), true);
    index_[name] = params_.size();
    params_.emplace_back(name, v);
    return v;
  }

  const std::vector<std::pair<std::string, Var<Scalar>>>& entries() const { return params_; }
  const Var<Scalar>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("unknown parameter " + name);
    return params_[it->second].second;
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  void zero_grad() {
    for (auto& [_, v] : params_) v.zero_grad();
  }
  void set_trainable(bool on) {
    for (auto& [_, v] : params_) v.set_requires_grad(on);
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : params_) n += static_cast<std::size_t>(v.value().size());
    return n;
  }

  /// Values as double, keyed by name.
  std::map<std::string, MatrixXd> export_values() const {
    std::map<std::string, MatrixXd> out;
    for (const auto& [name, v] : params_) out[name] = v.value().template cast<double>();
    return out;
  }
  /// Loads every parameter by name; shapes must match exactly.
  void import_values(const std::map<std::string, MatrixXd>& values) {
    for (auto& [name, v] : params_) {
      auto it = values.find(name);
      if (it == values.end()) throw DataError("checkpoint lacks parameter " + name);
      if (it->second.rows() != v.rows() || it->second.cols() != v.cols()) {
        throw DataError("checkpoint parameter " + name + " has the wrong shape");
      }
      v.mutable_value() = it->second.template cast<Scalar>();
    }
  }

 private:
  std::vector<std::pair<std::string, Var<Scalar>>> params_;
  std::map<std::string, std::size_t> index_;
};

template <typename Scalar>
Matrix<Scalar> uniform_init(Rng& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
  Matrix<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
  return m;
}

/// y = x W + b, W stored in x out.
template <typename Scalar>
struct Linear {
  Var<Scalar> weight;
  Var<Scalar> bias;

  Linear() = default;
  Linear(ParameterStore<Scalar>& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng,
         double gain = 1.0) {
    const double bound = gain * std::sqrt(6.0 / static_cast<double>(in + out));
    weight = store.add(name + ".weight", uniform_init<Scalar>(rng, in, out, bound));
    bias = store.add(name + ".bias", Matrix<Scalar>::Zero(1, out));
  }
  Var<Scalar> operator()(const Var<Scalar>& x) const { return add_row(matmul(x, weight), bias); }
  Eigen::Index in_features() const { return weight.rows(); }
  Eigen::Index out_features() const { return weight.cols(); }
};

template <typename Scalar>
struct LayerNorm {
  Var<Scalar> gain;
  Var<Scalar> bias;

  LayerNorm() = default;
  LayerNorm(ParameterStore<Scalar>& store, const std::string& name, Eigen::Index width) {
    gain = store.add(name + ".gain", Matrix<Scalar>::Ones(1, width));
    bias = store.add(name + ".bias", Matrix<Scalar>::Zero(1, width));
  }
  Var<Scalar> operator()(const Var<Scalar>& x) const { return layer_norm(x, gain, bias); }
};

/// Pre-norm transformer encoder block over packed sequences.
template <typename Scalar>
struct TransformerLayer {
  LayerNorm<Scalar> norm1, norm2;
  Linear<Scalar> qkv, proj, ff1, ff2;
  int heads = 1;

  TransformerLayer() = default;
  TransformerLayer(ParameterStore<Scalar>& store, const std::string& name, Eigen::Index width, int num_heads,
                   Eigen::Index ff_mult, Rng& rng)
      : norm1(store, name + ".norm1", width),
        norm2(store, name + ".norm2", width),
        qkv(store, name + ".qkv", width, 3 * width, rng),
        proj(store, name + ".proj", width, width, rng, 0.5),
        ff1(store, name + ".ff1", width, ff_mult * width, rng),
        ff2(store, name + ".ff2", ff_mult * width, width, rng, 0.5),
        heads(num_heads) {
    if (width % num_heads != 0) throw UsageError("model width must be divisible by the head count");
  }

  Var<Scalar> operator()(const Var<Scalar>& x, Eigen::Index seq_len) const {
    Var<Scalar> h = add(x, proj(self_attention(qkv(norm1(x)), seq_len, heads)));
    return add(h, ff2(gelu(ff1(norm2(h)))));
  }
};

/// Fixed sinusoidal features of a scalar position/timestep.
template <typename Scalar>
RowVector<Scalar> sinusoidal_embedding(double position, Eigen::Index width) {
  RowVector<Scalar> e(width);
  const Eigen::Index half = width / 2;
  for (Eigen::Index i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(std::max<Eigen::Index>(half, 1)));
    e(i) = static_cast<Scalar>(std::sin(position * freq));
    e(half + i) = static_cast<Scalar>(std::cos(position * freq));
  }
  if (width % 2) e(width - 1) = Scalar(0);
  return e;
}

/// Rows 0..len-1 of sinusoidal position codes.
template <typename Scalar>
Matrix<Scalar> positional_table(Eigen::Index len, Eigen::Index width) {
  Matrix<Scalar> m(len, width);
  for (Eigen::Index i = 0; i < len; ++i) m.row(i) = sinusoidal_embedding<Scalar>(static_cast<double>(i), width);
  return m;
}

/// Tiles a (len x d) table for a batch.
template <typename Scalar>
Matrix<Scalar> tile_rows(const Matrix<Scalar>& table, Eigen::Index batch) {
  Matrix<Scalar> out(table.rows() * batch, table.cols());
  for (Eigen::Index b = 0; b < batch; ++b) out.middleRows(b * table.rows(), table.rows()) = table;
  return out;
}

}  // namespace cogest::nn

#endif  // COGEST_NN_LAYERS_HPP_
