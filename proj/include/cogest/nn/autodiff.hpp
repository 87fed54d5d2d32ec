#ifndef COGEST_NN_AUTODIFF_HPP_
#define COGEST_NN_AUTODIFF_HPP_

#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "cogest/core/types.hpp"

namespace cogest::nn {

/// One vertex of a dynamic computation graph. Values are row-major matrices;
/// `backward` pushes this node's gradient into its parents.
template <typename Scalar>
struct Node {
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad.noalias() += g;
    }
  }
};

/// Handle to a graph node. Copies share the node.
template <typename Scalar>
class Var {
 public:
  using NodeType = Node<Scalar>;
  using NodePtr = std::shared_ptr<NodeType>;

  Var() = default;
  explicit Var(Matrix<Scalar> value, bool requires_grad = false) : node_(std::make_shared<NodeType>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Matrix<Scalar>& value() const { return node_->value; }
  Matrix<Scalar>& mutable_value() { return node_->value; }
  const Matrix<Scalar>& grad() const { return node_->grad; }
  Matrix<Scalar>& mutable_grad() { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad.resize(0, 0); }
  bool has_grad() const { return node_->grad.size() != 0; }

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  Scalar item() const { return node_->value(0, 0); }

  const NodePtr& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  NodePtr node_;
};

/// While alive, results never record parents, so no graph is retained.
/// Thread-local; nests.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

/// Builds a result node. When no parent requires a gradient the parents and
/// the closure are dropped so inference graphs free eagerly.
template <typename Scalar>
Var<Scalar> make_result(Matrix<Scalar> value, std::vector<typename Var<Scalar>::NodePtr> parents,
                        std::function<void(Node<Scalar>&)> backward);

/// Reverse sweep from a scalar (1x1) output; seeds d(out)/d(out) = 1.
template <typename Scalar>
void backward(const Var<Scalar>& out);

template <typename Scalar>
Var<Scalar> constant(Matrix<Scalar> value) {
  return Var<Scalar>(std::move(value), false);
}

// ---- elementwise and linear algebra --------------------------------------

template <typename Scalar> Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b);
/// a * b^T
template <typename Scalar> Var<Scalar> matmul_nt(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> hadamard(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> scale(const Var<Scalar>& a, Scalar s);
template <typename Scalar> Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar s);
/// a (n x m) + row (1 x m) broadcast over rows.
template <typename Scalar> Var<Scalar> add_row(const Var<Scalar>& a, const Var<Scalar>& row);
template <typename Scalar> Var<Scalar> gelu(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> silu(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> tanh(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> exp(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> square(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> sum(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> mean(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> reshape(const Var<Scalar>& a, Eigen::Index rows, Eigen::Index cols);
template <typename Scalar> Var<Scalar> select_cols(const Var<Scalar>& a, std::span<const int> cols);
template <typename Scalar> Var<Scalar> normalize_rows(const Var<Scalar>& a, Scalar eps = Scalar(1e-12));

/// Per-row layer normalization with learned gain/bias (1 x m each).
template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& x, const Var<Scalar>& gain, const Var<Scalar>& bias, Scalar eps = Scalar(1e-5));

/// Rows of `table` picked by id.
template <typename Scalar> Var<Scalar> embedding(const Var<Scalar>& table, std::span<const int> ids);

// ---- sequence-batched ops -------------------------------------------------
// A batch of B sequences of length L is stored as a (B*L) x d matrix, item b
// in rows [b*L, (b+1)*L).

/// Multi-head self-attention over packed q|k|v columns ((B*L) x 3d) -> (B*L) x d.
template <typename Scalar> Var<Scalar> self_attention(const Var<Scalar>& qkv, Eigen::Index seq_len, int heads);
/// Per-item mean over rows with row weights in {0,1}; empty weights => plain mean.
template <typename Scalar>
Var<Scalar> seq_mean_pool(const Var<Scalar>& x, Eigen::Index seq_len, std::span<const float> row_mask = {});
template <typename Scalar>
Var<Scalar> seq_concat(const Var<Scalar>& a, Eigen::Index len_a, const Var<Scalar>& b, Eigen::Index len_b);
template <typename Scalar>
Var<Scalar> seq_slice(const Var<Scalar>& x, Eigen::Index seq_len, Eigen::Index start, Eigen::Index len);
/// x ((B*L) x d) + v (B x d), row b of v added to every row of item b.
template <typename Scalar> Var<Scalar> seq_broadcast_add(const Var<Scalar>& x, const Var<Scalar>& v, Eigen::Index seq_len);
/// Zero-padded temporal window: row i -> [x[i-r] .. x[i+r]] within its item, k = 2r+1.
template <typename Scalar> Var<Scalar> time_unfold(const Var<Scalar>& x, Eigen::Index seq_len, int kernel);
/// Row b replaced by `null_row` where use_null[b].
template <typename Scalar>
Var<Scalar> where_rows(std::span<const char> use_null, const Var<Scalar>& a, const Var<Scalar>& null_row);
/// Item b's L rows replaced by `null_row` where use_null[b].
template <typename Scalar>
Var<Scalar> where_seq(std::span<const char> use_null, const Var<Scalar>& a, const Var<Scalar>& null_row, Eigen::Index seq_len);

// ---- losses ---------------------------------------------------------------

/// Mean softmax cross-entropy over rows.
template <typename Scalar> Var<Scalar> softmax_cross_entropy(const Var<Scalar>& logits, std::span<const int> labels);
/// Sum over rows of log softmax(logits)[row, label].
template <typename Scalar> Var<Scalar> sum_log_softmax_at(const Var<Scalar>& logits, std::span<const int> labels);
/// Mean elementwise Huber over rows whose mask entry is nonzero.
template <typename Scalar>
Var<Scalar> masked_huber(const Var<Scalar>& pred, const Matrix<Scalar>& target, std::span<const float> row_mask, Scalar delta);
/// Mean squared error over rows whose mask entry is nonzero.
template <typename Scalar>
Var<Scalar> masked_mse(const Var<Scalar>& pred, const Matrix<Scalar>& target, std::span<const float> row_mask);

// ---- operator sugar -------------------------------------------------------

template <typename Scalar> Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) { return add(a, b); }
template <typename Scalar> Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) { return sub(a, b); }
template <typename Scalar> Var<Scalar> operator*(const Var<Scalar>& a, Scalar s) { return scale(a, s); }

}  // namespace cogest::nn

#endif  // COGEST_NN_AUTODIFF_HPP_
