#include "cogest/nn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "cogest/core/error.hpp"

namespace cogest::nn {
namespace {

template <typename Scalar>
using NodePtr = typename Var<Scalar>::NodePtr;

void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

template <typename Scalar>
bool needs(const Node<Scalar>& n) {
  return n.requires_grad;
}

thread_local bool g_grad_enabled = true;

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <typename Scalar>
Var<Scalar> make_result(Matrix<Scalar> value, std::vector<NodePtr<Scalar>> parents,
                        std::function<void(Node<Scalar>&)> backward) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  if (any && g_grad_enabled) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Var<Scalar>(std::move(node));
}

template <typename Scalar>
void backward(const Var<Scalar>& out) {
  if (out.rows() != 1 || out.cols() != 1) throw ShapeError("backward expects a 1x1 output");
  if (!out.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<Scalar>*> order;
  std::unordered_set<Node<Scalar>*> seen;
  std::vector<std::pair<Node<Scalar>*, std::size_t>> stack;
  stack.emplace_back(out.node().get(), 0);
  seen.insert(out.node().get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node<Scalar>* p = n->parents[i++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  out.node()->accumulate(Matrix<Scalar>::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

// ---- elementwise and linear algebra --------------------------------------

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  require(a.cols() == b.rows(), "matmul inner dimensions differ");
  Matrix<Scalar> v(a.rows(), b.cols());
  v.noalias() = a.value() * b.value();
  return make_result<Scalar>(std::move(v), {a.node(), b.node()}, [](Node<Scalar>& n) {
    auto& x = *n.parents[0];
    auto& w = *n.parents[1];
    if (needs(x)) x.accumulate(n.grad * w.value.transpose());
    if (needs(w)) w.accumulate(x.value.transpose() * n.grad);
  });
}

template <typename Scalar>
Var<Scalar> matmul_nt(const Var<Scalar>& a, const Var<Scalar>& b) {
  require(a.cols() == b.cols(), "matmul_nt column counts differ");
  Matrix<Scalar> v(a.rows(), b.rows());
  v.noalias() = a.value() * b.value().transpose();
  return make_result<Scalar>(std::move(v), {a.node(), b.node()}, [](Node<Scalar>& n) {
    auto& x = *n.parents[0];
    auto& y = *n.parents[1];
    if (needs(x)) x.accumulate(n.grad * y.value);
    if (needs(y)) y.accumulate(n.grad.transpose() * x.value);
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add shapes differ");
  return make_result<Scalar>(a.value() + b.value(), {a.node(), b.node()}, [](Node<Scalar>& n) {
    for (auto& p : n.parents) {
      if (needs(*p)) p->accumulate(n.grad);
    }
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub shapes differ");
  return make_result<Scalar>(a.value() - b.value(), {a.node(), b.node()}, [](Node<Scalar>& n) {
    if (needs(*n.parents[0])) n.parents[0]->accumulate(n.grad);
    if (needs(*n.parents[1])) n.parents[1]->accumulate(-n.grad);
  });
}

template <typename Scalar>
Var<Scalar> hadamard(const Var<Scalar>& a, const Var<Scalar>& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard shapes differ");
  return make_result<Scalar>(a.value().cwiseProduct(b.value()), {a.node(), b.node()}, [](Node<Scalar>& n) {
    auto& x = *n.parents[0];
    auto& y = *n.parents[1];
    if (needs(x)) x.accumulate(n.grad.cwiseProduct(y.value));
    if (needs(y)) y.accumulate(n.grad.cwiseProduct(x.value));
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s) {
  return make_result<Scalar>(a.value() * s, {a.node()}, [s](Node<Scalar>& n) { n.parents[0]->accumulate(n.grad * s); });
}

template <typename Scalar>
Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar s) {
  return make_result<Scalar>((a.value().array() + s).matrix(), {a.node()},
                             [](Node<Scalar>& n) { n.parents[0]->accumulate(n.grad); });
}

template <typename Scalar>
Var<Scalar> add_row(const Var<Scalar>& a, const Var<Scalar>& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row expects a 1 x cols row");
  Matrix<Scalar> v = a.value();
  v.rowwise() += row.value().row(0);
  return make_result<Scalar>(std::move(v), {a.node(), row.node()}, [](Node<Scalar>& n) {
    if (needs(*n.parents[0])) n.parents[0]->accumulate(n.grad);
    if (needs(*n.parents[1])) n.parents[1]->accumulate(n.grad.colwise().sum());
  });
}

template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& a) {
  static constexpr Scalar c = Scalar(0.7978845608028654);  // sqrt(2/pi)
  static constexpr Scalar k = Scalar(0.044715);
  Matrix<Scalar> th = (c * (a.value().array() + k * a.value().array().cube())).tanh().matrix();
  Matrix<Scalar> v = (Scalar(0.5) * a.value().array() * (Scalar(1) + th.array())).matrix();
  return make_result<Scalar>(std::move(v), {a.node()}, [th = std::move(th)](Node<Scalar>& n) {
    const auto& x = n.parents[0]->value.array();
    auto d = Scalar(0.5) * (Scalar(1) + th.array()) +
             Scalar(0.5) * x * (Scalar(1) - th.array().square()) * c * (Scalar(1) + Scalar(3) * k * x.square());
    n.parents[0]->accumulate((n.grad.array() * d).matrix());
  });
}

template <typename Scalar>
Var<Scalar> silu(const Var<Scalar>& a) {
  Matrix<Scalar> sig = (Scalar(1) / (Scalar(1) + (-a.value().array()).exp())).matrix();
  Matrix<Scalar> v = a.value().cwiseProduct(sig);
  return make_result<Scalar>(std::move(v), {a.node()}, [sig = std::move(sig)](Node<Scalar>& n) {
    const auto& x = n.parents[0]->value.array();
    auto d = sig.array() * (Scalar(1) + x * (Scalar(1) - sig.array()));
    n.parents[0]->accumulate((n.grad.array() * d).matrix());
  });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& a) {
  Matrix<Scalar> v = a.value().array().tanh().matrix();
  return make_result<Scalar>(v, {a.node()}, [v](Node<Scalar>& n) {
    n.parents[0]->accumulate((n.grad.array() * (Scalar(1) - v.array().square())).matrix());
  });
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& a) {
  Matrix<Scalar> v = a.value().array().exp().matrix();
  return make_result<Scalar>(v, {a.node()},
                             [v](Node<Scalar>& n) { n.parents[0]->accumulate(n.grad.cwiseProduct(v)); });
}

template <typename Scalar>
Var<Scalar> square(const Var<Scalar>& a) {
  return make_result<Scalar>(a.value().cwiseAbs2(), {a.node()}, [](Node<Scalar>& n) {
    n.parents[0]->accumulate(Scalar(2) * n.grad.cwiseProduct(n.parents[0]->value));
  });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  Matrix<Scalar> v(1, 1);
  v(0, 0) = a.value().sum();
  return make_result<Scalar>(std::move(v), {a.node()}, [](Node<Scalar>& n) {
    auto& p = *n.parents[0];
    p.accumulate(Matrix<Scalar>::Constant(p.value.rows(), p.value.cols(), n.grad(0, 0)));
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& a) {
  const auto count = static_cast<Scalar>(a.value().size());
  return scale(sum(a), Scalar(1) / count);
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& a, Eigen::Index rows, Eigen::Index cols) {
  require(rows * cols == a.value().size(), "reshape size mismatch");
  Matrix<Scalar> v = Eigen::Map<const Matrix<Scalar>>(a.value().data(), rows, cols);
  return make_result<Scalar>(std::move(v), {a.node()}, [](Node<Scalar>& n) {
    auto& p = *n.parents[0];
    p.accumulate(Eigen::Map<const Matrix<Scalar>>(n.grad.data(), p.value.rows(), p.value.cols()));
  });
}

template <typename Scalar>
Var<Scalar> select_cols(const Var<Scalar>& a, std::span<const int> cols) {
  std::vector<int> idx(cols.begin(), cols.end());
  Matrix<Scalar> v(a.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    require(idx[j] >= 0 && idx[j] < a.cols(), "select_cols index out of range");
    v.col(static_cast<Eigen::Index>(j)) = a.value().col(idx[j]);
  }
  return make_result<Scalar>(std::move(v), {a.node()}, [idx = std::move(idx)](Node<Scalar>& n) {
    auto& p = *n.parents[0];
    Matrix<Scalar> g = Matrix<Scalar>::Zero(p.value.rows(), p.value.cols());
    for (std::size_t j = 0; j < idx.size(); ++j) g.col(idx[j]) += n.grad.col(static_cast<Eigen::Index>(j));
    p.accumulate(g);
  });
}

template <typename Scalar>
Var<Scalar> normalize_rows(const Var<Scalar>& a, Scalar eps) {
  Vector<Scalar> norms = a.value().rowwise().norm();
  for (Eigen::Index i = 0; i < norms.size(); ++i) {
    if (!(norms(i) > eps)) throw NumericalError("normalize_rows: zero-norm row");
  }
  Matrix<Scalar> v = norms.cwiseInverse().asDiagonal() * a.value();
  return make_result<Scalar>(v, {a.node()}, [v, norms](Node<Scalar>& n) {
    // d(x/|x|) = (g - y (y.g)) / |x|
    Vector<Scalar> dots = (n.grad.cwiseProduct(v)).rowwise().sum();
    Matrix<Scalar> g = n.grad - dots.asDiagonal() * v;
    n.parents[0]->accumulate(norms.cwiseInverse().asDiagonal() * g);
  });
}

template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& x, const Var<Scalar>& gain, const Var<Scalar>& bias, Scalar eps) {
  const Eigen::Index n = x.rows(), m = x.cols();
  require(gain.cols() == m && bias.cols() == m, "layer_norm parameter width");
  Matrix<Scalar> xhat(n, m);
  Vector<Scalar> inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar mu = x.value().row(i).mean();
    const Scalar var = (x.value().row(i).array() - mu).square().mean();
    inv_std(i) = Scalar(1) / std::sqrt(var + eps);
    xhat.row(i) = (x.value().row(i).array() - mu) * inv_std(i);
  }
  Matrix<Scalar> v = xhat.array().rowwise() * gain.value().row(0).array();
  v.rowwise() += bias.value().row(0);
  return make_result<Scalar>(std::move(v), {x.node(), gain.node(), bias.node()},
                             [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<Scalar>& nd) {
                               auto& xp = *nd.parents[0];
                               auto& gp = *nd.parents[1];
                               auto& bp = *nd.parents[2];
                               if (needs(gp)) gp.accumulate(nd.grad.cwiseProduct(xhat).colwise().sum());
                               if (needs(bp)) bp.accumulate(nd.grad.colwise().sum());
                               if (needs(xp)) {
                                 Matrix<Scalar> dxhat = nd.grad.array().rowwise() * gp.value.row(0).array();
                                 const Scalar m_inv = Scalar(1) / static_cast<Scalar>(dxhat.cols());
                                 Vector<Scalar> mean_d = dxhat.rowwise().sum() * m_inv;
                                 Vector<Scalar> mean_dx = dxhat.cwiseProduct(xhat).rowwise().sum() * m_inv;
                                 Matrix<Scalar> dx = dxhat;
                                 dx.colwise() -= mean_d;
                                 dx -= mean_dx.asDiagonal() * xhat;
                                 xp.accumulate(inv_std.asDiagonal() * dx);
                               }
                             });
}

template <typename Scalar>
Var<Scalar> embedding(const Var<Scalar>& table, std::span<const int> ids) {
  std::vector<int> idx(ids.begin(), ids.end());
  Matrix<Scalar> v(static_cast<Eigen::Index>(idx.size()), table.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && idx[i] < table.rows(), "embedding id out of range");
    v.row(static_cast<Eigen::Index>(i)) = table.value().row(idx[i]);
  }
  return make_result<Scalar>(std::move(v), {table.node()}, [idx = std::move(idx)](Node<Scalar>& n) {
    auto& t = *n.parents[0];
    Matrix<Scalar> g = Matrix<Scalar>::Zero(t.value.rows(), t.value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
    t.accumulate(g);
  });
}

// ---- sequence-batched ops -------------------------------------------------

template <typename Scalar>
Var<Scalar> self_attention(const Var<Scalar>& qkv, Eigen::Index seq_len, int heads) {
  const Eigen::Index rows = qkv.rows();
  const Eigen::Index d = qkv.cols() / 3;
  require(qkv.cols() == 3 * d && d % heads == 0, "self_attention width must be 3*d with d divisible by heads");
  require(rows % seq_len == 0, "self_attention rows not a multiple of seq_len");
  const Eigen::Index batch = rows / seq_len;
  const Eigen::Index dh = d / heads;
  const Scalar sc = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

  auto probs = std::make_shared<std::vector<Matrix<Scalar>>>(static_cast<std::size_t>(batch * heads));
  Matrix<Scalar> out(rows, d);
  const Matrix<Scalar>& x = qkv.value();
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      const auto q = x.block(b * seq_len, h * dh, seq_len, dh);
      const auto k = x.block(b * seq_len, d + h * dh, seq_len, dh);
      const auto vv = x.block(b * seq_len, 2 * d + h * dh, seq_len, dh);
      Matrix<Scalar> s(seq_len, seq_len);
      s.noalias() = q * k.transpose();
      s *= sc;
      for (Eigen::Index i = 0; i < seq_len; ++i) {
        const Scalar mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
      }
      out.block(b * seq_len, h * dh, seq_len, dh).noalias() = s * vv;
      (*probs)[static_cast<std::size_t>(b * heads + h)] = std::move(s);
    }
  }
  return make_result<Scalar>(std::move(out), {qkv.node()}, [probs, seq_len, heads, d, dh, sc, batch](Node<Scalar>& n) {
    auto& p = *n.parents[0];
    const Matrix<Scalar>& x = p.value;
    Matrix<Scalar> g = Matrix<Scalar>::Zero(x.rows(), x.cols());
    for (Eigen::Index b = 0; b < batch; ++b) {
      for (int h = 0; h < heads; ++h) {
        const Matrix<Scalar>& pr = (*probs)[static_cast<std::size_t>(b * heads + h)];
        const auto q = x.block(b * seq_len, h * dh, seq_len, dh);
        const auto k = x.block(b * seq_len, d + h * dh, seq_len, dh);
        const auto vv = x.block(b * seq_len, 2 * d + h * dh, seq_len, dh);
        const auto dout = n.grad.block(b * seq_len, h * dh, seq_len, dh);
        g.block(b * seq_len, 2 * d + h * dh, seq_len, dh).noalias() += pr.transpose() * dout;
        Matrix<Scalar> dp(seq_len, seq_len);
        dp.noalias() = dout * vv.transpose();
        Vector<Scalar> rs = dp.cwiseProduct(pr).rowwise().sum();
        dp.colwise() -= rs;
        Matrix<Scalar> ds = pr.cwiseProduct(dp) * sc;
        g.block(b * seq_len, h * dh, seq_len, dh).noalias() += ds * k;
        g.block(b * seq_len, d + h * dh, seq_len, dh).noalias() += ds.transpose() * q;
      }
    }
    p.accumulate(g);
  });
}

template <typename Scalar>
Var<Scalar> seq_mean_pool(const Var<Scalar>& x, Eigen::Index seq_len, std::span<const float> row_mask) {
  require(x.rows() % seq_len == 0, "seq_mean_pool rows not a multiple of seq_len");
  require(row_mask.empty() || static_cast<Eigen::Index>(row_mask.size()) == x.rows(), "seq_mean_pool mask length");
  const Eigen::Index batch = x.rows() / seq_len;
  std::vector<Scalar> w(static_cast<std::size_t>(x.rows()), Scalar(1));
  if (!row_mask.empty()) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = row_mask[i] != 0.0f ? Scalar(1) : Scalar(0);
  }
  std::vector<Scalar> inv(static_cast<std::size_t>(batch));
  Matrix<Scalar> v = Matrix<Scalar>::Zero(batch, x.cols());
  for (Eigen::Index b = 0; b < batch; ++b) {
    Scalar cnt = 0;
    for (Eigen::Index i = 0; i < seq_len; ++i) {
      const Scalar wi = w[static_cast<std::size_t>(b * seq_len + i)];
      if (wi != Scalar(0)) v.row(b) += x.value().row(b * seq_len + i);
      cnt += wi;
    }
    if (cnt == Scalar(0)) throw DataError("mean pool over an all-masked sequence");
    inv[static_cast<std::size_t>(b)] = Scalar(1) / cnt;
    v.row(b) *= inv[static_cast<std::size_t>(b)];
  }
  return make_result<Scalar>(std::move(v), {x.node()}, [w = std::move(w), inv = std::move(inv), seq_len](Node<Scalar>& n) {
    auto& p = *n.parents[0];
    Matrix<Scalar> g(p.value.rows(), p.value.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const Eigen::Index b = r / seq_len;
      g.row(r) = n.grad.row(b) * (w[static_cast<std::size_t>(r)] * inv[static_cast<std::size_t>(b)]);
    }
    p.accumulate(g);
  });
}

template <typename Scalar>
Var<Scalar> seq_concat(const Var<Scalar>& a, Eigen::Index len_a, const Var<Scalar>& b, Eigen::Index len_b) {
  require(a.cols() == b.cols(), "seq_concat widths differ");
  require(a.rows() % len_a == 0 && b.rows() % len_b == 0 && a.rows() / len_a == b.rows() / len_b,
          "seq_concat batch sizes differ");
  const Eigen::Index batch = a.rows() / len_a;
  const Eigen::Index len = len_a + len_b;
  Matrix<Scalar> v(batch * len, a.cols());
  for (Eigen::Index i = 0; i < batch; ++i) {
    v.middleRows(i * len, len_a) = a.value().middleRows(i * len_a, len_a);
    v.middleRows(i * len + len_a, len_b) = b.value().middleRows(i * len_b, len_b);
  }
  return make_result<Scalar>(std::move(v), {a.node(), b.node()}, [batch, len_a, len_b](Node<Scalar>& n) {
    const Eigen::Index len = len_a + len_b;
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (needs(pa)) {
      Matrix<Scalar> g(batch * len_a, n.grad.cols());
      for (Eigen::Index i = 0; i < batch; ++i) g.middleRows(i * len_a, len_a) = n.grad.middleRows(i * len, len_a);
      pa.accumulate(g);
    }
    if (needs(pb)) {
      Matrix<Scalar> g(batch * len_b, n.grad.cols());
      for (Eigen::Index i = 0; i < batch; ++i) g.middleRows(i * len_b, len_b) = n.grad.middleRows(i * len + len_a, len_b);
      pb.accumulate(g);
    }
  });
}

template <typename Scalar>
Var<Scalar> seq_slice(const Var<Scalar>& x, Eigen::Index seq_len, Eigen::Index start, Eigen::Index len) {
  require(x.rows() % seq_len == 0 && start >= 0 && start + len <= seq_len, "seq_slice range");
  const Eigen::Index batch = x.rows() / seq_len;
  Matrix<Scalar> v(batch * len, x.cols());
  for (Eigen::Index i = 0; i < batch; ++i) v.middleRows(i * len, len) = x.value().middleRows(i * seq_len + start, len);
  return make_result<Scalar>(std::move(v), {x.node()}, [batch, seq_len, start, len](Node<Scalar>& n) {
    auto& p = *n.parents[0];
    Matrix<Scalar> g = Matrix<Scalar>::Zero(p.value.rows(), p.value.cols());
    for (Eigen::Index i = 0; i < batch; ++i) g.middleRows(i * seq_len + start, len) = n.grad.middleRows(i * len, len);
    p.accumulate(g);
  });
}

template <typename Scalar>
Var<Scalar> seq_broadcast_add(const Var<Scalar>& x, const Var<Scalar>& v, Eigen::Index seq_len) {
  require(x.rows() % seq_len == 0 && x.rows() / seq_len == v.rows() && x.cols() == v.cols(), "seq_broadcast_add shapes");
  Matrix<Scalar> out = x.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) += v.value().row(r / seq_len);
  return make_result<Scalar>(std::move(out), {x.node(), v.node()}, [seq_len](Node<Scalar>& n) {
    auto& px = *n.parents[0];
    auto& pv = *n.parents[1];
    if (needs(px)) px.accumulate(n.grad);
    if (needs(pv)) {
      Matrix<Scalar> g = Matrix<Scalar>::Zero(pv.value.rows(), pv.value.cols());
      for (Eigen::Index r = 0; r < n.grad.rows(); ++r) g.row(r / seq_len) += n.grad.row(r);
      pv.accumulate(g);
    }
  });
}

template <typename Scalar>
Var<Scalar> time_unfold(const Var<Scalar>& x, Eigen::Index seq_len, int kernel) {
  require(kernel >= 1 && kernel % 2 == 1, "time_unfold kernel must be odd");
  require(x.rows() % seq_len == 0, "time_unfold rows not a multiple of seq_len");
  const Eigen::Index d = x.cols();
  const int r = kernel / 2;
  Matrix<Scalar> v = Matrix<Scalar>::Zero(x.rows(), d * kernel);
  for (Eigen::Index row = 0; row < x.rows(); ++row) {
    const Eigen::Index t = row % seq_len;
    for (int k = -r; k <= r; ++k) {
      const Eigen::Index s = t + k;
      if (s < 0 || s >= seq_len) continue;
      v.block(row, (k + r) * d, 1, d) = x.value().row(row + k);
    }
  }
  return make_result<Scalar>(std::move(v), {x.node()}, [seq_len, r, d](Node<Scalar>& n) {
    auto& p = *n.parents[0];
    Matrix<Scalar> g = Matrix<Scalar>::Zero(p.value.rows(), d);
    for (Eigen::Index row = 0; row < g.rows(); ++row) {
      const Eigen::Index t = row % seq_len;
      for (int k = -r; k <= r; ++k) {
        const Eigen::Index s = t + k;
        if (s < 0 || s >= seq_len) continue;
        g.row(row + k) += n.grad.block(row, (k + r) * d, 1, d);
      }
    }
    p.accumulate(g);
  });
}

template <typename Scalar>
Var<Scalar> where_rows(std::span<const char> use_null, const Var<Scalar>& a, const Var<Scalar>& null_row) {
  require(static_cast<Eigen::Index>(use_null.size()) == a.rows(), "where_rows flag count");
  require(null_row.rows() == 1 && null_row.cols() == a.cols(), "where_rows null width");
  std::vector<char> flags(use_null.begin(), use_null.end());
  Matrix<Scalar> v = a.value();
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    if (flags[static_cast<std::size_t>(i)]) v.row(i) = null_row.value().row(0);
  }
  return make_result<Scalar>(std::move(v), {a.node(), null_row.node()}, [flags = std::move(flags)](Node<Scalar>& n) {
    auto& pa = *n.parents[0];
    auto& pn = *n.parents[1];
    Matrix<Scalar> ga = n.grad;
    Matrix<Scalar> gn = Matrix<Scalar>::Zero(1, n.grad.cols());
    for (Eigen::Index i = 0; i < ga.rows(); ++i) {
      if (flags[static_cast<std::size_t>(i)]) {
        gn += ga.row(i);
        ga.row(i).setZero();
      }
    }
    if (needs(pa)) pa.accumulate(ga);
    if (needs(pn)) pn.accumulate(gn);
  });
}

template <typename Scalar>
Var<Scalar> where_seq(std::span<const char> use_null, const Var<Scalar>& a, const Var<Scalar>& null_row, Eigen::Index seq_len) {
  require(a.rows() == static_cast<Eigen::Index>(use_null.size()) * seq_len, "where_seq flag count");
  require(null_row.rows() == 1 && null_row.cols() == a.cols(), "where_seq null width");
  std::vector<char> flags(use_null.begin(), use_null.end());
  Matrix<Scalar> v = a.value();
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    if (flags[static_cast<std::size_t>(r / seq_len)]) v.row(r) = null_row.value().row(0);
  }
  return make_result<Scalar>(std::move(v), {a.node(), null_row.node()}, [flags = std::move(flags), seq_len](Node<Scalar>& n) {
    auto& pa = *n.parents[0];
    auto& pn = *n.parents[1];
    Matrix<Scalar> ga = n.grad;
    Matrix<Scalar> gn = Matrix<Scalar>::Zero(1, n.grad.cols());
    for (Eigen::Index r = 0; r < ga.rows(); ++r) {
      if (flags[static_cast<std::size_t>(r / seq_len)]) {
        gn += ga.row(r);
        ga.row(r).setZero();
      }
    }
    if (needs(pa)) pa.accumulate(ga);
    if (needs(pn)) pn.accumulate(gn);
  });
}

// ---- losses ---------------------------------------------------------------

namespace {

template <typename Scalar>
Matrix<Scalar> row_softmax(const Matrix<Scalar>& logits) {
  Matrix<Scalar> p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const Scalar mx = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

template <typename Scalar>
Scalar row_log_softmax_at(const Matrix<Scalar>& logits, Eigen::Index i, int label) {
  const Scalar mx = logits.row(i).maxCoeff();
  const Scalar lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
  return logits(i, label) - lse;
}

}  // namespace

template <typename Scalar>
Var<Scalar> softmax_cross_entropy(const Var<Scalar>& logits, std::span<const int> labels) {
  require(static_cast<Eigen::Index>(labels.size()) == logits.rows(), "softmax_cross_entropy label count");
  std::vector<int> lab(labels.begin(), labels.end());
  Scalar total = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    require(lab[static_cast<std::size_t>(i)] >= 0 && lab[static_cast<std::size_t>(i)] < logits.cols(), "label out of range");
    total -= row_log_softmax_at(logits.value(), i, lab[static_cast<std::size_t>(i)]);
  }
  Matrix<Scalar> v(1, 1);
  v(0, 0) = total / static_cast<Scalar>(logits.rows());
  return make_result<Scalar>(std::move(v), {logits.node()}, [lab = std::move(lab)](Node<Scalar>& n) {
    auto& p = *n.parents[0];
    Matrix<Scalar> g = row_softmax(p.value);
    for (std::size_t i = 0; i < lab.size(); ++i) g(static_cast<Eigen::Index>(i), lab[i]) -= Scalar(1);
    g *= n.grad(0, 0) / static_cast<Scalar>(g.rows());
    p.accumulate(g);
  });
}

template <typename Scalar>
Var<Scalar> sum_log_softmax_at(const Var<Scalar>& logits, std::span<const int> labels) {
  require(static_cast<Eigen::Index>(labels.size()) == logits.rows(), "sum_log_softmax_at label count");
  std::vector<int> lab(labels.begin(), labels.end());
  Scalar total = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    require(lab[static_cast<std::size_t>(i)] >= 0 && lab[static_cast<std::size_t>(i)] < logits.cols(), "label out of range");
    total += row_log_softmax_at(logits.value(), i, lab[static_cast<std::size_t>(i)]);
  }
  Matrix<Scalar> v(1, 1);
  v(0, 0) = total;
  return make_result<Scalar>(std::move(v), {logits.node()}, [lab = std::move(lab)](Node<Scalar>& n) {
    auto& p = *n.parents[0];
    Matrix<Scalar> g = -row_softmax(p.value);
    for (std::size_t i = 0; i < lab.size(); ++i) g(static_cast<Eigen::Index>(i), lab[i]) += Scalar(1);
    p.accumulate(g * n.grad(0, 0));
  });
}

template <typename Scalar>
Var<Scalar> masked_huber(const Var<Scalar>& pred, const Matrix<Scalar>& target, std::span<const float> row_mask, Scalar delta) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), "masked_huber shapes differ");
  require(row_mask.empty() || static_cast<Eigen::Index>(row_mask.size()) == pred.rows(), "masked_huber mask length");
  if (!(delta > Scalar(0))) throw UsageError("huber delta must be positive");
  std::vector<char> keep(static_cast<std::size_t>(pred.rows()), 1);
  if (!row_mask.empty()) {
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = row_mask[i] != 0.0f;
  }
  Eigen::Index kept = 0;
  for (char k : keep) kept += k;
  if (kept == 0) throw DataError("huber loss over an all-masked batch");
  const Scalar inv = Scalar(1) / static_cast<Scalar>(kept * pred.cols());

  Matrix<Scalar> diff = pred.value() - target;
  Scalar total = 0;
  for (Eigen::Index i = 0; i < diff.rows(); ++i) {
    if (!keep[static_cast<std::size_t>(i)]) {
      diff.row(i).setZero();
      continue;
    }
    for (Eigen::Index j = 0; j < diff.cols(); ++j) {
      const Scalar a = std::abs(diff(i, j));
      total += a <= delta ? Scalar(0.5) * a * a : delta * (a - Scalar(0.5) * delta);
    }
  }
  Matrix<Scalar> v(1, 1);
  v(0, 0) = total * inv;
  return make_result<Scalar>(std::move(v), {pred.node()}, [diff = std::move(diff), delta, inv](Node<Scalar>& n) {
    Matrix<Scalar> g = diff.unaryExpr([delta](Scalar d) { return std::clamp(d, -delta, delta); });
    n.parents[0]->accumulate(g * (inv * n.grad(0, 0)));
  });
}

template <typename Scalar>
Var<Scalar> masked_mse(const Var<Scalar>& pred, const Matrix<Scalar>& target, std::span<const float> row_mask) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), "masked_mse shapes differ");
  require(row_mask.empty() || static_cast<Eigen::Index>(row_mask.size()) == pred.rows(), "masked_mse mask length");
  Matrix<Scalar> diff = pred.value() - target;
  Eigen::Index kept = 0;
  for (Eigen::Index i = 0; i < diff.rows(); ++i) {
    if (!row_mask.empty() && row_mask[static_cast<std::size_t>(i)] == 0.0f) {
      diff.row(i).setZero();
    } else {
      ++kept;
    }
  }
  if (kept == 0) throw DataError("mse over an all-masked batch");
  const Scalar inv = Scalar(1) / static_cast<Scalar>(kept * pred.cols());
  Matrix<Scalar> v(1, 1);
  v(0, 0) = diff.squaredNorm() * inv;
  return make_result<Scalar>(std::move(v), {pred.node()}, [diff = std::move(diff), inv](Node<Scalar>& n) {
    n.parents[0]->accumulate(diff * (Scalar(2) * inv * n.grad(0, 0)));
  });
}

// ---- explicit instantiations ----------------------------------------------

#define COGEST_INSTANTIATE_AUTODIFF(S)                                                                          \
  template Var<S> make_result<S>(Matrix<S>, std::vector<Var<S>::NodePtr>, std::function<void(Node<S>&)>);      \
  template void backward<S>(const Var<S>&);                                                                     \
  template Var<S> matmul<S>(const Var<S>&, const Var<S>&);                                                      \
  template Var<S> matmul_nt<S>(const Var<S>&, const Var<S>&);                                                   \
  template Var<S> add<S>(const Var<S>&, const Var<S>&);                                                         \
  template Var<S> sub<S>(const Var<S>&, const Var<S>&);                                                         \
  template Var<S> hadamard<S>(const Var<S>&, const Var<S>&);                                                    \
  template Var<S> scale<S>(const Var<S>&, S);                                                                   \
  template Var<S> add_scalar<S>(const Var<S>&, S);                                                              \
  template Var<S> add_row<S>(const Var<S>&, const Var<S>&);                                                     \
  template Var<S> gelu<S>(const Var<S>&);                                                                       \
  template Var<S> silu<S>(const Var<S>&);                                                                       \
  template Var<S> tanh<S>(const Var<S>&);                                                                       \
  template Var<S> exp<S>(const Var<S>&);                                                                        \
  template Var<S> square<S>(const Var<S>&);                                                                     \
  template Var<S> sum<S>(const Var<S>&);                                                                        \
  template Var<S> mean<S>(const Var<S>&);                                                                       \
  template Var<S> reshape<S>(const Var<S>&, Eigen::Index, Eigen::Index);                                        \
  template Var<S> select_cols<S>(const Var<S>&, std::span<const int>);                                          \
  template Var<S> normalize_rows<S>(const Var<S>&, S);                                                          \
  template Var<S> layer_norm<S>(const Var<S>&, const Var<S>&, const Var<S>&, S);                                \
  template Var<S> embedding<S>(const Var<S>&, std::span<const int>);                                            \
  template Var<S> self_attention<S>(const Var<S>&, Eigen::Index, int);                                          \
  template Var<S> seq_mean_pool<S>(const Var<S>&, Eigen::Index, std::span<const float>);                        \
  template Var<S> seq_concat<S>(const Var<S>&, Eigen::Index, const Var<S>&, Eigen::Index);                      \
  template Var<S> seq_slice<S>(const Var<S>&, Eigen::Index, Eigen::Index, Eigen::Index);                        \
  template Var<S> seq_broadcast_add<S>(const Var<S>&, const Var<S>&, Eigen::Index);                             \
  template Var<S> time_unfold<S>(const Var<S>&, Eigen::Index, int);                                             \
  template Var<S> where_rows<S>(std::span<const char>, const Var<S>&, const Var<S>&);                           \
  template Var<S> where_seq<S>(std::span<const char>, const Var<S>&, const Var<S>&, Eigen::Index);              \
  template Var<S> softmax_cross_entropy<S>(const Var<S>&, std::span<const int>);                                \
  template Var<S> sum_log_softmax_at<S>(const Var<S>&, std::span<const int>);                                   \
  template Var<S> masked_huber<S>(const Var<S>&, const Matrix<S>&, std::span<const float>, S);                  \
  template Var<S> masked_mse<S>(const Var<S>&, const Matrix<S>&, std::span<const float>);

COGEST_INSTANTIATE_AUTODIFF(float)
COGEST_INSTANTIATE_AUTODIFF(double)

#undef COGEST_INSTANTIATE_AUTODIFF

}  // namespace cogest::nn
