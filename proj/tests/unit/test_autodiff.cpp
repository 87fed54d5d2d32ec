#include <doctest.h>

#include <vector>

#include "cogest/core/random.hpp"
#include "cogest/nn/adam.hpp"
#include "cogest/nn/layers.hpp"
#include "gradcheck.hpp"

using namespace cogest;
using nn::Var;
using V = std::vector<Var<double>>;

namespace {

MatrixXd rnd(Rng& rng, Eigen::Index r, Eigen::Index c) { return rng.normal_matrix<double>(r, c); }

// Contracts every op output with a fixed random weight so gradients are non-trivial.
Var<double> probe(const Var<double>& x, std::uint64_t seed = 99) {
  Rng rng(seed);
  return nn::sum(nn::hadamard(x, nn::constant(rng.normal_matrix<double>(x.rows(), x.cols()))));
}

}  // namespace

TEST_CASE("elementwise and matrix ops match finite differences") {
  Rng rng(1);
  const double tol = 1e-6;
  CHECK(test::max_grad_error({rnd(rng, 3, 4), rnd(rng, 4, 2)}, [](const V& v) { return probe(nn::matmul(v[0], v[1])); }) < tol);
  CHECK(test::max_grad_error({rnd(rng, 3, 4), rnd(rng, 5, 4)}, [](const V& v) { return probe(nn::matmul_nt(v[0], v[1])); }) < tol);
  CHECK(test::max_grad_error({rnd(rng, 3, 4), rnd(rng, 1, 4)}, [](const V& v) { return probe(nn::add_row(v[0], v[1])); }) < tol);
  CHECK(test::max_grad_error({rnd(rng, 3, 4), rnd(rng, 3, 4)}, [](const V& v) { return probe(nn::hadamard(v[0], v[1]) - v[1]); }) < tol);
  CHECK(test::max_grad_error({rnd(rng, 3, 4)}, [](const V& v) { return probe(nn::gelu(v[0])); }) < tol);
  CHECK(test::max_grad_error({rnd(rng, 3, 4)}, [](const V& v) { return probe(nn::silu(v[0])); }) < tol);
  CHECK(test::max_grad_error({rnd(rng, 3, 4)}, [](const V& v) { return probe(nn::tanh(v[0])); }) < tol);
  CHECK(test::max_grad_error({rnd(rng, 3, 4)}, [](const V& v) { return probe(nn::exp(v[0]) + nn::square(v[0])); }) < tol);
  CHECK(test::max_grad_error({rnd(rng, 3, 4)}, [](const V& v) { return nn::mean(nn::square(v[0])); }) < tol);
  CHECK(test::max_grad_error({rnd(rng, 3, 4)}, [](const V& v) { return probe(nn::reshape(v[0], 2, 6)); }) < tol);
  CHECK(test::max_grad_error({rnd(rng, 3, 5)}, [](const V& v) {
          const std::vector<int> cols{4, 0, 2, 0};
          return probe(nn::select_cols(v[0], std::span<const int>(cols)));
        }) < tol);
  CHECK(test::max_grad_error({rnd(rng, 4, 3)}, [](const V& v) { return probe(nn::normalize_rows(v[0])); }) < tol);
  CHECK(test::max_grad_error({rnd(rng, 4, 6), rnd(rng, 1, 6), rnd(rng, 1, 6)},
                             [](const V& v) { return probe(nn::layer_norm(v[0], v[1], v[2])); }) < 1e-5);
  CHECK(test::max_grad_error({rnd(rng, 5, 3)}, [](const V& v) {
          const std::vector<int> ids{4, 1, 1, 0};
          return probe(nn::embedding(v[0], std::span<const int>(ids)));
        }) < tol);
}

TEST_CASE("sequence ops match finite differences") {
  Rng rng(2);
  const double tol = 1e-6;
  // two sequences of length 3, width 2 heads x 2
  CHECK(test::max_grad_error({rnd(rng, 6, 12)}, [](const V& v) { return probe(nn::self_attention(v[0], 3, 2)); }) < tol);
  const std::vector<float> mask{1, 1, 0, 0, 1, 1};
  CHECK(test::max_grad_error({rnd(rng, 6, 4)}, [&](const V& v) { return probe(nn::seq_mean_pool(v[0], 3, std::span<const float>(mask))); }) < tol);
  CHECK(test::max_grad_error({rnd(rng, 2, 4), rnd(rng, 6, 4)}, [](const V& v) { return probe(nn::seq_concat(v[0], 1, v[1], 3)); }) < tol);
  CHECK(test::max_grad_error({rnd(rng, 8, 4)}, [](const V& v) { return probe(nn::seq_slice(v[0], 4, 1, 2)); }) < tol);
  CHECK(test::max_grad_error({rnd(rng, 6, 4), rnd(rng, 2, 4)}, [](const V& v) { return probe(nn::seq_broadcast_add(v[0], v[1], 3)); }) < tol);
  CHECK(test::max_grad_error({rnd(rng, 8, 3)}, [](const V& v) { return probe(nn::time_unfold(v[0], 4, 3)); }) < tol);
  const std::vector<char> flags{0, 1};
  CHECK(test::max_grad_error({rnd(rng, 2, 4), rnd(rng, 1, 4)}, [&](const V& v) { return probe(nn::where_rows(std::span<const char>(flags), v[0], v[1])); }) < tol);
  CHECK(test::max_grad_error({rnd(rng, 6, 4), rnd(rng, 1, 4)}, [&](const V& v) { return probe(nn::where_seq(std::span<const char>(flags), v[0], v[1], 3)); }) < tol);
}

TEST_CASE("loss ops match finite differences and closed forms") {
  Rng rng(3);
  const std::vector<int> labels{2, 0, 1};
  CHECK(test::max_grad_error({rnd(rng, 3, 4)}, [&](const V& v) { return nn::softmax_cross_entropy(v[0], std::span<const int>(labels)); }) < 1e-6);
  CHECK(test::max_grad_error({rnd(rng, 3, 4)}, [&](const V& v) { return nn::sum_log_softmax_at(v[0], std::span<const int>(labels)); }) < 1e-6);
  const MatrixXd target = rnd(rng, 3, 4);
  const std::vector<float> mask{1, 0, 1};
  CHECK(test::max_grad_error({rnd(rng, 3, 4)}, [&](const V& v) { return nn::masked_huber(v[0], target, std::span<const float>(mask), 0.7); }) < 1e-5);
  CHECK(test::max_grad_error({rnd(rng, 3, 4)}, [&](const V& v) { return nn::masked_mse(v[0], target, std::span<const float>(mask)); }) < 1e-6);

  // uniform logits -> ln C
  const auto ce = nn::softmax_cross_entropy(nn::constant<double>(MatrixXd::Zero(3, 8)), std::span<const int>(labels));
  CHECK(ce.item() == doctest::Approx(std::log(8.0)).epsilon(1e-12));
}

TEST_CASE("inference graphs drop parents") {
  Var<double> a(MatrixXd::Ones(2, 2), false);
  auto b = nn::gelu(nn::matmul(a, a));
  CHECK_FALSE(b.requires_grad());
  CHECK(b.node()->parents.empty());
}

TEST_CASE("mean pool rejects an all-masked item") {
  Var<double> x(MatrixXd::Ones(4, 2), false);
  const std::vector<float> mask{1, 1, 0, 0};
  CHECK_THROWS_AS(nn::seq_mean_pool(x, 2, std::span<const float>(mask)), DataError);
}

TEST_CASE("transformer layer gradient and adam descent") {
  Rng rng(5);
  nn::ParameterStore<double> store;
  nn::TransformerLayer<double> layer(store, "l", 4, 2, 2, rng);
  const MatrixXd x = rng.normal_matrix<double>(6, 4);
  CHECK(test::max_grad_error({x}, [&](const V& v) { return probe(layer(v[0], 3)); }) < 1e-5);

  // a few Adam steps on a quadratic decrease it
  store.zero_grad();
  nn::Adam<double> opt(store, {.lr = 1e-2});
  const MatrixXd target = rng.normal_matrix<double>(6, 4);
  double first = 0, last = 0;
  for (int i = 0; i < 50; ++i) {
    auto loss = nn::masked_mse(layer(nn::constant(x), 3), target, {});
    nn::backward(loss);
    opt.step();
    if (i == 0) first = loss.item();
    last = loss.item();
  }
  CHECK(last < first);
}
