#include <doctest.h>

#include <cmath>

#include "cogest/core/random.hpp"
#include "cogest/diffusion/process.hpp"

using namespace cogest;
using namespace cogest::diffusion;

namespace {

// Independent recomputation of the linear schedule.
std::vector<double> abar_oracle(int T) {
  std::vector<double> a(static_cast<std::size_t>(T) + 1, 1.0);
  for (int t = 1; t <= T; ++t) {
    const double beta = T == 1 ? 1e-4 : 1e-4 + (2e-2 - 1e-4) * (t - 1) / double(T - 1);
    a[static_cast<std::size_t>(t)] = a[static_cast<std::size_t>(t) - 1] * (1.0 - beta);
  }
  return a;
}

}  // namespace

TEST_CASE("linear schedule tables") {
  const auto one = NoiseSchedule::make(1);
  CHECK(one.alpha_bar(1) == doctest::Approx(1 - 1e-4).epsilon(1e-15));
  CHECK(one.alpha_bar(0) == 1.0);
  const auto s = NoiseSchedule::make(1000);
  const auto oracle = abar_oracle(1000);
  for (int t = 1; t <= 1000; ++t) {
    CHECK(std::abs(s.alpha_bar(t) - oracle[static_cast<std::size_t>(t)]) < 1e-15);
    CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    CHECK(s.alpha_bar(t) > 0);
    CHECK(s.posterior_variance(t) <= 1 - s.alpha_bar(t - 1) + 1e-15);
  }
  CHECK(s.alpha_bar(1000) < 1e-4);
  CHECK(s.beta(1) == 1e-4);
  CHECK(s.beta(1000) == doctest::Approx(2e-2));
  CHECK_THROWS_AS(NoiseSchedule::make(0), ScheduleError);
  CHECK_THROWS_AS(s.beta(1001), ScheduleError);

  ScheduleConfig c;
  c.steps = 100;
  c.eta = 0.5;
  const NoiseSchedule a(c), b(ScheduleConfig::from_json(c.to_json()));
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != NoiseSchedule::make(100).hash());
  CHECK(a.sigma(10) == doctest::Approx(0.5 * std::sqrt(a.posterior_variance(10))));

  // rescaled short chains reach the same terminal noise level
  CHECK(NoiseSchedule(ScheduleConfig::scaled_linear(1000)).hash() == NoiseSchedule::make(1000).hash());
  const NoiseSchedule short_chain(ScheduleConfig::scaled_linear(100));
  CHECK(short_chain.beta(1) == doctest::Approx(1e-3));
  CHECK(short_chain.beta(100) == doctest::Approx(0.2));
  CHECK(short_chain.alpha_bar(100) < 1e-4);
  CHECK(NoiseSchedule::make(100).alpha_bar(100) > 0.3);
}

TEST_CASE("q_sample closed form and moments") {
  const auto s = NoiseSchedule::make(100);
  Rng rng(11);
  const MatrixXd x0 = rng.normal_matrix<double>(1, 64).array() + 2.0;
  CHECK(q_sample(s, x0, 5, MatrixXd(MatrixXd::Zero(1, 64))) == std::sqrt(s.alpha_bar(5)) * x0);
  const auto tiny = NoiseSchedule::make(1);
  CHECK((q_sample(tiny, x0, 1, rng.normal_matrix<double>(1, 64)) - x0).cwiseAbs().maxCoeff() < 0.05);

  for (int t : {1, 10, 25, 50, 100}) {
    const double ab = s.alpha_bar(t);
    double cross = 0, resid = 0;
    const double energy = x0.squaredNorm();
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
      const MatrixXd xt = q_sample(s, x0, t, rng.normal_matrix<double>(1, 64));
      cross += (xt.array() * x0.array()).sum();
      resid += (xt - std::sqrt(ab) * x0).squaredNorm();
    }
    const double mean_scale = cross / (draws * energy);
    const double var = resid / (draws * 64.0);
    CHECK(std::abs(mean_scale / std::sqrt(ab) - 1) < 0.02);
    CHECK(std::abs(var / (1 - ab) - 1) < 0.02);
  }
  CHECK_THROWS_AS(q_sample(s, x0, 3, MatrixXd(MatrixXd::Zero(2, 64))), ShapeError);
}

TEST_CASE("eps from x0 inversion") {
  const auto s = NoiseSchedule::make(100);
  Rng rng(12);
  double worst = 0;
  for (int i = 0; i < 200; ++i) {
    const int t = rng.uniform_int(1, 100);
    const MatrixXd x0 = rng.normal_matrix<double>(3, 5), eps = rng.normal_matrix<double>(3, 5);
    const MatrixXd xt = q_sample(s, x0, t, eps);
    worst = std::max(worst, (predict_eps_from_x0(s, xt, t, x0) - eps).cwiseAbs().maxCoeff());
    const MatrixXd x0h = rng.normal_matrix<double>(3, 5);
    const MatrixXd eh = predict_eps_from_x0(s, xt, t, x0h);
    worst = std::max(worst, (q_sample(s, x0h, t, eh) - xt).cwiseAbs().maxCoeff());
    CHECK(predict_eps_from_x0(s, xt, t, MatrixXd(xt / std::sqrt(s.alpha_bar(t)))).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(worst < 1e-10);
  CHECK_THROWS_AS(predict_eps_from_x0(s, MatrixXd(MatrixXd::Ones(1, 1)), 0, MatrixXd(MatrixXd::Ones(1, 1))), NumericalError);
}

TEST_CASE("x0-form step oracles") {
  const auto s = NoiseSchedule::make(100);
  Rng rng(13);
  const MatrixXd none;
  // deterministic step stays on the trajectory of the true (x0, eps)
  const MatrixXd x0 = rng.normal_matrix<double>(4, 6), eps = rng.normal_matrix<double>(4, 6);
  const MatrixXd xt = q_sample(s, x0, 40, eps);
  const MatrixXd prev = ddim_step(s, xt, x0, 40, 0.0, none);
  CHECK((prev - (std::sqrt(s.alpha_bar(39)) * x0 + std::sqrt(1 - s.alpha_bar(39)) * eps)).cwiseAbs().maxCoeff() < 1e-12);
  // last step returns the prediction
  CHECK(ddim_step(s, xt, x0, 1, 0.0, none) == x0);

  // posterior-matched sigma reproduces the DDPM posterior mean
  double worst = 0, worst_eq2 = 0;
  for (int i = 0; i < 1000; ++i) {
    const int t = rng.uniform_int(1, 100);
    const MatrixXd x = rng.normal_matrix<double>(2, 7), x0h = rng.normal_matrix<double>(2, 7);
    const double ab = s.alpha_bar(t), abp = s.alpha_bar(t - 1), b = s.beta(t);
    const MatrixXd mu = (std::sqrt(abp) * b / (1 - ab)) * x0h + (std::sqrt(1 - b) * (1 - abp) / (1 - ab)) * x;
    const double sigma = std::sqrt(s.posterior_variance(t));
    const MatrixXd zero = MatrixXd::Zero(2, 7);
    worst = std::max(worst, (ddim_step(s, x, x0h, t, sigma, zero) - mu).cwiseAbs().maxCoeff());
    // eps-form step with z = 0 has the same mean
    const MatrixXd eh = predict_eps_from_x0(s, x, t, x0h);
    worst_eq2 = std::max(worst_eq2, (ddpm_step_eps(s, x, eh, t, zero) - mu).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-8);
  CHECK(worst_eq2 < 1e-8);
  CHECK_THROWS_AS(ddim_step(s, xt, x0, 5, 1.0, MatrixXd(MatrixXd::Zero(4, 6))), ScheduleError);
}

TEST_CASE("eps-form step") {
  const auto s = NoiseSchedule::make(100);
  Rng rng(14);
  const MatrixXd x = rng.normal_matrix<double>(3, 3), zero = MatrixXd::Zero(3, 3);
  CHECK((ddpm_step_eps(s, x, zero, 30, zero) - x / std::sqrt(1 - s.beta(30))).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("huber objective") {
  Rng rng(15);
  const MatrixXd a = rng.normal_matrix<double>(4, 5);
  CHECK(huber_loss(a, a, {}, 1.0) == 0.0);
  const MatrixXd small = a.array() + 0.3;
  CHECK(huber_loss(small, a, {}, 1.0) == doctest::Approx(0.045));
  const double delta = 0.4;
  const MatrixXd big = a.array() + 2 * delta;
  CHECK(huber_loss(big, a, {}, delta) == doctest::Approx(delta * (2 * delta - delta / 2)));
  MatrixXd masked = a;
  masked.row(1).array() += 100;
  const std::vector<float> mask{1, 0, 1, 1};
  CHECK(huber_loss(masked, a, mask, 1.0) == 0.0);
  const std::vector<float> none{0, 0, 0, 0};
  CHECK_THROWS_AS(huber_loss(a, a, none, 1.0), DataError);
}

TEST_CASE("sampling loop contracts") {
  const auto s = NoiseSchedule::make(50);
  Rng crng(16);
  const MatrixXd c = crng.normal_matrix<double>(6, 4);
  DenoiseFn<double> fixed = [&](const MatrixXd&, int) { return c; };
  Rng r1(1);
  CHECK(sample_loop<double>(fixed, 6, 4, s, {}, r1) == c);

  DenoiseFn<double> shrink = [](const MatrixXd& x, int t) { return MatrixXd(0.5 * x.array() + 0.01 * t); };
  Rng a(9), b(9), g(9);
  const MatrixXd ra = sample_loop<double>(shrink, 6, 4, s, {}, a);
  const MatrixXd rb = sample_loop<double>(shrink, 6, 4, s, {}, b);
  CHECK(ra == rb);
  GuidanceFn<double> identity = [](const MatrixXd& x, int) { return x; };
  CHECK(sample_loop<double>(shrink, 6, 4, s, identity, g) == ra);

  DenoiseFn<double> wrong = [](const MatrixXd&, int) { return MatrixXd(MatrixXd::Zero(2, 2)); };
  Rng w(1);
  CHECK_THROWS_AS(sample_loop<double>(wrong, 6, 4, s, {}, w), ShapeError);
}
