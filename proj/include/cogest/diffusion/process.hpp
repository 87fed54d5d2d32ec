#ifndef COGEST_DIFFUSION_PROCESS_HPP_
#define COGEST_DIFFUSION_PROCESS_HPP_

#include <cmath>
#include <functional>
#include <span>

#include "cogest/core/error.hpp"
#include "cogest/core/random.hpp"
#include "cogest/core/types.hpp"
#include "cogest/diffusion/schedule.hpp"

namespace cogest::diffusion {

namespace detail {
template <typename A, typename B>
void same_shape(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}
}  // namespace detail

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
template <typename Scalar>
Matrix<Scalar> q_sample(const NoiseSchedule& s, const Matrix<Scalar>& x0, int t, const Matrix<Scalar>& eps) {
  detail::same_shape(x0, eps, "q_sample");
  const double ab = s.alpha_bar(t);
  return Scalar(std::sqrt(ab)) * x0 + Scalar(std::sqrt(1.0 - ab)) * eps;
}

/// eps = (x_t - sqrt(abar_t) x0_hat) / sqrt(1 - abar_t)
template <typename Scalar>
Matrix<Scalar> predict_eps_from_x0(const NoiseSchedule& s, const Matrix<Scalar>& x_t, int t, const Matrix<Scalar>& x0_hat) {
  detail::same_shape(x_t, x0_hat, "predict_eps_from_x0");
  const double ab = s.alpha_bar(t);
  if (!(1.0 - ab > 0)) throw NumericalError("alpha_bar(" + std::to_string(t) + ") = 1 leaves eps undefined");
  return (x_t - Scalar(std::sqrt(ab)) * x0_hat) / Scalar(std::sqrt(1.0 - ab));
}

/// x_{t-1} = sqrt(abar_{t-1}) x0_hat + sqrt(1 - abar_{t-1} - sigma^2) eps_hat + sigma z,
/// with eps_hat derived from x0_hat.
template <typename Scalar>
Matrix<Scalar> ddim_step(const NoiseSchedule& s, const Matrix<Scalar>& x_t, const Matrix<Scalar>& x0_hat, int t, double sigma,
                         const Matrix<Scalar>& z) {
  const double ab_prev = s.alpha_bar(t - 1);
  const double rest = 1.0 - ab_prev - sigma * sigma;
  if (sigma < 0 || rest < -1e-12) {
    throw ScheduleError("sigma_t^2 = " + std::to_string(sigma * sigma) + " exceeds 1 - alpha_bar(t-1) = " + std::to_string(1.0 - ab_prev));
  }
  Matrix<Scalar> out = Scalar(std::sqrt(ab_prev)) * x0_hat;
  if (rest > 0) out += Scalar(std::sqrt(rest)) * predict_eps_from_x0(s, x_t, t, x0_hat);
  if (sigma > 0) {
    detail::same_shape(x_t, z, "ddim_step noise");
    out += Scalar(sigma) * z;
  }
  return out;
}

/// x_{t-1} = (x_t - beta_t / sqrt(1 - abar_t) eps_hat) / sqrt(1 - beta_t) + sqrt(beta_t) z
template <typename Scalar>
Matrix<Scalar> ddpm_step_eps(const NoiseSchedule& s, const Matrix<Scalar>& x_t, const Matrix<Scalar>& eps_hat, int t,
                             const Matrix<Scalar>& z) {
  detail::same_shape(x_t, eps_hat, "ddpm_step_eps");
  detail::same_shape(x_t, z, "ddpm_step_eps noise");
  const double b = s.beta(t), ab = s.alpha_bar(t);
  return (x_t - Scalar(b / std::sqrt(1.0 - ab)) * eps_hat) / Scalar(std::sqrt(1.0 - b)) + Scalar(std::sqrt(b)) * z;
}

/// Mean over unmasked elements of the Huber function. `row_mask` holds one
/// flag per row; empty means all rows count.
template <typename Scalar>
double huber_loss(const Matrix<Scalar>& x0_hat, const Matrix<Scalar>& x0, std::span<const float> row_mask, double delta) {
  detail::same_shape(x0_hat, x0, "huber_loss");
  if (!(delta > 0)) throw UsageError("huber delta must be positive");
  if (!row_mask.empty() && static_cast<Eigen::Index>(row_mask.size()) != x0.rows()) throw ShapeError("huber mask length");
  double total = 0, count = 0;
  for (Eigen::Index r = 0; r < x0.rows(); ++r) {
    const double w = row_mask.empty() ? 1.0 : row_mask[static_cast<std::size_t>(r)];
    if (w == 0) continue;
    for (Eigen::Index c = 0; c < x0.cols(); ++c) {
      const double d = std::abs(static_cast<double>(x0_hat(r, c)) - static_cast<double>(x0(r, c)));
      total += w * (d <= delta ? 0.5 * d * d : delta * (d - 0.5 * delta));
    }
    count += w * static_cast<double>(x0.cols());
  }
  if (count == 0) throw DataError("huber loss over an all-masked input");
  return total / count;
}

/// x0 prediction for a noisy batch at step t.
template <typename Scalar>
using DenoiseFn = std::function<Matrix<Scalar>(const Matrix<Scalar>& x_t, int t)>;
/// Optional update of the freshly produced x_{t-1}; receives t-1.
template <typename Scalar>
using GuidanceFn = std::function<Matrix<Scalar>(const Matrix<Scalar>& x, int t)>;

/// Reverse process from x_T ~ N(0, I) using the x0-form step. Noise is drawn
/// from `rng` only when sigma_t > 0.
template <typename Scalar>
Matrix<Scalar> sample_loop(const DenoiseFn<Scalar>& model, Eigen::Index rows, Eigen::Index cols, const NoiseSchedule& s,
                           const GuidanceFn<Scalar>& guidance, Rng& rng) {
  Matrix<Scalar> x = rng.normal_matrix<Scalar>(rows, cols);
  for (int t = s.steps(); t >= 1; --t) {
    Matrix<Scalar> x0_hat = model(x, t);
    if (x0_hat.rows() != rows || x0_hat.cols() != cols) {
      throw ShapeError("model contract: denoiser returned " + std::to_string(x0_hat.rows()) + "x" + std::to_string(x0_hat.cols()));
    }
    const double sigma = s.sigma(t);
    Matrix<Scalar> z;
    if (sigma > 0) z = rng.normal_matrix<Scalar>(rows, cols);
    x = ddim_step(s, x, x0_hat, t, sigma, z);
    if (guidance) x = guidance(x, t - 1);
  }
  return x;
}

}  // namespace cogest::diffusion

#endif  // COGEST_DIFFUSION_PROCESS_HPP_
