#ifndef COGEST_DIFFUSION_SCHEDULE_HPP_
#define COGEST_DIFFUSION_SCHEDULE_HPP_

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "cogest/core/error.hpp"

namespace cogest::diffusion {

enum class ScheduleKind { linear };

class ScheduleError : public UsageError {
 public:
  explicit ScheduleError(const std::string& what) : UsageError("schedule error: " + what) {}
};

struct ScheduleConfig {
  int steps = 1000;
  ScheduleKind kind = ScheduleKind::linear;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  double eta = 0.0;  // sigma_t = eta * posterior std

  nlohmann::json to_json() const;
  static ScheduleConfig from_json(const nlohmann::json& j);
  /// Default beta range multiplied by 1000 / steps, so short chains end as
  /// close to pure noise as the 1000-step default.
  static ScheduleConfig scaled_linear(int steps);
};

/// Tables indexed by step t in [1, T]; alpha_bar(0) is defined as 1 so the
/// final reverse step returns the x0 prediction.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(const ScheduleConfig& cfg = {});
  static NoiseSchedule make(int steps, ScheduleKind kind = ScheduleKind::linear) {
    ScheduleConfig c;
    c.steps = steps;
    c.kind = kind;
    return NoiseSchedule(c);
  }

  int steps() const { return cfg_.steps; }
  const ScheduleConfig& config() const { return cfg_; }
  double beta(int t) const { return beta_[check(t, 1)]; }
  double alpha_bar(int t) const { return alpha_bar_[check(t, 0)]; }
  /// (1 - alpha_bar(t-1)) / (1 - alpha_bar(t)) * beta(t)
  double posterior_variance(int t) const;
  double sigma(int t) const { return cfg_.eta * std::sqrt(posterior_variance(t)); }

  /// Stable hex digest of the JSON manifest, used to pair checkpoints.
  std::string hash() const;

 private:
  std::size_t check(int t, int lo) const;

  ScheduleConfig cfg_;
  std::vector<double> beta_;       // index t, beta_[0] unused
  std::vector<double> alpha_bar_;  // index t, alpha_bar_[0] = 1
};

}  // namespace cogest::diffusion

#endif  // COGEST_DIFFUSION_SCHEDULE_HPP_
