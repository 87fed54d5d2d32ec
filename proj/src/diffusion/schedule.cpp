#include "cogest/diffusion/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "cogest/core/hash.hpp"

namespace cogest::diffusion {

nlohmann::json ScheduleConfig::to_json() const {
  return {{"T", steps}, {"kind", "linear"}, {"beta_start", beta_start}, {"beta_end", beta_end}, {"eta", eta}};
}

ScheduleConfig ScheduleConfig::from_json(const nlohmann::json& j) {
  ScheduleConfig c;
  try {
    c.steps = j.at("T").get<int>();
    if (j.at("kind").get<std::string>() != "linear") throw ScheduleError("unknown schedule kind " + j.at("kind").dump());
    c.beta_start = j.at("beta_start").get<double>();
    c.beta_end = j.at("beta_end").get<double>();
    c.eta = j.value("eta", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw ScheduleError(std::string("bad schedule manifest: ") + e.what());
  }
  return c;
}

ScheduleConfig ScheduleConfig::scaled_linear(int steps) {
  if (steps < 1) throw ScheduleError("T must be at least 1");
  ScheduleConfig c;
  const double k = 1000.0 / steps;
  c.steps = steps;
  c.beta_start = std::min(c.beta_start * k, 0.5);
  c.beta_end = std::min(c.beta_end * k, 0.999);
  return c;
}

NoiseSchedule::NoiseSchedule(const ScheduleConfig& cfg) : cfg_(cfg) {
  if (cfg.steps < 1) throw ScheduleError("T must be at least 1");
  if (!(cfg.beta_start > 0) || !(cfg.beta_end < 1) || cfg.beta_end < cfg.beta_start) {
    throw ScheduleError("betas must satisfy 0 < beta_start <= beta_end < 1");
  }
  if (!(cfg.eta >= 0 && cfg.eta <= 1)) throw ScheduleError("eta must lie in [0, 1]");
  const int n = cfg.steps;
  beta_.assign(static_cast<std::size_t>(n + 1), 0.0);
  alpha_bar_.assign(static_cast<std::size_t>(n + 1), 1.0);
  for (int t = 1; t <= n; ++t) {
    const double frac = n == 1 ? 0.0 : static_cast<double>(t - 1) / (n - 1);
    beta_[static_cast<std::size_t>(t)] = cfg.beta_start + frac * (cfg.beta_end - cfg.beta_start);
    alpha_bar_[static_cast<std::size_t>(t)] = alpha_bar_[static_cast<std::size_t>(t - 1)] * (1.0 - beta_[static_cast<std::size_t>(t)]);
  }
}

std::size_t NoiseSchedule::check(int t, int lo) const {
  if (t < lo || t > cfg_.steps) throw ScheduleError("step " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " + std::to_string(cfg_.steps) + "]");
  return static_cast<std::size_t>(t);
}

double NoiseSchedule::posterior_variance(int t) const {
  return (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t)) * beta(t);
}

std::string NoiseSchedule::hash() const { return hash_string(cfg_.to_json().dump()); }

}  // namespace cogest::diffusion
