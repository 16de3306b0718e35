#pragma once

#include <cstddef>
#include <vector>

#include "physguide/core.hpp"
#include "physguide/rng.hpp"

namespace physguide {

/// DDPM schedule indexed 1..steps; step 0 is the clean end with alpha_bar = 1.
class NoiseSchedule {
 public:
  /// Linear betas from beta_min to beta_max.
  static NoiseSchedule linear(std::size_t steps, double beta_min, double beta_max);

  std::size_t steps() const { return alphas_.size(); }
  double beta(std::size_t t) const;
  double alpha(std::size_t t) const;
  /// Cumulative product of alpha up to t; 1 at t = 0.
  double alpha_bar(std::size_t t) const;
  /// Standard deviation of the DDPM posterior q(x_{t-1} | x_t, x_0).
  double posterior_sigma(std::size_t t) const;
  /// Diffusion-loss importance weight 1 / (1 - alpha_bar_t).
  double importance_weight(std::size_t t) const;

  const std::vector<double>& alphas() const { return alphas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

 private:
  explicit NoiseSchedule(std::vector<double> alphas);
  void require_step(std::size_t t) const;

  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
};

struct PriorScale {
  double pos = 2.0;  // m
  double vel = 1.0;  // m/s
  double acc = 0.5;  // m/s^2

  double for_component(std::size_t c) const;
};

struct ModelConfig {
  std::size_t steps = 16;
  double beta_min = 1e-4;
  double beta_max = 0.2;
  double temperature = 0.8;
  PriorScale prior_scale;

  void validate() const;
};

/**
 * Closed-form stand-in for a learned denoiser.
 *
 * The clean trajectory is modelled as Gaussian around the constant-velocity
 * rollout of the scenario's initial states with diagonal covariance
 * prior_scale^2. Diffusion acts on the residual from that rollout, so a noisy
 * iterate x_t = m + sqrt(abar_t) r_0 + sqrt(1 - abar_t) eps stays in physical
 * coordinates around m. The posterior mean of r_0 given x_t is exact; the
 * reverse step plugs it into the DDPM posterior q(x_{t-1} | x_t, x_0).
 */
class BaseModel {
 public:
  explicit BaseModel(ModelConfig cfg = {});

  const ModelConfig& config() const { return cfg_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  double temperature() const { return cfg_.temperature; }

  Trajectory prior_mean(const Scenario& scenario) const { return constant_velocity_rollout(scenario); }

  /// Weight on (x_t - m) in E[x_0 | x_t] for component c.
  double clean_gain(std::size_t t, std::size_t c) const;
  /// Weight on (x_t - m) in the reverse-step mean for component c.
  double mean_gain(std::size_t t, std::size_t c) const;
  /// Per-component standard deviation of x_T around m.
  double terminal_sigma(std::size_t c) const;

 private:
  ModelConfig cfg_;
  NoiseSchedule schedule_;
};

/// sqrt(abar_t) x + sqrt(1 - abar_t) eps, componentwise. t = 0 returns x unchanged.
Trajectory forward_diffuse(const Trajectory& traj, std::size_t t, const NoiseSchedule& schedule, Rng& rng);

/// E[x_0 | x_t] under the Gaussian prior around `prior`.
Trajectory predict_clean(const Trajectory& noisy, std::size_t t, const BaseModel& model, const Trajectory& prior);

/// Reverse-step mean mu(x_t, t) = m + gain_t (x_t - m).
Trajectory denoise_mean(const Trajectory& noisy, std::size_t t, const BaseModel& model, const Trajectory& prior);
Trajectory denoise_mean(const Trajectory& noisy, std::size_t t, const BaseModel& model, const Scenario& scenario);

/// One unguided step: denoise_mean + temperature * sigma_t * eps. Draws one normal per component.
Trajectory reverse_step(const Trajectory& noisy, std::size_t t, const BaseModel& model, const Trajectory& prior,
                        Rng& rng);
Trajectory reverse_step(const Trajectory& noisy, std::size_t t, const BaseModel& model, const Scenario& scenario,
                        Rng& rng);

/// Draws x_T from the model's marginal at the noisy end of the chain.
Trajectory sample_terminal(const BaseModel& model, const Trajectory& prior, Rng& rng);

/// Full unguided chain from x_T down to x_0, seeded by `seed`.
Trajectory sample_unguided(const Scenario& scenario, const BaseModel& model, std::uint64_t seed);

}  // namespace physguide
