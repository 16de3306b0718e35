#include "physguide/base_diffusion.hpp"

#include <array>
#include <cmath>
#include <string>

namespace physguide {

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double beta_min, double beta_max) {
  if (steps == 0) throw InputError("noise schedule needs at least one step");
  if (!(beta_min > 0.0) || !(beta_max < 1.0) || !(beta_min <= beta_max)) {
    throw InputError("noise schedule betas must satisfy 0 < beta_min <= beta_max < 1");
  }
  std::vector<double> alphas(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(steps - 1);
    alphas[k] = 1.0 - (beta_min + (beta_max - beta_min) * frac);
  }
  return NoiseSchedule(std::move(alphas));
}

NoiseSchedule::NoiseSchedule(std::vector<double> alphas) : alphas_(std::move(alphas)) {
  alpha_bars_.reserve(alphas_.size());
  double running = 1.0;
  for (double a : alphas_) {
    running *= a;
    alpha_bars_.push_back(running);
  }
}

void NoiseSchedule::require_step(std::size_t t) const {
  if (t < 1 || t > steps()) throw IndexError("diffusion step " + std::to_string(t) + " out of range");
}

double NoiseSchedule::beta(std::size_t t) const { return 1.0 - alpha(t); }

double NoiseSchedule::alpha(std::size_t t) const {
  require_step(t);
  return alphas_[t - 1];
}

double NoiseSchedule::alpha_bar(std::size_t t) const {
  if (t == 0) return 1.0;
  require_step(t);
  return alpha_bars_[t - 1];
}

double NoiseSchedule::posterior_sigma(std::size_t t) const {
  const double ab = alpha_bar(t);
  const double ab_prev = alpha_bar(t - 1);
  return std::sqrt((1.0 - ab_prev) / (1.0 - ab) * beta(t));
}

double NoiseSchedule::importance_weight(std::size_t t) const { return 1.0 / (1.0 - alpha_bar(t)); }

double PriorScale::for_component(std::size_t c) const {
  switch (c) {
    case kPx:
    case kPy:
      return pos;
    case kVx:
    case kVy:
      return vel;
    default:
      return acc;
  }
}

void ModelConfig::validate() const {
  if (!(prior_scale.pos > 0.0) || !(prior_scale.vel > 0.0) || !(prior_scale.acc > 0.0)) {
    throw InputError("prior_scale components must be positive");
  }
  if (!(temperature >= 0.0)) throw InputError("temperature must be nonnegative");
}

BaseModel::BaseModel(ModelConfig cfg)
    : cfg_(cfg), schedule_(NoiseSchedule::linear(cfg.steps, cfg.beta_min, cfg.beta_max)) {
  cfg_.validate();
}

double BaseModel::clean_gain(std::size_t t, std::size_t c) const {
  const double ab = schedule_.alpha_bar(t);
  const double s2 = cfg_.prior_scale.for_component(c) * cfg_.prior_scale.for_component(c);
  return std::sqrt(ab) * s2 / (ab * s2 + 1.0 - ab);
}

double BaseModel::mean_gain(std::size_t t, std::size_t c) const {
  const double ab = schedule_.alpha_bar(t);
  const double ab_prev = schedule_.alpha_bar(t - 1);
  const double coef_clean = std::sqrt(ab_prev) * schedule_.beta(t) / (1.0 - ab);
  const double coef_noisy = std::sqrt(schedule_.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
  return coef_clean * clean_gain(t, c) + coef_noisy;
}

double BaseModel::terminal_sigma(std::size_t c) const {
  const double ab = schedule_.alpha_bar(schedule_.steps());
  const double s = cfg_.prior_scale.for_component(c);
  return std::sqrt(ab * s * s + 1.0 - ab);
}

Trajectory forward_diffuse(const Trajectory& traj, std::size_t t, const NoiseSchedule& schedule, Rng& rng) {
  if (t > schedule.steps()) throw IndexError("forward_diffuse step out of range");
  const double ab = schedule.alpha_bar(t);
  const double keep = std::sqrt(ab);
  const double noise = std::sqrt(1.0 - ab);
  Trajectory out = traj;
  for (double& v : out.values()) v = keep * v + noise * rng.normal();
  return out;
}

namespace {

void require_match(const Trajectory& noisy, const Trajectory& prior) {
  if (!noisy.same_shape(prior)) throw InputError("noisy trajectory does not match the prior shape");
}

template <typename GainFn>
Trajectory affine_toward_prior(const Trajectory& noisy, const Trajectory& prior, GainFn&& gain) {
  require_match(noisy, prior);
  std::array<double, kStateDim> g{};
  for (std::size_t c = 0; c < kStateDim; ++c) g[c] = gain(c);
  Trajectory out = prior;
  auto dst = out.values();
  const auto x = noisy.values();
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g[k % kStateDim] * (x[k] - dst[k]);
  return out;
}

}  // namespace

Trajectory predict_clean(const Trajectory& noisy, std::size_t t, const BaseModel& model, const Trajectory& prior) {
  if (t > model.schedule().steps()) throw IndexError("predict_clean step out of range");
  if (t == 0) return noisy;
  return affine_toward_prior(noisy, prior, [&](std::size_t c) { return model.clean_gain(t, c); });
}

Trajectory denoise_mean(const Trajectory& noisy, std::size_t t, const BaseModel& model, const Trajectory& prior) {
  if (t < 1 || t > model.schedule().steps()) throw IndexError("denoise_mean step out of range");
  return affine_toward_prior(noisy, prior, [&](std::size_t c) { return model.mean_gain(t, c); });
}

Trajectory denoise_mean(const Trajectory& noisy, std::size_t t, const BaseModel& model, const Scenario& scenario) {
  return denoise_mean(noisy, t, model, model.prior_mean(scenario));
}

Trajectory reverse_step(const Trajectory& noisy, std::size_t t, const BaseModel& model, const Trajectory& prior,
                        Rng& rng) {
  Trajectory out = denoise_mean(noisy, t, model, prior);
  const double scale = model.temperature() * model.schedule().posterior_sigma(t);
  for (double& v : out.values()) v += scale * rng.normal();
  return out;
}

Trajectory reverse_step(const Trajectory& noisy, std::size_t t, const BaseModel& model, const Scenario& scenario,
                        Rng& rng) {
  return reverse_step(noisy, t, model, model.prior_mean(scenario), rng);
}

Trajectory sample_terminal(const BaseModel& model, const Trajectory& prior, Rng& rng) {
  std::array<double, kStateDim> sigma{};
  for (std::size_t c = 0; c < kStateDim; ++c) sigma[c] = model.terminal_sigma(c);
  Trajectory out = prior;
  auto v = out.values();
  for (std::size_t k = 0; k < v.size(); ++k) v[k] += sigma[k % kStateDim] * rng.normal();
  return out;
}

Trajectory sample_unguided(const Scenario& scenario, const BaseModel& model, std::uint64_t seed) {
  const Trajectory prior = model.prior_mean(scenario);
  Rng rng(seed);
  Trajectory x = sample_terminal(model, prior, rng);
  for (std::size_t t = model.schedule().steps(); t >= 1; --t) x = reverse_step(x, t, model, prior, rng);
  return x;
}

}  // namespace physguide
