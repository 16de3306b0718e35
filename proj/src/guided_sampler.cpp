#include "physguide/guided_sampler.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace physguide {

namespace {

constexpr std::array<std::pair<ScheduleFamily, std::string_view>, 4> kFamilyNames{{
    {ScheduleFamily::constant, "constant"},
    {ScheduleFamily::linear, "linear"},
    {ScheduleFamily::quadratic, "quadratic"},
    {ScheduleFamily::exponential, "exponential"},
}};

double l2_norm(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

EnergyReport evaluate(const Trajectory& x, const EnergyConfig& cfg, const SamplerOptions& opts) {
  if (opts.prune_pairs) return total_energy_and_grad(x, cfg, build_graph(x, opts.graph, EdgeWeights::skip));
  return total_energy_and_grad(x, cfg);
}

}  // namespace

std::string_view to_string(ScheduleFamily f) {
  for (const auto& [k, name] : kFamilyNames) {
    if (k == f) return name;
  }
  return "unknown";
}

ScheduleFamily schedule_family_from_string(std::string_view name) {
  for (const auto& [k, n] : kFamilyNames) {
    if (n == name) return k;
  }
  throw InputError("unknown schedule family: " + std::string(name));
}

void GuidanceSchedule::validate() const {
  if (!(lambda0 >= 0.0)) throw InputError("lambda0 must be nonnegative");
  if (!(exponent > 0.0)) throw InputError("schedule exponent must be positive");
}

double guidance_strength(std::size_t t, std::size_t total, const GuidanceSchedule& sched) {
  if (total == 0 || t > total) throw IndexError("guidance_strength step out of range");
  const double frac = static_cast<double>(t) / static_cast<double>(total);
  switch (sched.family) {
    case ScheduleFamily::constant:
      return sched.lambda0;
    case ScheduleFamily::linear:
      return sched.lambda0 * frac;
    case ScheduleFamily::quadratic:
      return sched.lambda0 * std::pow(frac, sched.exponent);
    case ScheduleFamily::exponential:
      return sched.lambda0 * std::exp(frac - 1.0);
  }
  return 0.0;
}

void SamplerOptions::validate() const {
  if (!(c_crit > 0.0)) throw InputError("c_crit must be positive");
  if (clip_grad_norm && !(*clip_grad_norm > 0.0)) throw InputError("clip_grad_norm must be positive");
  if (max_attempts < 1) throw InputError("max_attempts must be at least 1");
  graph.validate();
}

void SamplerDiagnostics::record(const StepRecord& rec) {
  grad_norms.push_back(rec.grad_norm);
  energies.push_back(rec.energy);
  etas.push_back(rec.eta);
  ++steps;
  explosion_flag = explosion_flag || rec.clipped;
}

GradientExplosion::GradientExplosion(std::size_t step, double grad_norm, SamplerDiagnostics diag)
    : std::runtime_error("gradient explosion at step " + std::to_string(step)),
      step_(step),
      grad_norm_(grad_norm),
      diag_(std::move(diag)) {}

double explosion_threshold(double c_crit, double eta) {
  if (!(eta > 0.0)) return std::numeric_limits<double>::infinity();
  return c_crit / std::sqrt(eta);
}

std::pair<Trajectory, StepRecord> guided_reverse_step(const Trajectory& noisy, std::size_t t, const BaseModel& model,
                                                      const EnergyConfig& cfg, const GuidanceSchedule& sched,
                                                      const Trajectory& prior, Rng& rng, const SamplerOptions& opts) {
  if (t < 1) throw IndexError("guided_reverse_step requires t >= 1");
  Trajectory next = reverse_step(noisy, t, model, prior, rng);
  const double lambda = guidance_strength(t, model.schedule().steps(), sched);

  EnergyReport report = evaluate(noisy, cfg, opts);
  StepRecord rec{t, l2_norm(report.grad.values()), report.e_total, lambda, false};
  if (!std::isfinite(rec.grad_norm) || !std::isfinite(rec.energy)) {
    throw GradientExplosion(t, rec.grad_norm, {});
  }
  if (lambda > 0.0) {
    double scale = lambda;
    if (rec.grad_norm >= explosion_threshold(opts.c_crit, lambda)) {
      if (!opts.clip_grad_norm) throw GradientExplosion(t, rec.grad_norm, {});
      rec.clipped = true;
      scale *= *opts.clip_grad_norm / rec.grad_norm;
    }
    auto dst = next.values();
    const auto g = report.grad.values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] -= scale * g[k];
  }
  return {std::move(next), rec};
}

SampleResult sample(const Scenario& scenario, const BaseModel& model, const EnergyConfig& cfg,
                    const GuidanceSchedule& sched, std::uint64_t seed, const SamplerOptions& opts) {
  scenario.validate();
  cfg.validate();
  sched.validate();
  opts.validate();
  const Trajectory prior = model.prior_mean(scenario);
  Rng rng(seed);
  Trajectory x = sample_terminal(model, prior, rng);
  SamplerDiagnostics diag;
  diag.attempts = 1;
  for (std::size_t t = model.schedule().steps(); t >= 1; --t) {
    try {
      auto [next, rec] = guided_reverse_step(x, t, model, cfg, sched, prior, rng, opts);
      diag.record(rec);
      x = std::move(next);
    } catch (const GradientExplosion& e) {
      diag.explosion_flag = true;
      throw GradientExplosion(e.step(), e.grad_norm(), std::move(diag));
    }
  }
  diag.final_energy = evaluate(x, cfg, opts).e_total;
  return {std::move(x), std::move(diag)};
}

std::vector<double> harmonic_step_sizes(double eta0, std::size_t iterations) {
  if (!(eta0 > 0.0)) throw InputError("eta0 must be positive");
  std::vector<double> eta(iterations);
  for (std::size_t k = 0; k < iterations; ++k) eta[k] = eta0 / static_cast<double>(k + 1);
  return eta;
}

SampleResult langevin_refine(const Trajectory& traj, const EnergyConfig& cfg, std::span<const double> step_sizes,
                             std::size_t iterations, Rng& rng, const LangevinOptions& opts) {
  cfg.validate();
  if (opts.clip_grad_norm && !(*opts.clip_grad_norm > 0.0)) throw InputError("clip_grad_norm must be positive");
  if (iterations > step_sizes.size()) throw InputError("langevin_refine needs one step size per iteration");
  for (std::size_t k = 0; k < iterations; ++k) {
    if (!(step_sizes[k] > 0.0)) throw InputError("langevin step sizes must be positive");
  }
  Trajectory x = traj;
  SamplerDiagnostics diag;
  diag.attempts = 1;
  for (std::size_t k = 0; k < iterations; ++k) {
    const double eta = step_sizes[k];
    const EnergyReport report = total_energy_and_grad(x, cfg);
    StepRecord rec{k + 1, l2_norm(report.grad.values()), report.e_total, eta, false};
    double scale = eta;
    if (!std::isfinite(rec.grad_norm) || rec.grad_norm >= explosion_threshold(opts.c_crit, eta)) {
      if (!opts.clip_grad_norm || !std::isfinite(rec.grad_norm)) {
        diag.explosion_flag = true;
        throw GradientExplosion(k + 1, rec.grad_norm, std::move(diag));
      }
      rec.clipped = true;
      scale *= *opts.clip_grad_norm / rec.grad_norm;
    }
    diag.record(rec);
    const double noise = opts.deterministic ? 0.0 : std::sqrt(2.0 * eta);
    auto dst = x.values();
    const auto g = report.grad.values();
    for (std::size_t c = 0; c < dst.size(); ++c) {
      dst[c] -= scale * g[c];
      if (noise > 0.0) dst[c] += noise * rng.normal();
    }
  }
  diag.final_energy = total_energy_and_grad(x, cfg).e_total;
  return {std::move(x), std::move(diag)};
}

bool detect_gradient_explosion(const SamplerDiagnostics& diag, double c_crit, std::span<const double> eta) {
  if (diag.grad_norms.empty()) throw InputError("detect_gradient_explosion needs a non-empty series");
  if (eta.size() != diag.grad_norms.size()) throw InputError("step sizes must match the gradient series");
  for (std::size_t k = 0; k < eta.size(); ++k) {
    if (!std::isfinite(diag.grad_norms[k])) return true;
    if (diag.grad_norms[k] >= explosion_threshold(c_crit, eta[k])) return true;
  }
  return false;
}

std::uint64_t rejection_attempt_seed(std::uint64_t seed, std::size_t attempt) {
  return attempt == 0 ? seed : derive_seed(seed, attempt);
}

RejectionResult rejection_sample(const Scenario& scenario, const BaseModel& model, const PhysicalLimits& limits,
                                 std::size_t max_attempts, std::uint64_t seed) {
  if (max_attempts < 1) throw InputError("max_attempts must be at least 1");
  scenario.validate();
  RejectionResult result;
  for (std::size_t k = 0; k < max_attempts; ++k) {
    Trajectory draw = sample_unguided(scenario, model, rejection_attempt_seed(seed, k));
    result.attempts = k + 1;
    if (is_valid(draw, limits)) {
      result.trajectory = draw;
      result.last_draw = std::move(draw);
      return result;
    }
    result.last_draw = std::move(draw);
  }
  return result;
}

}  // namespace physguide
