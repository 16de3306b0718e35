#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include "physguide/base_diffusion.hpp"
#include "physguide/core.hpp"
#include "physguide/energy.hpp"
#include "physguide/interaction_graph.hpp"
#include "physguide/rng.hpp"

namespace physguide {

enum class ScheduleFamily { constant, linear, quadratic, exponential };

std::string_view to_string(ScheduleFamily f);
ScheduleFamily schedule_family_from_string(std::string_view name);

struct GuidanceSchedule {
  ScheduleFamily family = ScheduleFamily::quadratic;
  double lambda0 = 0.1;
  /// Power used by the quadratic family.
  double exponent = 2.0;

  void validate() const;
};

/// lambda(t) for t in [0, total]; t = total is the first (noisiest) reverse step.
double guidance_strength(std::size_t t, std::size_t total, const GuidanceSchedule& sched);

struct SamplerOptions {
  /// Explosion constant: a step explodes when |grad E| >= c_crit / sqrt(eta_t).
  double c_crit = 1e3;
  /// When set, over-threshold gradients are rescaled to this norm instead of aborting.
  std::optional<double> clip_grad_norm;
  std::size_t max_attempts = 1000;
  /// Restrict collision pairs to an interaction graph built at each step.
  bool prune_pairs = false;
  GraphConfig graph;

  void validate() const;
};

struct StepRecord {
  std::size_t step = 0;
  double grad_norm = 0.0;
  double energy = 0.0;
  /// Step size the gradient was applied with (lambda(t) for guided steps).
  double eta = 0.0;
  bool clipped = false;
};

struct SamplerDiagnostics {
  std::vector<double> grad_norms;
  std::vector<double> energies;
  std::vector<double> etas;
  std::size_t steps = 0;
  /// Energy of the returned trajectory.
  double final_energy = 0.0;
  bool explosion_flag = false;
  std::size_t attempts = 0;

  void record(const StepRecord& rec);
};

/// Thrown when a chain hits a non-finite or over-threshold gradient.
class GradientExplosion : public std::runtime_error {
 public:
  GradientExplosion(std::size_t step, double grad_norm, SamplerDiagnostics diag);

  std::size_t step() const { return step_; }
  double grad_norm() const { return grad_norm_; }
  const SamplerDiagnostics& diagnostics() const { return diag_; }

 private:
  std::size_t step_;
  double grad_norm_;
  SamplerDiagnostics diag_;
};

/// Gradient norm threshold c_crit / sqrt(eta); infinite for eta <= 0.
double explosion_threshold(double c_crit, double eta);

/**
 * One guided reverse step: reverse_step(x_t) - lambda(t) grad E(x_t).
 *
 * The gradient is taken at the current iterate. The rng stream consumed is
 * identical to the unguided step, so paired seeds stay aligned.
 */
std::pair<Trajectory, StepRecord> guided_reverse_step(const Trajectory& noisy, std::size_t t, const BaseModel& model,
                                                      const EnergyConfig& cfg, const GuidanceSchedule& sched,
                                                      const Trajectory& prior, Rng& rng,
                                                      const SamplerOptions& opts = {});

struct SampleResult {
  Trajectory trajectory;
  SamplerDiagnostics diagnostics;
};

/// Full guided chain from x_T. Deterministic in `seed`; throws GradientExplosion.
SampleResult sample(const Scenario& scenario, const BaseModel& model, const EnergyConfig& cfg,
                    const GuidanceSchedule& sched, std::uint64_t seed, const SamplerOptions& opts = {});

struct LangevinOptions {
  /// Drop the sqrt(2 eta) noise term.
  bool deterministic = false;
  double c_crit = 1e3;
  /// When set, over-threshold gradients are rescaled to this norm instead of aborting.
  std::optional<double> clip_grad_norm;
};

/// eta_k = eta0 / k for k = 1..iterations.
std::vector<double> harmonic_step_sizes(double eta0, std::size_t iterations);

/**
 * Energy-descent Langevin chain x <- x - eta_k grad E(x) + sqrt(2 eta_k) xi.
 *
 * Uses step_sizes[k] for iteration k; `iterations` must not exceed their count.
 * diagnostics.energies[k] is E before iteration k.
 */
SampleResult langevin_refine(const Trajectory& traj, const EnergyConfig& cfg, std::span<const double> step_sizes,
                             std::size_t iterations, Rng& rng, const LangevinOptions& opts = {});

/// True iff some recorded gradient norm reaches c_crit / sqrt(eta) at its step.
bool detect_gradient_explosion(const SamplerDiagnostics& diag, double c_crit, std::span<const double> eta);

struct RejectionResult {
  std::optional<Trajectory> trajectory;
  /// Last drawn sample, kept even on exhaustion.
  std::optional<Trajectory> last_draw;
  std::size_t attempts = 0;

  bool succeeded() const { return trajectory.has_value(); }
};

/// Seed of attempt k (0-based); attempt 0 reuses `seed` so it pairs with the unguided chain.
std::uint64_t rejection_attempt_seed(std::uint64_t seed, std::size_t attempt);

RejectionResult rejection_sample(const Scenario& scenario, const BaseModel& model, const PhysicalLimits& limits,
                                 std::size_t max_attempts, std::uint64_t seed);

}  // namespace physguide
