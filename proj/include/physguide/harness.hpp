#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "physguide/base_diffusion.hpp"
#include "physguide/energy.hpp"
#include "physguide/guided_sampler.hpp"
#include "physguide/metrics.hpp"
#include "physguide/scenarios.hpp"
#include "physguide/serialization.hpp"

namespace physguide {

enum class MethodKind { unguided, guided, rejection, langevin };

std::string_view to_string(MethodKind kind);
MethodKind method_kind_from_string(std::string_view name);

struct MethodSpec {
  MethodKind kind = MethodKind::guided;
  /// guided only.
  GuidanceSchedule schedule;
  /// langevin only: energy descent applied to the unguided draw.
  std::size_t langevin_iterations = 50;
  double langevin_eta = 3e-3;
  bool langevin_deterministic = true;

  /// Row label: "unguided", "rejection", "langevin", or "guided_<family>".
  std::string label() const;
};

/**
 * One experiment. Every seed s yields one scenario instance per spec (the spec
 * seed is derived from s and the spec index) and every method draws its noise
 * from s, so rows that share a seed are paired.
 */
struct ExperimentConfig {
  std::vector<ScenarioSpec> scenarios{ScenarioSpec{}};
  std::vector<MethodSpec> methods = default_methods();
  /// Explicit seed list; when empty, seeds are base_seed, base_seed + 1, ...
  std::vector<std::uint64_t> seeds;
  std::size_t seed_count = 100;
  std::uint64_t base_seed = 0;
  EnergyConfig energy = default_sampling_energy();
  ModelConfig model;
  SamplerOptions sampler;
  MetricsConfig metrics;
  /// Widening of d_safe (m) in the energy used by descent methods, so iterates settle strictly outside d_safe.
  double descent_margin = 0.5;
  std::size_t workers = 1;

  std::vector<std::uint64_t> seed_list() const;
  void validate() const;

  /// Quadratic-schedule guided sampling and the unguided baseline.
  static std::vector<MethodSpec> default_methods();
  /// Inverse-distance guidance energy weighted by k_c, used by all sampling experiments.
  static EnergyConfig default_sampling_energy();
};

Json to_json(const ExperimentConfig& cfg);
/// Reads sections "scenarios" (list) or "scenario" (single), "methods", "seeds", "energy",
/// "model", "sampler", "metrics", "experiment" {seed_count, base_seed, workers, descent_margin}.
ExperimentConfig experiment_config_from_json(const Json& j, ExperimentConfig base = {});

/// Scenario instance used for seed `seed` of spec number `index`.
Scenario scenario_instance(const ScenarioSpec& spec, std::size_t index, std::uint64_t seed);

enum class RunStatus { ok, exploded, exhausted, infeasible };
std::string_view to_string(RunStatus status);

struct RunRecord {
  std::size_t scenario_index = 0;
  ScenarioKind kind = ScenarioKind::intersection;
  std::size_t method_index = 0;
  std::string method;
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::ok;
  /// Failed runs count as invalid and colliding.
  bool valid = false;
  bool collision = true;
  // Quality metrics; NaN when no trajectory was produced.
  double ade = 0.0;
  double fde = 0.0;
  double tc = 0.0;
  double jerk = 0.0;
  double social = 0.0;
  std::size_t attempts = 1;
  double max_grad_norm = 0.0;
  std::optional<Trajectory> trajectory;
};

/// One method run on one scenario instance with noise seed `seed`.
RunRecord run_single(const MethodSpec& method, const Scenario& scenario, std::uint64_t seed,
                     const ExperimentConfig& cfg);
/// Row fields and status; the trajectory is omitted.
Json to_json(const RunRecord& record);
/// agent,t,px,py,vx,vy,ax,ay
void write_trajectory_csv(const Trajectory& traj, std::ostream& out);

struct Stat {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

/// Mean and standard error over the finite values.
Stat summarize(const std::vector<double>& values);

struct PairedStat {
  double mean_diff = 0.0;
  double se = 0.0;
  /// mean_diff / se; 0 when se is 0.
  double t = 0.0;
  std::size_t n = 0;
};

/// Differences a[k] - b[k] over indices where both are finite.
PairedStat paired_difference(const std::vector<double>& a, const std::vector<double>& b);

struct MethodAggregate {
  std::size_t scenario_index = 0;
  ScenarioKind kind = ScenarioKind::intersection;
  std::string method;
  Stat validity, collision, ade, fde, tc, jerk, social, attempts;
  std::optional<double> diversity;
  double explosion_rate = 0.0;
  std::size_t infeasible = 0;
  ViolationCounts violations;
  /// Fraction of samples whose state at each timestep is collision-free and within limits.
  std::vector<double> validity_over_time;
};

struct PairedComparison {
  std::size_t scenario_index = 0;
  std::string method;
  std::string baseline;
  PairedStat validity;
  PairedStat collision;
};

struct ComparisonResult {
  std::vector<RunRecord> records;
  std::vector<MethodAggregate> aggregates;
  std::vector<PairedComparison> paired;
};

/// Runs every (scenario, method, seed) tuple; rows are ordered by scenario, method, then seed.
ComparisonResult run_comparison(const ExperimentConfig& cfg);

/// Runs the four schedule families with the guided method's lambda0 and exponent on identical seeds.
ComparisonResult run_schedule_ablation(const ExperimentConfig& cfg);

/// Columns scenario,kind,method,seed,validity,collision,ade,fde,tc,jerk,social,diversity,status;
/// per-method aggregates follow as rows whose seed column is "mean" or "se".
void write_comparison_csv(const ComparisonResult& result, std::ostream& out);
/// scenario,kind,method,t,valid_fraction
void write_validity_over_time_csv(const ComparisonResult& result, std::ostream& out);
/// scenario,kind,method,collision,speed,acceleration
void write_violation_csv(const ComparisonResult& result, std::ostream& out);
Json comparison_summary(const ComparisonResult& result, const ExperimentConfig& cfg);

struct ScalingRow {
  std::size_t n_agents = 0;
  std::size_t horizon = 0;
  double brute_seconds = 0.0;
  double pruned_seconds = 0.0;
  double mean_edges = 0.0;
};

struct ScalingResult {
  std::vector<ScalingRow> rows;
  /// Least-squares slope of log(brute time) against log(N); unset with fewer than two rows.
  std::optional<double> brute_slope;
  std::optional<double> pruned_slope;
};

struct ScalingOptions {
  std::size_t repetitions = 11;
  /// Agents per m^2 of the sparse placement.
  double density = 1e-3;
  /// Target wall time of one timed batch of evaluations, s.
  double batch_seconds = 0.05;
};

/// Times one energy-and-gradient evaluation (a guided step's energy cost) per N, single-threaded:
/// median of `repetitions` batches after one warm-up batch, with batches of all workloads interleaved.
/// The pruned time includes building the unweighted proximity graph.
ScalingResult run_scaling_study(const std::vector<std::size_t>& agent_counts, const ExperimentConfig& cfg,
                                const ScalingOptions& opts = {});
void write_scaling_csv(const ScalingResult& result, std::ostream& out);
Json scaling_summary(const ScalingResult& result);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct FailureRow {
  double density = 0.0;
  std::size_t n_agents = 0;
  std::size_t seeds = 0;
  std::size_t infeasible = 0;
  Stat validity;
  double collision_rate = 0.0;
  double explosion_rate = 0.0;
  double mean_grad_norm = 0.0;
};

/// urban_dense scenes at each density, sampled with the first guided method (quadratic default).
std::vector<FailureRow> run_failure_sweep(const std::vector<double>& densities, const ExperimentConfig& cfg);
void write_failure_csv(const std::vector<FailureRow>& rows, std::ostream& out);
Json failure_summary(const std::vector<FailureRow>& rows);

struct GradcheckReport {
  std::size_t trials = 0;
  std::size_t components = 0;
  /// Components within locus_margin of a non-smooth locus; excluded from the maximum.
  std::size_t near_locus = 0;
  double max_rel_error = 0.0;
  std::map<std::string, double> max_rel_error_by_variant;
  /// Components whose error exceeds the tolerance, keyed by the nearest locus ("none" when away from all).
  std::map<std::string, std::size_t> failure_loci;
  double tolerance = 1e-4;

  bool passed() const { return max_rel_error < tolerance; }
};

struct GradcheckOptions {
  double step = 1e-5;
  double locus_margin = 1e-3;
  double tolerance = 1e-4;
};

/**
 * Central finite-difference check of total_energy_and_grad on random
 * trajectories, cycling through the four collision variants and both
 * kinematic terms. Relative error per component is
 * |a - f| / max(|a|, |f|, 1e-6 (1 + max|a|)).
 */
GradcheckReport run_gradcheck(std::size_t trials, const EnergyConfig& cfg, std::uint64_t seed,
                              const GradcheckOptions& opts = {});
Json to_json(const GradcheckReport& report);

struct ComplexityRow {
  double epsilon = 0.0;
  /// head_on approach speed giving unguided validity near epsilon.
  double approach_speed = 0.0;
  double unguided_validity = 0.0;
  double mean_attempts = 0.0;
  std::size_t exhausted = 0;
  /// Fewest descent iterations after which at least 1 - epsilon of the draws are valid; unset if never reached.
  std::optional<std::size_t> guided_budget;
};

struct ComplexityOptions {
  std::size_t calibration_seeds = 400;
  std::size_t calibration_rounds = 18;
  std::size_t max_attempts = 5000;
  std::size_t max_budget = 1000;
  double eta = 3e-3;
};

/**
 * Two-agent head-on family indexed by epsilon. The approach speed is tuned so
 * that unguided validity is close to epsilon (slower agents overlap for longer).
 * Rejection cost is the mean number of attempts; the guided cost is the number
 * of deterministic energy-descent iterations, with the guidance energy's safety
 * distance widened by descent_margin, needed to make 1 - epsilon of the unguided
 * draws valid. Over-threshold gradients are clipped to the explosion threshold.
 */
std::vector<ComplexityRow> run_sample_complexity(const std::vector<double>& epsilons, const ExperimentConfig& cfg,
                                                 const ComplexityOptions& opts = {});

struct ConvergenceResult {
  std::vector<std::size_t> budgets;
  std::vector<double> validity;
  std::size_t starts = 0;
  std::size_t exploded = 0;
  /// Deterministic traces at the small step that increased energy at some iteration.
  std::size_t non_monotone_traces = 0;
  std::size_t traces = 0;
  /// Traces aborted by the explosion check; their recorded prefix is still checked.
  std::size_t exploded_traces = 0;
};

/**
 * Invalid starts are unguided intersection draws that fail validity. Each
 * budget runs langevin_refine with constant step `eta` from the same starts.
 * Energy traces use deterministic mode at `trace_eta`.
 */
ConvergenceResult run_convergence_study(const std::vector<std::size_t>& budgets, std::size_t starts,
                                        const ExperimentConfig& cfg, double eta = 3e-3, double trace_eta = 1e-4,
                                        std::size_t trace_iterations = 100);

struct RobustnessRow {
  double delta = 0.0;
  Stat deviation;
  std::size_t skipped = 0;
};

/// Mean per-seed RMS position deviation between guided samples at lambda0 and lambda0 + delta.
std::vector<RobustnessRow> run_robustness_study(const std::vector<double>& deltas, const ExperimentConfig& cfg);

struct StabilityResult {
  std::size_t sequences = 0;
  std::size_t smooth_wins = 0;
  Stat smooth;
  Stat inverse;
};

/**
 * Random iterate sequences whose pair distances straddle d_safe: agents start
 * near d_safe apart and each iterate jitters positions. Compares the
 * gradient_stability of smooth_exponential against inverse_distance on the same
 * sequences.
 */
StabilityResult run_stability_study(std::size_t sequences, std::size_t length, const EnergyConfig& cfg,
                                    std::uint64_t seed);

}  // namespace physguide
