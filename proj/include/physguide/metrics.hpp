#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "physguide/core.hpp"

namespace physguide {

struct ViolationCounts {
  std::size_t collision = 0;
  std::size_t speed = 0;
  std::size_t acceleration = 0;

  bool operator==(const ViolationCounts&) const = default;
};

/// Batch-level evaluation of a set of samples against a reference rollout.
struct SampleReport {
  double validity = 0.0;
  double collision_rate = 0.0;
  /// Fraction of (sample, agent pair) combinations that ever collide.
  double pair_collision_rate = 0.0;
  double ade = 0.0;
  double fde = 0.0;
  double temporal_consistency = 0.0;
  double jerk_mean = 0.0;
  ViolationCounts violation_breakdown;
  double social_conformity = 0.0;
  /// Unset for batches with fewer than two samples.
  std::optional<double> diversity;
};

/// Mean position error over all agents and timesteps.
double ade(const Trajectory& pred, const Trajectory& ref);

/// Mean position error over agents at the final timestep.
double fde(const Trajectory& pred, const Trajectory& ref);

double validity_rate(std::span<const Trajectory> samples, const PhysicalLimits& limits);

/// Fraction of samples with at least one collision.
double collision_rate(std::span<const Trajectory> samples, const PhysicalLimits& limits);

/// Fraction of (sample, pair) combinations with at least one collision.
double pair_collision_rate(std::span<const Trajectory> samples, const PhysicalLimits& limits);

/**
 * Fraction of consecutive non-overlapping windows that are valid as
 * sub-trajectories. The last window is shorter when window does not divide T.
 */
double temporal_consistency(std::span<const Trajectory> samples, const PhysicalLimits& limits, std::size_t window);

/// Mean |a_{t+1} - a_t| / dt over agents and steps.
double jerk_profile(const Trajectory& traj);

/// sum over t, i < j with d < d_social of (1 - cos angle(v_i, v_j)) exp(-d / d_social).
double social_conformity(const Trajectory& traj, double d_social);

/// Median pairwise distance between flattened position sequences; 1 if that median is 0.
double median_embedding_distance(std::span<const Trajectory> samples);

/// -log det(K + eps I) with K_ij = exp(-|z_i - z_j|^2 / (2 sigma_k^2)); median heuristic when sigma_k unset.
double diversity_logdet(std::span<const Trajectory> samples, std::optional<double> sigma_k = std::nullopt,
                        double eps = 1e-6);

ViolationCounts violation_breakdown(std::span<const Trajectory> samples, const PhysicalLimits& limits);

struct MetricsConfig {
  double d_social = 5.0;  // m
  std::size_t tc_window = 10;
  std::optional<double> sigma_k;

  void validate() const;
};

/// Every metric over a batch, each sample scored against the same reference.
SampleReport evaluate_batch(std::span<const Trajectory> samples, const Trajectory& reference,
                            const PhysicalLimits& limits, const MetricsConfig& cfg = {});

std::string to_json(const SampleReport& report);

}  // namespace physguide
