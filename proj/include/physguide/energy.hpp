#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "physguide/core.hpp"
#include "physguide/interaction_graph.hpp"

namespace physguide {

enum class CollisionVariant { inverse_distance, smooth_exponential, gaussian_rbf, soft_minimum };

std::string_view to_string(CollisionVariant v);
CollisionVariant collision_variant_from_string(std::string_view name);

/// Which kinematic penalty enters the combined energy.
enum class KinematicTerm {
  speed_hinge,  ///< sum of max(0, |v| - v_max)^2
  consistency,  ///< lambda_v speed hinge + lambda_a acceleration hinge
};

std::string_view to_string(KinematicTerm k);
KinematicTerm kinematic_term_from_string(std::string_view name);

struct EnergyConfig {
  PhysicalLimits limits;
  CollisionVariant collision_variant = CollisionVariant::inverse_distance;
  double k_c = 100.0;
  /// Length scale of the smooth variants; d_safe when unset.
  std::optional<double> sigma;
  double lambda_kin = 1.0;
  double lambda_v = 10.0;
  double lambda_a = 5.0;
  KinematicTerm kinematic_term = KinematicTerm::speed_hinge;
  /// Multiply the inverse-distance term by k_c (the pair potential form).
  bool weight_inverse_by_k_c = false;
  double soft_min_beta = 10.0;
  /// Distances are clamped to this before 1/d is evaluated.
  double d_min = 1e-3;
  // Adaptive collision score: velocity margin (s) and late-horizon weight growth.
  double tau_margin = 0.5;
  double gamma = 1.0;

  double effective_sigma() const { return sigma.value_or(limits.d_safe); }
  void validate() const;
};

struct EnergyReport {
  double e_coll = 0.0;
  double e_kin = 0.0;
  double e_total = 0.0;
  Trajectory grad;
};

/// Inverse-distance pair term (1/d - 1/d_safe)^2 inside d_safe, with d clamped to d_min.
double inverse_distance_pair_term(double d, double d_safe, double d_min);

/**
 * Collision energy under the configured variant, summed over timesteps and
 * pairs i < j. The inverse-distance variant is the unweighted pair term
 * unless `weight_inverse_by_k_c` is set.
 */
double collision_energy(const Trajectory& traj, const EnergyConfig& cfg);

/// Same as collision_energy but rejects the inverse-distance variant.
double collision_energy_smooth(const Trajectory& traj, const EnergyConfig& cfg);

/// sum_t sum_i max(0, |v| - v_max)^2
double kinematic_energy(const Trajectory& traj, const EnergyConfig& cfg);

/// Speed hinge weighted by lambda_v plus acceleration hinge weighted by lambda_a.
double kinematic_consistency_score(const Trajectory& traj, const EnergyConfig& cfg);

/// Hinge on d_safe + tau_margin |v_i - v_j| - d, weighted by 1 + gamma (t+1)/T. Scoring only.
double adaptive_collision_score(const Trajectory& traj, const EnergyConfig& cfg);

/// k_c (1/d - 1/d_safe)^2 inside d_safe, 0 outside.
double collision_potential(const AgentState& a, const AgentState& b, const EnergyConfig& cfg);

/// -grad_{p_i} sum_{j != i} collision_potential at timestep t.
Vec2 repulsive_force(const Trajectory& traj, std::size_t i, std::size_t t, const EnergyConfig& cfg);

/// Combined energy e_coll + lambda_kin e_kin and its analytic gradient. Throws InputError on non-finite input.
EnergyReport total_energy_and_grad(const Trajectory& traj, const EnergyConfig& cfg);

/// As above, with collision pairs restricted to the graph's edges.
EnergyReport total_energy_and_grad(const Trajectory& traj, const EnergyConfig& cfg, const InteractionGraph& graph);

/// Collision energy over graph edges only.
double collision_energy(const Trajectory& traj, const EnergyConfig& cfg, const InteractionGraph& graph);

/**
 * Mean of (1 + cos) / 2 over consecutive iterate gradients. Pairs where either
 * gradient is zero are skipped; 1.0 when nothing remains.
 */
double gradient_stability(std::span<const Trajectory> iterates, const EnergyConfig& cfg);

}  // namespace physguide
