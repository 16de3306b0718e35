#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>

#include "physguide/core.hpp"

namespace physguide {

/// Raised when urban_dense placement cannot keep agents d_safe apart.
class InfeasibleScenario : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::intersection;
  std::size_t n_agents = 4;
  std::size_t horizon = 30;
  double dt = 0.1;
  /// urban_dense only: agents per m^2; overrides n_agents as round(density * area).
  std::optional<double> density_target;
  /// urban_dense only: side of the square arena, m.
  double arena_side = 40.0;
  /// head_on only: lateral offset between the two lanes, m.
  double lateral_offset = 0.5;
  /// head_on only: approach speed of both agents, m/s; drawn in [8, 12] when unset.
  std::optional<double> approach_speed;
  std::uint64_t seed = 0;
  PhysicalLimits limits;

  void validate() const;
};

/// Rejection tries allowed for urban_dense placement, across all agents.
inline constexpr std::size_t kPlacementTries = 10000;

/**
 * Builds a scenario deterministically from its spec.
 *
 * Geometry (all speeds drawn once per scenario unless noted):
 *  - intersection: two streams along +x (y = 0) and +y (x = 0), speed in
 *    [8, 12] m/s; the two leaders reach the origin together at mid-horizon,
 *    followers trail every 10 m.
 *  - highway_merge: main stream along +x at [20, 26] m/s spaced 25 m; a ramp
 *    stream at 15 degrees below it, each ramp agent reaching the merge point
 *    at mid-horizon together with a main-stream agent.
 *  - roundabout: half the agents on a 20 m circle with tangential speed in
 *    [5, 8] m/s, the rest approaching radially from 35 m.
 *  - urban_dense: uniform placement in a square arena with d_safe spacing,
 *    uniform headings and per-agent speeds in [0, min(v_max, 10)] m/s.
 *  - head_on: two agents approaching along x with a lateral offset, meeting at
 *    mid-horizon.
 * Initial accelerations are zero.
 */
Scenario generate(const ScenarioSpec& spec);

/// Agents per m^2 of the scenario arena.
double density(const Scenario& scenario);

}  // namespace physguide
