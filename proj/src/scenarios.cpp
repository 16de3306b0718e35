#include "physguide/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "physguide/rng.hpp"

namespace physguide {

namespace {

constexpr double kStreamGap = 10.0;       // m, intersection followers
constexpr double kHighwayGap = 25.0;      // m
constexpr double kRampAngle = 15.0 * std::numbers::pi / 180.0;
constexpr double kRoundaboutRadius = 20.0;  // m
constexpr double kEntryRadius = 35.0;       // m
constexpr double kArenaMargin = 10.0;       // m
constexpr double kUrbanSpeedCap = 10.0;     // m/s

// Time at which conflicting leaders meet: the middle of the rollout.
double meeting_time(const ScenarioSpec& spec) { return 0.5 * static_cast<double>(spec.horizon - 1) * spec.dt; }

AgentState moving(Vec2 p, Vec2 v) { return {p.x, p.y, v.x, v.y, 0.0, 0.0}; }

Arena rollout_bounds(const std::vector<AgentState>& agents, const ScenarioSpec& spec) {
  double lo_x = std::numeric_limits<double>::infinity(), lo_y = lo_x;
  double hi_x = -lo_x, hi_y = -lo_x;
  const double span = static_cast<double>(spec.horizon - 1) * spec.dt;
  for (const AgentState& s : agents) {
    for (double tau : {0.0, span}) {
      const double x = s.px + s.vx * tau, y = s.py + s.vy * tau;
      lo_x = std::min(lo_x, x);
      hi_x = std::max(hi_x, x);
      lo_y = std::min(lo_y, y);
      hi_y = std::max(hi_y, y);
    }
  }
  return {lo_x - kArenaMargin, lo_y - kArenaMargin, hi_x + kArenaMargin, hi_y + kArenaMargin};
}

std::vector<AgentState> intersection(const ScenarioSpec& spec, Rng& rng) {
  const double v = rng.uniform(8.0, 12.0);
  const double lead = std::max(v * meeting_time(spec), spec.limits.d_safe);
  std::vector<AgentState> agents;
  for (std::size_t a = 0; a < spec.n_agents; ++a) {
    const double back = lead + kStreamGap * static_cast<double>(a / 2);
    agents.push_back(a % 2 == 0 ? moving({-back, 0.0}, {v, 0.0}) : moving({0.0, -back}, {0.0, v}));
  }
  return agents;
}

std::vector<AgentState> highway_merge(const ScenarioSpec& spec, Rng& rng) {
  const double v_main = rng.uniform(20.0, 26.0);
  const double v_ramp = v_main * rng.uniform(0.85, 1.0);
  const double t_meet = meeting_time(spec);
  const Vec2 ramp_dir{std::cos(kRampAngle), std::sin(kRampAngle)};
  std::vector<AgentState> agents;
  for (std::size_t a = 0; a < spec.n_agents; ++a) {
    const double gap = kHighwayGap * static_cast<double>(a / 2);
    if (a % 2 == 0) {
      agents.push_back(moving({-(v_main * t_meet + gap), 0.0}, {v_main, 0.0}));
    } else {
      agents.push_back(moving(ramp_dir * -(v_ramp * t_meet + gap), ramp_dir * v_ramp));
    }
  }
  return agents;
}

std::vector<AgentState> roundabout(const ScenarioSpec& spec, Rng& rng) {
  const std::size_t on_circle = (spec.n_agents + 1) / 2;
  const std::size_t entering = spec.n_agents - on_circle;
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double v_circle = rng.uniform(5.0, 8.0);
  std::vector<AgentState> agents;
  for (std::size_t k = 0; k < on_circle; ++k) {
    const double phi = phase + 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(on_circle);
    const Vec2 radial{std::cos(phi), std::sin(phi)};
    agents.push_back(moving(radial * kRoundaboutRadius, Vec2{-radial.y, radial.x} * v_circle));
  }
  for (std::size_t k = 0; k < entering; ++k) {
    const double psi = phase + std::numbers::pi / static_cast<double>(on_circle) +
                       2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(entering);
    const Vec2 radial{std::cos(psi), std::sin(psi)};
    agents.push_back(moving(radial * kEntryRadius, radial * -rng.uniform(5.0, 8.0)));
  }
  return agents;
}

std::vector<AgentState> urban_dense(const ScenarioSpec& spec, std::size_t n, Rng& rng) {
  const double half = 0.5 * spec.arena_side;
  const double v_cap = std::min(spec.limits.v_max, kUrbanSpeedCap);
  std::vector<AgentState> agents;
  std::size_t tries = 0;
  while (agents.size() < n) {
    if (tries++ >= kPlacementTries) {
      throw InfeasibleScenario("cannot place " + std::to_string(n) + " agents with d_safe spacing in a " +
                               std::to_string(spec.arena_side) + " m arena");
    }
    const Vec2 p{rng.uniform(-half, half), rng.uniform(-half, half)};
    const bool clear = std::all_of(agents.begin(), agents.end(), [&](const AgentState& s) {
      return (s.position() - p).norm() >= spec.limits.d_safe;
    });
    if (!clear) continue;
    const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double speed = rng.uniform(0.0, v_cap);
    agents.push_back(moving(p, Vec2{std::cos(heading), std::sin(heading)} * speed));
  }
  return agents;
}

std::vector<AgentState> head_on(const ScenarioSpec& spec, Rng& rng) {
  const double drawn = rng.uniform(8.0, 12.0);
  const double v = spec.approach_speed.value_or(drawn);
  const double lead = std::max(v * meeting_time(spec), spec.limits.d_safe);
  return {moving({-lead, 0.0}, {v, 0.0}), moving({lead, spec.lateral_offset}, {-v, 0.0})};
}

void require_spacing(const std::vector<AgentState>& agents, double d_safe) {
  for (std::size_t i = 0; i < agents.size(); ++i) {
    for (std::size_t j = i + 1; j < agents.size(); ++j) {
      if ((agents[i].position() - agents[j].position()).norm() < d_safe) {
        throw InfeasibleScenario("generated initial states violate d_safe spacing");
      }
    }
  }
}

}  // namespace

void ScenarioSpec::validate() const {
  if (n_agents < 1) throw InputError("scenario spec needs at least one agent");
  if (horizon < 1) throw InputError("scenario spec horizon must be positive");
  if (!(dt > 0.0)) throw InputError("scenario spec dt must be positive");
  if (density_target && !(*density_target > 0.0)) throw InputError("density_target must be positive");
  if (!(arena_side > 0.0)) throw InputError("arena_side must be positive");
  if (approach_speed && !(*approach_speed > 0.0)) throw InputError("approach_speed must be positive");
  limits.validate();
}

Scenario generate(const ScenarioSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Scenario scenario;
  scenario.kind = spec.kind;
  scenario.limits = spec.limits;
  scenario.seed = spec.seed;
  scenario.dt = spec.dt;
  scenario.horizon = spec.horizon;

  switch (spec.kind) {
    case ScenarioKind::intersection:
      scenario.initial = intersection(spec, rng);
      break;
    case ScenarioKind::highway_merge:
      scenario.initial = highway_merge(spec, rng);
      break;
    case ScenarioKind::roundabout:
      scenario.initial = roundabout(spec, rng);
      break;
    case ScenarioKind::head_on:
      scenario.initial = head_on(spec, rng);
      break;
    case ScenarioKind::urban_dense: {
      const double half = 0.5 * spec.arena_side;
      const std::size_t n =
          spec.density_target
              ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(*spec.density_target * spec.arena_side *
                                                                               spec.arena_side)))
              : spec.n_agents;
      scenario.initial = urban_dense(spec, n, rng);
      scenario.arena = {-half, -half, half, half};
      break;
    }
  }
  if (spec.kind != ScenarioKind::urban_dense) scenario.arena = rollout_bounds(scenario.initial, spec);
  require_spacing(scenario.initial, spec.limits.d_safe);
  scenario.validate();
  return scenario;
}

double density(const Scenario& scenario) {
  const double area = scenario.arena.area();
  if (!(area > 0.0)) throw InputError("scenario arena must have positive area");
  return static_cast<double>(scenario.agents()) / area;
}

}  // namespace physguide
