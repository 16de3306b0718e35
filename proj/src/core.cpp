#include "physguide/core.hpp"

#include <algorithm>
#include <array>

namespace physguide {

bool AgentState::is_finite() const {
  return std::isfinite(px) && std::isfinite(py) && std::isfinite(vx) && std::isfinite(vy) &&
         std::isfinite(ax) && std::isfinite(ay);
}

Trajectory::Trajectory(std::size_t agents, std::size_t horizon, double dt)
    : agents_(agents), horizon_(horizon), dt_(dt), values_(agents * horizon * kStateDim, 0.0) {
  if (agents == 0) throw InputError("trajectory needs at least one agent");
  if (horizon == 0) throw InputError("trajectory needs at least one timestep");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InputError("trajectory dt must be positive");
}

AgentState Trajectory::state(std::size_t agent, std::size_t t) const {
  if (agent >= agents_ || t >= horizon_) throw IndexError("trajectory state index out of range");
  const double* v = values_.data() + offset(agent, t);
  return {v[kPx], v[kPy], v[kVx], v[kVy], v[kAx], v[kAy]};
}

void Trajectory::set_state(std::size_t agent, std::size_t t, const AgentState& s) {
  if (agent >= agents_ || t >= horizon_) throw IndexError("trajectory state index out of range");
  double* v = values_.data() + offset(agent, t);
  v[kPx] = s.px;
  v[kPy] = s.py;
  v[kVx] = s.vx;
  v[kVy] = s.vy;
  v[kAx] = s.ax;
  v[kAy] = s.ay;
}

bool Trajectory::is_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Trajectory::require_finite(std::string_view what) const {
  if (!is_finite()) throw InputError(std::string(what) + ": trajectory contains non-finite entries");
}

Trajectory Trajectory::window(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > horizon_) throw IndexError("trajectory window out of range");
  Trajectory out(agents_, end - begin, dt_);
  for (std::size_t i = 0; i < agents_; ++i) {
    const auto first = values_.begin() + static_cast<std::ptrdiff_t>(offset(i, begin));
    std::copy(first, first + static_cast<std::ptrdiff_t>((end - begin) * kStateDim),
              out.values_.begin() + static_cast<std::ptrdiff_t>(out.offset(i, 0)));
  }
  return out;
}

void PhysicalLimits::validate() const {
  if (!(d_safe > 0.0) || !(v_max > 0.0) || !(a_max > 0.0)) {
    throw InputError("physical limits must be positive");
  }
}

namespace {

constexpr std::array<std::pair<ScenarioKind, std::string_view>, 5> kKindNames{{
    {ScenarioKind::intersection, "intersection"},
    {ScenarioKind::highway_merge, "highway_merge"},
    {ScenarioKind::roundabout, "roundabout"},
    {ScenarioKind::urban_dense, "urban_dense"},
    {ScenarioKind::head_on, "head_on"},
}};

}  // namespace

std::string_view to_string(ScenarioKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

ScenarioKind scenario_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  throw InputError("unknown scenario kind: " + std::string(name));
}

void Scenario::validate() const {
  if (initial.empty()) throw InputError("scenario needs at least one agent");
  if (!(arena.area() > 0.0) || arena.max_x <= arena.min_x || arena.max_y <= arena.min_y) {
    throw InputError("scenario arena must have positive area");
  }
  if (!(dt > 0.0)) throw InputError("scenario dt must be positive");
  if (horizon == 0) throw InputError("scenario horizon must be positive");
  limits.validate();
  for (const auto& s : initial) {
    if (!s.is_finite()) throw InputError("scenario initial state is not finite");
  }
}

double pairwise_distance(const Trajectory& traj, std::size_t i, std::size_t j, std::size_t t) {
  if (i >= traj.agents() || j >= traj.agents() || t >= traj.horizon()) {
    throw IndexError("pairwise_distance index out of range");
  }
  if (i == j) throw InputError("pairwise_distance requires distinct agents");
  return (traj.position(i, t) - traj.position(j, t)).norm();
}

bool in_collision_set(const Trajectory& traj, const PhysicalLimits& limits) {
  for (std::size_t t = 0; t < traj.horizon(); ++t) {
    for (std::size_t i = 0; i < traj.agents(); ++i) {
      const Vec2 pi = traj.position(i, t);
      for (std::size_t j = i + 1; j < traj.agents(); ++j) {
        if ((pi - traj.position(j, t)).norm() < limits.d_safe) return true;
      }
    }
  }
  return false;
}

bool is_kinematically_feasible(const Trajectory& traj, const PhysicalLimits& limits) {
  for (std::size_t i = 0; i < traj.agents(); ++i) {
    for (std::size_t t = 0; t < traj.horizon(); ++t) {
      if (traj.velocity(i, t).norm() > limits.v_max) return false;
      if (traj.acceleration(i, t).norm() > limits.a_max) return false;
    }
  }
  return true;
}

bool is_valid(const Trajectory& traj, const PhysicalLimits& limits) {
  return !in_collision_set(traj, limits) && is_kinematically_feasible(traj, limits);
}

Trajectory constant_velocity_rollout(const Scenario& scenario) {
  Trajectory out(scenario.agents(), scenario.horizon, scenario.dt);
  for (std::size_t i = 0; i < scenario.agents(); ++i) {
    const AgentState& s0 = scenario.initial[i];
    for (std::size_t t = 0; t < scenario.horizon; ++t) {
      const double elapsed = static_cast<double>(t) * scenario.dt;
      out.set_state(i, t, {s0.px + s0.vx * elapsed, s0.py + s0.vy * elapsed, s0.vx, s0.vy, 0.0, 0.0});
    }
  }
  return out;
}

}  // namespace physguide
