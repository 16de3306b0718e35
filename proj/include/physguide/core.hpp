#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace physguide {

/// Raised for malformed inputs: shape mismatches, non-finite values, bad configs.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for agent, timestep, or diffusion-step indices outside their range.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const { return std::sqrt(x * x + y * y); }
  double squared_norm() const { return x * x + y * y; }
};

/// Components of one agent state, in storage order.
enum Component : std::size_t { kPx = 0, kPy, kVx, kVy, kAx, kAy, kStateDim };

struct AgentState {
  double px = 0.0, py = 0.0;  // m
  double vx = 0.0, vy = 0.0;  // m/s
  double ax = 0.0, ay = 0.0;  // m/s^2

  Vec2 position() const { return {px, py}; }
  Vec2 velocity() const { return {vx, vy}; }
  Vec2 acceleration() const { return {ax, ay}; }
  bool is_finite() const;
};

/**
 * Dense N x T x 6 multi-agent state tensor.
 *
 * Storage is row-major (agent, timestep, component), so the flat value
 * array doubles as the layout for gradients and diffusion noise.
 */
class Trajectory {
 public:
  Trajectory(std::size_t agents, std::size_t horizon, double dt = 0.1);

  std::size_t agents() const { return agents_; }
  std::size_t horizon() const { return horizon_; }
  double dt() const { return dt_; }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  double& at(std::size_t agent, std::size_t t, Component c) { return values_[offset(agent, t) + c]; }
  double at(std::size_t agent, std::size_t t, Component c) const { return values_[offset(agent, t) + c]; }

  AgentState state(std::size_t agent, std::size_t t) const;
  void set_state(std::size_t agent, std::size_t t, const AgentState& s);

  Vec2 position(std::size_t agent, std::size_t t) const {
    const std::size_t o = offset(agent, t);
    return {values_[o + kPx], values_[o + kPy]};
  }
  Vec2 velocity(std::size_t agent, std::size_t t) const {
    const std::size_t o = offset(agent, t);
    return {values_[o + kVx], values_[o + kVy]};
  }
  Vec2 acceleration(std::size_t agent, std::size_t t) const {
    const std::size_t o = offset(agent, t);
    return {values_[o + kAx], values_[o + kAy]};
  }

  bool same_shape(const Trajectory& other) const {
    return agents_ == other.agents_ && horizon_ == other.horizon_;
  }
  bool is_finite() const;
  /// Throws InputError when any entry is NaN or infinite.
  void require_finite(std::string_view what) const;

  /// All agents restricted to timesteps [begin, end).
  Trajectory window(std::size_t begin, std::size_t end) const;

  bool operator==(const Trajectory& other) const = default;

 private:
  std::size_t offset(std::size_t agent, std::size_t t) const { return (agent * horizon_ + t) * kStateDim; }

  std::size_t agents_;
  std::size_t horizon_;
  double dt_;
  std::vector<double> values_;
};

struct PhysicalLimits {
  double d_safe = 2.0;  // m
  double v_max = 30.0;  // m/s
  double a_max = 8.0;   // m/s^2

  void validate() const;
};

enum class ScenarioKind { intersection, highway_merge, roundabout, urban_dense, head_on };

std::string_view to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(std::string_view name);

struct Arena {
  double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;

  double area() const { return (max_x - min_x) * (max_y - min_y); }
};

struct Scenario {
  std::vector<AgentState> initial;
  ScenarioKind kind = ScenarioKind::intersection;
  PhysicalLimits limits;
  Arena arena;
  std::uint64_t seed = 0;
  double dt = 0.1;
  std::size_t horizon = 90;

  std::size_t agents() const { return initial.size(); }
  void validate() const;
};

/// Euclidean distance between agents i and j at timestep t. Requires i != j.
double pairwise_distance(const Trajectory& traj, std::size_t i, std::size_t j, std::size_t t);

/// True iff some pair is strictly closer than d_safe at some timestep.
bool in_collision_set(const Trajectory& traj, const PhysicalLimits& limits);

/// True iff every speed <= v_max and every acceleration magnitude <= a_max.
bool is_kinematically_feasible(const Trajectory& traj, const PhysicalLimits& limits);

bool is_valid(const Trajectory& traj, const PhysicalLimits& limits);

/// Constant-velocity rollout of the initial states with zero acceleration.
Trajectory constant_velocity_rollout(const Scenario& scenario);

}  // namespace physguide
