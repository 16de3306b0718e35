#pragma once

#include <cstddef>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <ranges>
#include <span>
#include <utility>
#include <vector>

#include "physguide/core.hpp"

namespace physguide {

struct GraphConfig {
  double r_interact = 30.0;                          // m
  double sigma_d = 10.0;                             // m
  double sigma_theta = std::numbers::pi / 4.0;       // rad

  void validate() const;
};

struct Edge {
  std::uint32_t i = 0;
  std::uint32_t j = 0;  // i < j
  double weight = 0.0;
};

/// Per-timestep proximity graph. Edges at each timestep are sorted by (i, j).
class InteractionGraph {
 public:
  explicit InteractionGraph(std::vector<std::vector<Edge>> edges_per_step)
      : edges_(std::move(edges_per_step)) {}

  std::size_t horizon() const { return edges_.size(); }
  std::span<const Edge> edges(std::size_t t) const;
  std::size_t total_edges() const;

 private:
  std::vector<std::vector<Edge>> edges_;
};

/// Speeds below this carry no heading; the angular factor is then 1.
inline constexpr double kHeadingSpeedFloor = 1e-6;

/// Unsigned angle in [0, pi] between two velocities, or 0 if either is near rest.
double heading_angle(Vec2 a, Vec2 b);

/**
 * Edge weight exp(-d^2 / (2 sigma_d^2)) * exp(-angle / (2 sigma_theta^2)) * [d < r_interact].
 *
 * The angle enters the second factor unsquared.
 */
double edge_weight(const AgentState& a, const AgentState& b, const GraphConfig& cfg);

/**
 * Pairs (i < j) at timestep t whose distance is strictly below `radius`,
 * found with a uniform grid of cell size `radius`. Sorted by (i, j).
 */
std::vector<std::pair<std::uint32_t, std::uint32_t>> grid_neighbor_pairs(const Trajectory& traj, std::size_t t,
                                                                         double radius);

/// `skip` leaves every weight at 0 for callers that only enumerate pairs, such as pruned energy evaluation.
enum class EdgeWeights { compute, skip };

InteractionGraph build_graph(const Trajectory& traj, const GraphConfig& cfg,
                             EdgeWeights weights = EdgeWeights::compute);

/// The in-radius pairs of timestep t as (i, j) tuples, each once.
inline auto pruned_pair_iterator(const InteractionGraph& graph, std::size_t t) {
  return graph.edges(t) | std::views::transform([](const Edge& e) {
           return std::pair<std::size_t, std::size_t>{e.i, e.j};
         });
}

/// Debug dump: header `t,i,j,weight`, one row per edge.
void write_edges_csv(const InteractionGraph& graph, std::ostream& out);

}  // namespace physguide
