#include "physguide/interaction_graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace physguide {

void GraphConfig::validate() const {
  if (!(r_interact > 0.0) || !(sigma_d > 0.0) || !(sigma_theta > 0.0)) {
    throw InputError("graph config scales must be positive");
  }
}

std::span<const Edge> InteractionGraph::edges(std::size_t t) const {
  if (t >= edges_.size()) throw IndexError("interaction graph timestep out of range");
  return edges_[t];
}

std::size_t InteractionGraph::total_edges() const {
  return std::accumulate(edges_.begin(), edges_.end(), std::size_t{0},
                         [](std::size_t acc, const auto& e) { return acc + e.size(); });
}

double heading_angle(Vec2 a, Vec2 b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na < kHeadingSpeedFloor || nb < kHeadingSpeedFloor) return 0.0;
  // atan2 of cross and dot is accurate near 0 and pi, unlike acos.
  const double cross = a.x * b.y - a.y * b.x;
  return std::atan2(std::abs(cross), a.dot(b));
}

double edge_weight(const AgentState& a, const AgentState& b, const GraphConfig& cfg) {
  const double d = (a.position() - b.position()).norm();
  if (!(d < cfg.r_interact)) return 0.0;
  const double angle = heading_angle(a.velocity(), b.velocity());
  return std::exp(-d * d / (2.0 * cfg.sigma_d * cfg.sigma_d) - angle / (2.0 * cfg.sigma_theta * cfg.sigma_theta));
}

namespace {

using PairList = std::vector<std::pair<std::uint32_t, std::uint32_t>>;

struct CellEntry {
  std::int64_t cx;
  std::int64_t cy;
  std::uint32_t agent;
};

bool cell_less(std::int64_t ax, std::int64_t ay, std::int64_t bx, std::int64_t by) {
  return ax < bx || (ax == bx && ay < by);
}

// Sorted-cell variant for scenes whose bounding box holds too many cells for a dense grid.
PairList sparse_grid_pairs(const Trajectory& traj, std::size_t t, double radius) {
  const std::size_t n = traj.agents();
  std::vector<CellEntry> cells;
  cells.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 p = traj.position(i, t);
    cells.push_back({static_cast<std::int64_t>(std::floor(p.x / radius)),
                     static_cast<std::int64_t>(std::floor(p.y / radius)), static_cast<std::uint32_t>(i)});
  }
  std::sort(cells.begin(), cells.end(), [](const CellEntry& a, const CellEntry& b) {
    return cell_less(a.cx, a.cy, b.cx, b.cy) || (a.cx == b.cx && a.cy == b.cy && a.agent < b.agent);
  });

  // Runs of equal cells: run r covers cells[starts[r], starts[r + 1]).
  std::vector<std::size_t> starts;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (k == 0 || cells[k].cx != cells[k - 1].cx || cells[k].cy != cells[k - 1].cy) starts.push_back(k);
  }
  const std::size_t runs = starts.size();
  starts.push_back(cells.size());
  const auto find_run = [&](std::int64_t cx, std::int64_t cy) -> std::size_t {
    std::size_t lo = 0, hi = runs;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      const CellEntry& c = cells[starts[mid]];
      if (cell_less(c.cx, c.cy, cx, cy)) {
        lo = mid + 1;
      } else {
        hi = mid;
      }
    }
    if (lo < runs && cells[starts[lo]].cx == cx && cells[starts[lo]].cy == cy) return lo;
    return runs;
  };

  PairList pairs;
  const auto test = [&](const CellEntry& a, const CellEntry& b) {
    if ((traj.position(a.agent, t) - traj.position(b.agent, t)).norm() < radius) {
      pairs.emplace_back(std::min(a.agent, b.agent), std::max(a.agent, b.agent));
    }
  };
  // Each unordered cell pair is visited once: the run itself plus four forward neighbours.
  constexpr std::int64_t kForward[4][2] = {{0, 1}, {1, -1}, {1, 0}, {1, 1}};
  for (std::size_t r = 0; r < runs; ++r) {
    const std::size_t b = starts[r], e = starts[r + 1];
    for (std::size_t u = b; u < e; ++u) {
      for (std::size_t v = u + 1; v < e; ++v) test(cells[u], cells[v]);
    }
    for (const auto& off : kForward) {
      const std::size_t q = find_run(cells[b].cx + off[0], cells[b].cy + off[1]);
      if (q == runs) continue;
      for (std::size_t u = b; u < e; ++u) {
        for (std::size_t v = starts[q]; v < starts[q + 1]; ++v) test(cells[u], cells[v]);
      }
    }
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

// Buffers reused across timesteps by the dense grid.
struct GridScratch {
  std::vector<Vec2> pos;
  std::vector<std::uint32_t> cell_of, start, fill, members, row;
};

// Appends the pairs of timestep t to `pairs`, sorted by (i, j). Returns false, leaving `pairs`
// untouched, when the bounding box holds too many cells for a dense grid.
bool dense_grid_pairs(const Trajectory& traj, std::size_t t, double radius, GridScratch& g, PairList& pairs) {
  const std::size_t n = traj.agents();
  if (n < 2) return true;
  g.pos.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.pos[i] = traj.position(i, t);
  double min_x = g.pos[0].x, min_y = g.pos[0].y;
  double max_x = min_x, max_y = min_y;
  for (const Vec2& p : g.pos) {
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
  }
  const double span_x = std::floor((max_x - min_x) / radius) + 1.0;
  const double span_y = std::floor((max_y - min_y) / radius) + 1.0;
  if (!(span_x * span_y <= static_cast<double>(4 * n + 64))) return false;

  // Counting sort into cells; agents stay in index order within a cell.
  const auto nx = static_cast<std::size_t>(span_x);
  const auto ny = static_cast<std::size_t>(span_y);
  g.cell_of.resize(n);
  g.start.assign(nx * ny + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto cx = std::min(nx - 1, static_cast<std::size_t>((g.pos[i].x - min_x) / radius));
    const auto cy = std::min(ny - 1, static_cast<std::size_t>((g.pos[i].y - min_y) / radius));
    g.cell_of[i] = static_cast<std::uint32_t>(cx * ny + cy);
    ++g.start[g.cell_of[i] + 1];
  }
  for (std::size_t c = 0; c < nx * ny; ++c) g.start[c + 1] += g.start[c];
  g.fill.assign(g.start.begin(), g.start.end() - 1);
  g.members.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.members[g.fill[g.cell_of[i]]++] = static_cast<std::uint32_t>(i);

  const double r2 = radius * radius;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 p = g.pos[i];
    const std::size_t cx = g.cell_of[i] / ny, cy = g.cell_of[i] % ny;
    const std::size_t y0 = cy > 0 ? cy - 1 : 0, y1 = std::min(cy + 1, ny - 1);
    g.row.clear();
    for (std::size_t x = cx > 0 ? cx - 1 : 0; x <= std::min(cx + 1, nx - 1); ++x) {
      // Cells y0..y1 of column x are contiguous in `members`.
      for (std::uint32_t k = g.start[x * ny + y0]; k < g.start[x * ny + y1 + 1]; ++k) {
        const std::uint32_t j = g.members[k];
        const Vec2 d = p - g.pos[j];
        if (j > i && d.dot(d) < r2) g.row.push_back(j);
      }
    }
    std::sort(g.row.begin(), g.row.end());
    for (const std::uint32_t j : g.row) pairs.emplace_back(static_cast<std::uint32_t>(i), j);
  }
  return true;
}

void grid_pairs_into(const Trajectory& traj, std::size_t t, double radius, GridScratch& g, PairList& pairs) {
  pairs.clear();
  if (!dense_grid_pairs(traj, t, radius, g, pairs)) pairs = sparse_grid_pairs(traj, t, radius);
}

}  // namespace

std::vector<std::pair<std::uint32_t, std::uint32_t>> grid_neighbor_pairs(const Trajectory& traj, std::size_t t,
                                                                         double radius) {
  if (t >= traj.horizon()) throw IndexError("grid_neighbor_pairs timestep out of range");
  if (!(radius > 0.0)) throw InputError("grid radius must be positive");
  GridScratch scratch;
  PairList pairs;
  grid_pairs_into(traj, t, radius, scratch, pairs);
  return pairs;
}

InteractionGraph build_graph(const Trajectory& traj, const GraphConfig& cfg, EdgeWeights weights) {
  cfg.validate();
  std::vector<std::vector<Edge>> per_step(traj.horizon());
  GridScratch scratch;
  PairList pairs;
  for (std::size_t t = 0; t < traj.horizon(); ++t) {
    grid_pairs_into(traj, t, cfg.r_interact, scratch, pairs);
    per_step[t].reserve(pairs.size());
    for (const auto& [i, j] : pairs) {
      const double w = weights == EdgeWeights::compute ? edge_weight(traj.state(i, t), traj.state(j, t), cfg) : 0.0;
      per_step[t].push_back({i, j, w});
    }
  }
  return InteractionGraph(std::move(per_step));
}

void write_edges_csv(const InteractionGraph& graph, std::ostream& out) {
  out << "t,i,j,weight\n";
  char buf[64];
  for (std::size_t t = 0; t < graph.horizon(); ++t) {
    for (const Edge& e : graph.edges(t)) {
      std::snprintf(buf, sizeof buf, "%.17g", e.weight);
      out << t << ',' << e.i << ',' << e.j << ',' << buf << '\n';
    }
  }
}

}  // namespace physguide
