#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <vector>

#include "physguide/core.hpp"
#include "physguide/rng.hpp"

namespace testsupport {

using physguide::AgentState;
using physguide::PhysicalLimits;
using physguide::Rng;
using physguide::Trajectory;

/// Random trajectory with positions in a box of side `box`, speeds up to `speed` and accelerations up to `accel`.
inline Trajectory random_trajectory(Rng& rng, std::size_t n, std::size_t horizon, double box, double speed,
                                    double accel, double dt = 0.1) {
  Trajectory x(n, horizon, dt);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < horizon; ++t) {
      const double hv = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double ha = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double s = rng.uniform(0.0, speed), a = rng.uniform(0.0, accel);
      x.set_state(i, t,
                  {rng.uniform(0.0, box), rng.uniform(0.0, box), s * std::cos(hv), s * std::sin(hv),
                   a * std::cos(ha), a * std::sin(ha)});
    }
  }
  return x;
}

/// Trajectory of agents at fixed positions with zero velocity and acceleration.
inline Trajectory static_positions(const std::vector<std::pair<double, double>>& pos, std::size_t horizon = 1) {
  Trajectory x(pos.size(), horizon);
  for (std::size_t i = 0; i < pos.size(); ++i) {
    for (std::size_t t = 0; t < horizon; ++t) x.set_state(i, t, {pos[i].first, pos[i].second, 0, 0, 0, 0});
  }
  return x;
}

inline double dist(const Trajectory& x, std::size_t i, std::size_t j, std::size_t t) {
  const double dx = x.at(i, t, physguide::kPx) - x.at(j, t, physguide::kPx);
  const double dy = x.at(i, t, physguide::kPy) - x.at(j, t, physguide::kPy);
  return std::sqrt(dx * dx + dy * dy);
}

inline bool oracle_collides(const Trajectory& x, double d_safe) {
  for (std::size_t t = 0; t < x.horizon(); ++t) {
    for (std::size_t i = 0; i < x.agents(); ++i) {
      for (std::size_t j = 0; j < x.agents(); ++j) {
        if (i != j && dist(x, i, j, t) < d_safe) return true;
      }
    }
  }
  return false;
}

inline bool oracle_speed_ok(const Trajectory& x, double v_max) {
  for (std::size_t i = 0; i < x.agents(); ++i) {
    for (std::size_t t = 0; t < x.horizon(); ++t) {
      if (std::hypot(x.at(i, t, physguide::kVx), x.at(i, t, physguide::kVy)) > v_max) return false;
    }
  }
  return true;
}

inline bool oracle_accel_ok(const Trajectory& x, double a_max) {
  for (std::size_t i = 0; i < x.agents(); ++i) {
    for (std::size_t t = 0; t < x.horizon(); ++t) {
      if (std::hypot(x.at(i, t, physguide::kAx), x.at(i, t, physguide::kAy)) > a_max) return false;
    }
  }
  return true;
}

inline bool oracle_valid(const Trajectory& x, const PhysicalLimits& l) {
  return !oracle_collides(x, l.d_safe) && oracle_speed_ok(x, l.v_max) && oracle_accel_ok(x, l.a_max);
}

/// Central finite difference of f along every component of x.
inline std::vector<double> finite_difference(const Trajectory& x, const std::function<double(const Trajectory&)>& f,
                                             double h) {
  std::vector<double> out(x.size());
  Trajectory probe = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double v = x.values()[k];
    probe.values()[k] = v + h;
    const double up = f(probe);
    probe.values()[k] = v - h;
    const double down = f(probe);
    probe.values()[k] = v;
    out[k] = (up - down) / (2.0 * h);
  }
  return out;
}

inline double rel_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Determinant by Gaussian elimination with partial pivoting.
inline double determinant(std::vector<std::vector<double>> m) {
  const std::size_t n = m.size();
  double det = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(m[r][c]) > std::abs(m[p][c])) p = r;
    }
    if (m[p][c] == 0.0) return 0.0;
    if (p != c) {
      std::swap(m[p], m[c]);
      det = -det;
    }
    det *= m[c][c];
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = m[r][c] / m[c][c];
      for (std::size_t k = c; k < n; ++k) m[r][k] -= f * m[c][k];
    }
  }
  return det;
}

}  // namespace testsupport
