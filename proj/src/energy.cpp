#include "physguide/energy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace physguide {

namespace {

constexpr std::array<std::pair<CollisionVariant, std::string_view>, 4> kVariantNames{{
    {CollisionVariant::inverse_distance, "inverse_distance"},
    {CollisionVariant::smooth_exponential, "smooth_exponential"},
    {CollisionVariant::gaussian_rbf, "gaussian_rbf"},
    {CollisionVariant::soft_minimum, "soft_minimum"},
}};

// Pair energy and the factor c with grad_{p_i} = c (p_i - p_j), grad_{p_j} = -c (p_i - p_j).
struct PairEval {
  double energy = 0.0;
  double coef = 0.0;
};

PairEval eval_inverse(double d, double d_safe, double d_min, double weight) {
  if (!(d < d_safe)) return {};
  const double d_eff = std::max(d, d_min);
  const double u = 1.0 / d_eff - 1.0 / d_safe;
  PairEval out{weight * u * u, 0.0};
  // The clamp is flat below d_min, so its derivative vanishes there.
  if (d > d_min) out.coef = weight * 2.0 * u * (-1.0 / (d * d)) / d;
  return out;
}

PairEval eval_pair(CollisionVariant variant, double d, const EnergyConfig& cfg) {
  const double sigma = cfg.effective_sigma();
  switch (variant) {
    case CollisionVariant::inverse_distance:
      return eval_inverse(d, cfg.limits.d_safe, cfg.d_min, cfg.weight_inverse_by_k_c ? cfg.k_c : 1.0);
    case CollisionVariant::smooth_exponential: {
      const double e = cfg.k_c * std::exp(-d * d / (sigma * sigma));
      return {e, -2.0 * e / (sigma * sigma)};
    }
    case CollisionVariant::gaussian_rbf: {
      const double e = cfg.k_c * std::exp(-d * d / (2.0 * sigma * sigma));
      return {e, -e / (sigma * sigma)};
    }
    case CollisionVariant::soft_minimum:
      break;
  }
  return {};
}

void add_pair_grad(Trajectory& grad, std::size_t i, std::size_t j, std::size_t t, Vec2 diff, double coef) {
  grad.at(i, t, kPx) += coef * diff.x;
  grad.at(i, t, kPy) += coef * diff.y;
  grad.at(j, t, kPx) -= coef * diff.x;
  grad.at(j, t, kPy) -= coef * diff.y;
}

// Soft-min over the pairs of one timestep, mapped through the weighted inverse-distance term.
template <typename ForEachPair>
double soft_min_timestep(const Trajectory& traj, std::size_t t, const EnergyConfig& cfg, ForEachPair&& for_each_pair,
                         Trajectory* grad) {
  struct Item {
    std::size_t i, j;
    Vec2 diff;
    double d;
  };
  std::vector<Item> items;
  for_each_pair([&](std::size_t i, std::size_t j) {
    const Vec2 diff = traj.position(i, t) - traj.position(j, t);
    items.push_back({i, j, diff, diff.norm()});
  });
  if (items.empty()) return 0.0;

  const double beta = cfg.soft_min_beta;
  double d_lo = std::numeric_limits<double>::infinity();
  for (const Item& it : items) d_lo = std::min(d_lo, it.d);
  double sum = 0.0;
  for (const Item& it : items) sum += std::exp(-beta * (it.d - d_lo));
  const double d_soft = d_lo - std::log(sum) / beta;

  const PairEval outer = eval_inverse(d_soft, cfg.limits.d_safe, cfg.d_min, cfg.k_c);
  if (grad != nullptr && outer.coef != 0.0) {
    // outer.coef = dE/dd_soft / d_soft; d_soft / d_ij scaled by the softmax weight gives the chain rule.
    const double de_dsoft = outer.coef * d_soft;
    for (const Item& it : items) {
      if (it.d <= 0.0) continue;
      const double w = std::exp(-beta * (it.d - d_lo)) / sum;
      add_pair_grad(*grad, it.i, it.j, t, it.diff, de_dsoft * w / it.d);
    }
  }
  return outer.energy;
}

template <typename ForEachPair>
double collision_timestep(const Trajectory& traj, std::size_t t, const EnergyConfig& cfg,
                          ForEachPair&& for_each_pair, Trajectory* grad) {
  if (cfg.collision_variant == CollisionVariant::soft_minimum) {
    return soft_min_timestep(traj, t, cfg, for_each_pair, grad);
  }
  double energy = 0.0;
  for_each_pair([&](std::size_t i, std::size_t j) {
    const Vec2 diff = traj.position(i, t) - traj.position(j, t);
    const PairEval pe = eval_pair(cfg.collision_variant, diff.norm(), cfg);
    energy += pe.energy;
    if (grad != nullptr && pe.coef != 0.0) add_pair_grad(*grad, i, j, t, diff, pe.coef);
  });
  return energy;
}

double collision_all_pairs(const Trajectory& traj, const EnergyConfig& cfg, Trajectory* grad) {
  const std::size_t n = traj.agents();
  double total = 0.0;
  for (std::size_t t = 0; t < traj.horizon(); ++t) {
    total += collision_timestep(
        traj, t, cfg,
        [n](auto&& visit) {
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) visit(i, j);
          }
        },
        grad);
  }
  return total;
}

double collision_graph_pairs(const Trajectory& traj, const EnergyConfig& cfg, const InteractionGraph& graph,
                             Trajectory* grad) {
  if (graph.horizon() != traj.horizon()) throw InputError("interaction graph horizon does not match trajectory");
  double total = 0.0;
  for (std::size_t t = 0; t < traj.horizon(); ++t) {
    total += collision_timestep(
        traj, t, cfg,
        [&graph, t](auto&& visit) {
          for (const auto& [i, j] : pruned_pair_iterator(graph, t)) visit(i, j);
        },
        grad);
  }
  return total;
}

// max(0, |x| - limit)^2 with gradient weight * 2 (|x| - limit) x / |x| written into (gx, gy).
double hinge(Vec2 x, double limit, double weight, double* gx, double* gy) {
  const double n = x.norm();
  if (!(n > limit)) return 0.0;
  const double excess = n - limit;
  if (gx != nullptr) {
    *gx += weight * 2.0 * excess * x.x / n;
    *gy += weight * 2.0 * excess * x.y / n;
  }
  return weight * excess * excess;
}

double kinematic_term(const Trajectory& traj, const EnergyConfig& cfg, Trajectory* grad) {
  const bool with_accel = cfg.kinematic_term == KinematicTerm::consistency;
  const double w_v = with_accel ? cfg.lambda_v : 1.0;
  double total = 0.0;
  for (std::size_t i = 0; i < traj.agents(); ++i) {
    for (std::size_t t = 0; t < traj.horizon(); ++t) {
      double* gvx = grad ? &grad->at(i, t, kVx) : nullptr;
      double* gvy = grad ? &grad->at(i, t, kVy) : nullptr;
      total += hinge(traj.velocity(i, t), cfg.limits.v_max, w_v, gvx, gvy);
      if (with_accel) {
        double* gax = grad ? &grad->at(i, t, kAx) : nullptr;
        double* gay = grad ? &grad->at(i, t, kAy) : nullptr;
        total += hinge(traj.acceleration(i, t), cfg.limits.a_max, cfg.lambda_a, gax, gay);
      }
    }
  }
  return total;
}

void scale_kinematic_grad(Trajectory& kin_grad, Trajectory& grad, double lambda_kin) {
  auto src = kin_grad.values();
  auto dst = grad.values();
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += lambda_kin * src[k];
}

template <typename CollisionFn>
EnergyReport combined(const Trajectory& traj, const EnergyConfig& cfg, CollisionFn&& collision) {
  cfg.validate();
  traj.require_finite("total_energy_and_grad");
  EnergyReport report{0.0, 0.0, 0.0, Trajectory(traj.agents(), traj.horizon(), traj.dt())};
  report.e_coll = collision(&report.grad);
  Trajectory kin_grad(traj.agents(), traj.horizon(), traj.dt());
  report.e_kin = kinematic_term(traj, cfg, &kin_grad);
  scale_kinematic_grad(kin_grad, report.grad, cfg.lambda_kin);
  report.e_total = report.e_coll + cfg.lambda_kin * report.e_kin;
  return report;
}

}  // namespace

std::string_view to_string(CollisionVariant v) {
  for (const auto& [k, name] : kVariantNames) {
    if (k == v) return name;
  }
  return "unknown";
}

CollisionVariant collision_variant_from_string(std::string_view name) {
  for (const auto& [k, n] : kVariantNames) {
    if (n == name) return k;
  }
  throw InputError("unknown collision variant: " + std::string(name));
}

std::string_view to_string(KinematicTerm k) {
  return k == KinematicTerm::speed_hinge ? "speed_hinge" : "consistency";
}

KinematicTerm kinematic_term_from_string(std::string_view name) {
  if (name == "speed_hinge") return KinematicTerm::speed_hinge;
  if (name == "consistency") return KinematicTerm::consistency;
  throw InputError("unknown kinematic term: " + std::string(name));
}

void EnergyConfig::validate() const {
  limits.validate();
  if (!(k_c > 0.0)) throw InputError("k_c must be positive");
  if (sigma && !(*sigma > 0.0)) throw InputError("sigma must be positive");
  if (!(lambda_kin >= 0.0) || !(lambda_v >= 0.0) || !(lambda_a >= 0.0)) {
    throw InputError("energy weights must be nonnegative");
  }
  if (!(soft_min_beta > 0.0)) throw InputError("soft_min_beta must be positive");
  if (!(d_min > 0.0) || !(d_min < limits.d_safe)) throw InputError("d_min must lie in (0, d_safe)");
  if (!(tau_margin >= 0.0) || !(gamma >= 0.0)) throw InputError("adaptive collision constants must be nonnegative");
}

double inverse_distance_pair_term(double d, double d_safe, double d_min) {
  return eval_inverse(d, d_safe, d_min, 1.0).energy;
}

double collision_energy(const Trajectory& traj, const EnergyConfig& cfg) {
  cfg.validate();
  return collision_all_pairs(traj, cfg, nullptr);
}

double collision_energy(const Trajectory& traj, const EnergyConfig& cfg, const InteractionGraph& graph) {
  cfg.validate();
  return collision_graph_pairs(traj, cfg, graph, nullptr);
}

double collision_energy_smooth(const Trajectory& traj, const EnergyConfig& cfg) {
  if (cfg.collision_variant == CollisionVariant::inverse_distance) {
    throw InputError("collision_energy_smooth requires a smooth collision variant");
  }
  return collision_energy(traj, cfg);
}

double kinematic_energy(const Trajectory& traj, const EnergyConfig& cfg) {
  double total = 0.0;
  for (std::size_t i = 0; i < traj.agents(); ++i) {
    for (std::size_t t = 0; t < traj.horizon(); ++t) {
      total += hinge(traj.velocity(i, t), cfg.limits.v_max, 1.0, nullptr, nullptr);
    }
  }
  return total;
}

double kinematic_consistency_score(const Trajectory& traj, const EnergyConfig& cfg) {
  double total = 0.0;
  for (std::size_t i = 0; i < traj.agents(); ++i) {
    for (std::size_t t = 0; t < traj.horizon(); ++t) {
      total += hinge(traj.velocity(i, t), cfg.limits.v_max, cfg.lambda_v, nullptr, nullptr);
      total += hinge(traj.acceleration(i, t), cfg.limits.a_max, cfg.lambda_a, nullptr, nullptr);
    }
  }
  return total;
}

double adaptive_collision_score(const Trajectory& traj, const EnergyConfig& cfg) {
  const double horizon = static_cast<double>(traj.horizon());
  double total = 0.0;
  for (std::size_t t = 0; t < traj.horizon(); ++t) {
    const double rho = 1.0 + cfg.gamma * static_cast<double>(t + 1) / horizon;
    for (std::size_t i = 0; i < traj.agents(); ++i) {
      for (std::size_t j = i + 1; j < traj.agents(); ++j) {
        const double d = (traj.position(i, t) - traj.position(j, t)).norm();
        const double margin = cfg.tau_margin * (traj.velocity(i, t) - traj.velocity(j, t)).norm();
        const double gap = std::max(0.0, cfg.limits.d_safe - d + margin);
        total += rho * gap * gap;
      }
    }
  }
  return total;
}

double collision_potential(const AgentState& a, const AgentState& b, const EnergyConfig& cfg) {
  const double d = (a.position() - b.position()).norm();
  return eval_inverse(d, cfg.limits.d_safe, cfg.d_min, cfg.k_c).energy;
}

Vec2 repulsive_force(const Trajectory& traj, std::size_t i, std::size_t t, const EnergyConfig& cfg) {
  if (i >= traj.agents() || t >= traj.horizon()) throw IndexError("repulsive_force index out of range");
  Vec2 force;
  const Vec2 pi = traj.position(i, t);
  for (std::size_t j = 0; j < traj.agents(); ++j) {
    if (j == i) continue;
    const Vec2 diff = pi - traj.position(j, t);
    const PairEval pe = eval_inverse(diff.norm(), cfg.limits.d_safe, cfg.d_min, cfg.k_c);
    force += diff * (-pe.coef);
  }
  return force;
}

EnergyReport total_energy_and_grad(const Trajectory& traj, const EnergyConfig& cfg) {
  return combined(traj, cfg, [&](Trajectory* grad) { return collision_all_pairs(traj, cfg, grad); });
}

EnergyReport total_energy_and_grad(const Trajectory& traj, const EnergyConfig& cfg, const InteractionGraph& graph) {
  return combined(traj, cfg, [&](Trajectory* grad) { return collision_graph_pairs(traj, cfg, graph, grad); });
}

double gradient_stability(std::span<const Trajectory> iterates, const EnergyConfig& cfg) {
  if (iterates.size() < 2) throw InputError("gradient_stability needs at least two iterates");
  std::vector<Trajectory> grads;
  grads.reserve(iterates.size());
  for (const Trajectory& it : iterates) grads.push_back(total_energy_and_grad(it, cfg).grad);

  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k + 1 < grads.size(); ++k) {
    const auto a = grads[k].values();
    const auto b = grads[k + 1].values();
    if (a.size() != b.size()) throw InputError("gradient_stability iterates differ in shape");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) {
      dot += a[c] * b[c];
      na += a[c] * a[c];
      nb += b[c] * b[c];
    }
    if (na == 0.0 || nb == 0.0) continue;
    const double cosine = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
    sum += 0.5 * (1.0 + cosine);
    ++count;
  }
  return count == 0 ? 1.0 : sum / static_cast<double>(count);
}

}  // namespace physguide
