#include "physguide/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <json.hpp>

#include "physguide/interaction_graph.hpp"

namespace physguide {

namespace {

void require_same_shape(const Trajectory& a, const Trajectory& b, const char* what) {
  if (!a.same_shape(b)) throw InputError(std::string(what) + ": trajectories differ in shape");
}

void require_non_empty(std::span<const Trajectory> samples, const char* what) {
  if (samples.empty()) throw InputError(std::string(what) + ": empty sample list");
}

bool collides_pair(const Trajectory& traj, std::size_t i, std::size_t j, double d_safe) {
  for (std::size_t t = 0; t < traj.horizon(); ++t) {
    if ((traj.position(i, t) - traj.position(j, t)).norm() < d_safe) return true;
  }
  return false;
}

}  // namespace

double ade(const Trajectory& pred, const Trajectory& ref) {
  require_same_shape(pred, ref, "ade");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.agents(); ++i) {
    for (std::size_t t = 0; t < pred.horizon(); ++t) sum += (pred.position(i, t) - ref.position(i, t)).norm();
  }
  return sum / static_cast<double>(pred.agents() * pred.horizon());
}

double fde(const Trajectory& pred, const Trajectory& ref) {
  require_same_shape(pred, ref, "fde");
  const std::size_t last = pred.horizon() - 1;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.agents(); ++i) sum += (pred.position(i, last) - ref.position(i, last)).norm();
  return sum / static_cast<double>(pred.agents());
}

double validity_rate(std::span<const Trajectory> samples, const PhysicalLimits& limits) {
  require_non_empty(samples, "validity_rate");
  const auto valid = std::count_if(samples.begin(), samples.end(),
                                   [&](const Trajectory& s) { return is_valid(s, limits); });
  return static_cast<double>(valid) / static_cast<double>(samples.size());
}

double collision_rate(std::span<const Trajectory> samples, const PhysicalLimits& limits) {
  require_non_empty(samples, "collision_rate");
  const auto hits = std::count_if(samples.begin(), samples.end(),
                                  [&](const Trajectory& s) { return in_collision_set(s, limits); });
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

double pair_collision_rate(std::span<const Trajectory> samples, const PhysicalLimits& limits) {
  require_non_empty(samples, "pair_collision_rate");
  std::size_t hits = 0, total = 0;
  for (const Trajectory& s : samples) {
    for (std::size_t i = 0; i < s.agents(); ++i) {
      for (std::size_t j = i + 1; j < s.agents(); ++j) {
        ++total;
        if (collides_pair(s, i, j, limits.d_safe)) ++hits;
      }
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

double temporal_consistency(std::span<const Trajectory> samples, const PhysicalLimits& limits, std::size_t window) {
  require_non_empty(samples, "temporal_consistency");
  if (window < 1) throw InputError("temporal_consistency window must be at least 1");
  std::size_t valid = 0, total = 0;
  for (const Trajectory& s : samples) {
    if (window > s.horizon()) throw InputError("temporal_consistency window exceeds the horizon");
    for (std::size_t begin = 0; begin < s.horizon(); begin += window) {
      const std::size_t end = std::min(begin + window, s.horizon());
      ++total;
      if (is_valid(s.window(begin, end), limits)) ++valid;
    }
  }
  return static_cast<double>(valid) / static_cast<double>(total);
}

double jerk_profile(const Trajectory& traj) {
  if (traj.horizon() < 2) throw InputError("jerk_profile needs at least two timesteps");
  double sum = 0.0;
  for (std::size_t i = 0; i < traj.agents(); ++i) {
    for (std::size_t t = 0; t + 1 < traj.horizon(); ++t) {
      sum += (traj.acceleration(i, t + 1) - traj.acceleration(i, t)).norm() / traj.dt();
    }
  }
  return sum / static_cast<double>(traj.agents() * (traj.horizon() - 1));
}

double social_conformity(const Trajectory& traj, double d_social) {
  if (!(d_social > 0.0)) throw InputError("d_social must be positive");
  double total = 0.0;
  for (std::size_t t = 0; t < traj.horizon(); ++t) {
    for (std::size_t i = 0; i < traj.agents(); ++i) {
      for (std::size_t j = i + 1; j < traj.agents(); ++j) {
        const double d = (traj.position(i, t) - traj.position(j, t)).norm();
        if (!(d < d_social)) continue;
        const double angle = heading_angle(traj.velocity(i, t), traj.velocity(j, t));
        total += (1.0 - std::cos(angle)) * std::exp(-d / d_social);
      }
    }
  }
  return total;
}

namespace {

Eigen::MatrixXd flattened_positions(std::span<const Trajectory> samples) {
  const Trajectory& first = samples.front();
  Eigen::MatrixXd z(static_cast<Eigen::Index>(samples.size()),
                    static_cast<Eigen::Index>(2 * first.agents() * first.horizon()));
  for (std::size_t s = 0; s < samples.size(); ++s) {
    require_same_shape(first, samples[s], "diversity_logdet");
    Eigen::Index col = 0;
    for (std::size_t i = 0; i < first.agents(); ++i) {
      for (std::size_t t = 0; t < first.horizon(); ++t) {
        const Vec2 p = samples[s].position(i, t);
        z(static_cast<Eigen::Index>(s), col++) = p.x;
        z(static_cast<Eigen::Index>(s), col++) = p.y;
      }
    }
  }
  return z;
}

std::vector<double> pairwise_squared(const Eigen::MatrixXd& z) {
  std::vector<double> d2;
  for (Eigen::Index a = 0; a < z.rows(); ++a) {
    for (Eigen::Index b = a + 1; b < z.rows(); ++b) d2.push_back((z.row(a) - z.row(b)).squaredNorm());
  }
  return d2;
}

}  // namespace

double median_embedding_distance(std::span<const Trajectory> samples) {
  if (samples.size() < 2) throw InputError("median_embedding_distance needs at least two samples");
  std::vector<double> d2 = pairwise_squared(flattened_positions(samples));
  std::sort(d2.begin(), d2.end());
  const std::size_t n = d2.size();
  const double mid = n % 2 == 1 ? d2[n / 2] : 0.5 * (d2[n / 2 - 1] + d2[n / 2]);
  const double median = std::sqrt(mid);
  return median > 0.0 ? median : 1.0;
}

double diversity_logdet(std::span<const Trajectory> samples, std::optional<double> sigma_k, double eps) {
  if (samples.size() < 2) throw InputError("diversity_logdet needs at least two samples");
  if (!(eps > 0.0)) throw InputError("diversity eps must be positive");
  const double sigma = sigma_k.value_or(median_embedding_distance(samples));
  if (!(sigma > 0.0)) throw InputError("diversity sigma must be positive");

  const Eigen::MatrixXd z = flattened_positions(samples);
  const Eigen::Index n = z.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    k(a, a) = 1.0 + eps;
    for (Eigen::Index b = a + 1; b < n; ++b) {
      const double v = std::exp(-(z.row(a) - z.row(b)).squaredNorm() / (2.0 * sigma * sigma));
      k(a, b) = v;
      k(b, a) = v;
    }
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) throw InputError("diversity kernel is not positive definite");
  const Eigen::MatrixXd& l = llt.matrixL();
  double logdet = 0.0;
  for (Eigen::Index a = 0; a < n; ++a) logdet += 2.0 * std::log(l(a, a));
  return -logdet;
}

ViolationCounts violation_breakdown(std::span<const Trajectory> samples, const PhysicalLimits& limits) {
  ViolationCounts counts;
  for (const Trajectory& s : samples) {
    if (in_collision_set(s, limits)) ++counts.collision;
    bool speed = false, accel = false;
    for (std::size_t i = 0; i < s.agents(); ++i) {
      for (std::size_t t = 0; t < s.horizon(); ++t) {
        speed = speed || s.velocity(i, t).norm() > limits.v_max;
        accel = accel || s.acceleration(i, t).norm() > limits.a_max;
      }
    }
    if (speed) ++counts.speed;
    if (accel) ++counts.acceleration;
  }
  return counts;
}

void MetricsConfig::validate() const {
  if (!(d_social > 0.0)) throw InputError("d_social must be positive");
  if (tc_window < 1) throw InputError("tc_window must be at least 1");
  if (sigma_k && !(*sigma_k > 0.0)) throw InputError("sigma_k must be positive");
}

SampleReport evaluate_batch(std::span<const Trajectory> samples, const Trajectory& reference,
                            const PhysicalLimits& limits, const MetricsConfig& cfg) {
  require_non_empty(samples, "evaluate_batch");
  cfg.validate();
  SampleReport r;
  r.validity = validity_rate(samples, limits);
  r.collision_rate = collision_rate(samples, limits);
  r.pair_collision_rate = pair_collision_rate(samples, limits);
  const double n = static_cast<double>(samples.size());
  for (const Trajectory& s : samples) {
    r.ade += ade(s, reference) / n;
    r.fde += fde(s, reference) / n;
    r.social_conformity += social_conformity(s, cfg.d_social) / n;
    if (s.horizon() >= 2) r.jerk_mean += jerk_profile(s) / n;
  }
  r.temporal_consistency = temporal_consistency(samples, limits, std::min(cfg.tc_window, reference.horizon()));
  r.violation_breakdown = violation_breakdown(samples, limits);
  if (samples.size() >= 2) r.diversity = diversity_logdet(samples, cfg.sigma_k);
  return r;
}

std::string to_json(const SampleReport& report) {
  nlohmann::ordered_json j;
  j["validity"] = report.validity;
  j["collision_rate"] = report.collision_rate;
  j["pair_collision_rate"] = report.pair_collision_rate;
  j["ade"] = report.ade;
  j["fde"] = report.fde;
  j["temporal_consistency"] = report.temporal_consistency;
  j["jerk_mean"] = report.jerk_mean;
  j["violation_breakdown"] = {{"collision", report.violation_breakdown.collision},
                              {"speed", report.violation_breakdown.speed},
                              {"acceleration", report.violation_breakdown.acceleration}};
  j["social_conformity"] = report.social_conformity;
  j["diversity"] = report.diversity ? nlohmann::ordered_json(*report.diversity) : nlohmann::ordered_json(nullptr);
  return j.dump(2);
}

}  // namespace physguide
