// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "physguide/harness.hpp"
#include "physguide/rng.hpp"

using namespace physguide;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string format(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool rel_close(double a, double b, double tol = 1e-9) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

// Brute-force oracles, written independently of the library.

double dist(const Trajectory& x, std::size_t i, std::size_t j, std::size_t t) {
  const double dx = x.at(i, t, kPx) - x.at(j, t, kPx), dy = x.at(i, t, kPy) - x.at(j, t, kPy);
  return std::sqrt(dx * dx + dy * dy);
}

bool oracle_collides(const Trajectory& x, double d_safe) {
  for (std::size_t t = 0; t < x.horizon(); ++t) {
    for (std::size_t i = 0; i < x.agents(); ++i) {
      for (std::size_t j = 0; j < x.agents(); ++j) {
        if (i != j && dist(x, i, j, t) < d_safe) return true;
      }
    }
  }
  return false;
}

bool oracle_speed_ok(const Trajectory& x, double v_max) {
  for (std::size_t i = 0; i < x.agents(); ++i) {
    for (std::size_t t = 0; t < x.horizon(); ++t) {
      if (std::sqrt(x.at(i, t, kVx) * x.at(i, t, kVx) + x.at(i, t, kVy) * x.at(i, t, kVy)) > v_max) return false;
    }
  }
  return true;
}

bool oracle_accel_ok(const Trajectory& x, double a_max) {
  for (std::size_t i = 0; i < x.agents(); ++i) {
    for (std::size_t t = 0; t < x.horizon(); ++t) {
      if (std::sqrt(x.at(i, t, kAx) * x.at(i, t, kAx) + x.at(i, t, kAy) * x.at(i, t, kAy)) > a_max) return false;
    }
  }
  return true;
}

bool oracle_valid(const Trajectory& x, const PhysicalLimits& l) {
  return !oracle_collides(x, l.d_safe) && oracle_speed_ok(x, l.v_max) && oracle_accel_ok(x, l.a_max);
}

// Gaussian elimination with partial pivoting.
double oracle_logdet(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  double logdet = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    }
    std::swap(a[p], a[c]);
    logdet += std::log(std::abs(a[c][c]));
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
    }
  }
  return logdet;
}

Trajectory random_scene(Rng& rng, std::size_t n, std::size_t t_len, const PhysicalLimits& l) {
  Trajectory x(n, t_len, 0.1);
  const double box = 2.0 * l.d_safe * std::sqrt(static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < t_len; ++t) {
      x.set_state(i, t,
                  {rng.uniform(0.0, box), rng.uniform(0.0, box), rng.uniform(-23.0, 23.0), rng.uniform(-23.0, 23.0),
                   rng.uniform(-6.2, 6.2), rng.uniform(-6.2, 6.2)});
    }
  }
  return x;
}

Outcome gradient_correctness() {
  const GradcheckReport r = run_gradcheck(1000, EnergyConfig{}, 20240601);
  std::string by;
  for (const auto& [k, v] : r.max_rel_error_by_variant) by += format(" %s=%.1e", k.c_str(), v);
  return {r.max_rel_error < 1e-4,
          format("max rel err %.2e over %zu instances, %zu components (%zu near non-smooth loci);", r.max_rel_error,
                 r.trials, r.components, r.near_locus) +
              by};
}

Outcome oracle_equivalence() {
  Rng rng(777);
  const PhysicalLimits l;
  std::size_t mismatches = 0, instances = 0;
  for (; instances < 500; ++instances) {
    const std::size_t batch = 2 + rng.next_u64() % 4;
    const std::size_t n = 2 + rng.next_u64() % 7;
    const std::size_t t_len = 2 + rng.next_u64() % 19;
    std::vector<Trajectory> xs;
    for (std::size_t b = 0; b < batch; ++b) xs.push_back(random_scene(rng, n, t_len, l));
    const Trajectory& ref = xs.front();

    std::size_t valid = 0, coll = 0, pair_hits = 0, pairs = 0;
    ViolationCounts vc;
    for (const Trajectory& x : xs) {
      const bool c = oracle_collides(x, l.d_safe);
      const bool k = oracle_speed_ok(x, l.v_max) && oracle_accel_ok(x, l.a_max);
      if (c != in_collision_set(x, l) || k != is_kinematically_feasible(x, l) || (!c && k) != is_valid(x, l)) {
        ++mismatches;
      }
      valid += (!c && k) ? 1 : 0;
      coll += c ? 1 : 0;
      vc.collision += c ? 1 : 0;
      vc.speed += oracle_speed_ok(x, l.v_max) ? 0 : 1;
      vc.acceleration += oracle_accel_ok(x, l.a_max) ? 0 : 1;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
          ++pairs;
          bool hit = false;
          for (std::size_t t = 0; t < t_len; ++t) hit = hit || dist(x, i, j, t) < l.d_safe;
          pair_hits += hit ? 1 : 0;
        }
      }
    }
    const double b = static_cast<double>(batch);
    bool ok = rel_close(validity_rate(xs, l), valid / b) && rel_close(collision_rate(xs, l), coll / b) &&
              rel_close(pair_collision_rate(xs, l), static_cast<double>(pair_hits) / static_cast<double>(pairs));
    const ViolationCounts got = violation_breakdown(xs, l);
    ok = ok && got.collision == vc.collision && got.speed == vc.speed && got.acceleration == vc.acceleration;

    // Temporal consistency with a random window.
    const std::size_t w = 1 + rng.next_u64() % t_len;
    std::size_t win_ok = 0, wins = 0;
    for (const Trajectory& x : xs) {
      for (std::size_t s = 0; s < t_len; s += w) {
        ++wins;
        win_ok += oracle_valid(x.window(s, std::min(s + w, t_len)), l) ? 1 : 0;
      }
    }
    ok = ok && rel_close(temporal_consistency(xs, l, w), static_cast<double>(win_ok) / static_cast<double>(wins));

    for (const Trajectory& x : xs) {
      double a = 0.0, f = 0.0, jerk = 0.0, social = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < t_len; ++t) {
          const double e = std::hypot(x.at(i, t, kPx) - ref.at(i, t, kPx), x.at(i, t, kPy) - ref.at(i, t, kPy));
          a += e;
          if (t + 1 == t_len) f += e;
          if (t + 1 < t_len) {
            jerk += std::hypot(x.at(i, t + 1, kAx) - x.at(i, t, kAx), x.at(i, t + 1, kAy) - x.at(i, t, kAy)) / 0.1;
          }
        }
      }
      for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = i + 1; j < n; ++j) {
            const double d = dist(x, i, j, t);
            if (d >= 5.0) continue;
            const double vix = x.at(i, t, kVx), viy = x.at(i, t, kVy), vjx = x.at(j, t, kVx), vjy = x.at(j, t, kVy);
            const double ni = std::hypot(vix, viy), nj = std::hypot(vjx, vjy);
            const double cosine = (ni < 1e-6 || nj < 1e-6) ? 1.0 : (vix * vjx + viy * vjy) / (ni * nj);
            social += (1.0 - std::clamp(cosine, -1.0, 1.0)) * std::exp(-d / 5.0);
          }
        }
      }
      const double nt = static_cast<double>(n * t_len);
      ok = ok && rel_close(ade(x, ref), a / nt) && rel_close(fde(x, ref), f / static_cast<double>(n)) &&
           rel_close(jerk_profile(x), jerk / static_cast<double>(n * (t_len - 1))) &&
           rel_close(social_conformity(x, 5.0), social, 1e-8);
    }

    // Diversity against an elimination-based determinant with an explicit kernel scale.
    const double sigma = 3.0 * std::sqrt(static_cast<double>(n * t_len));
    std::vector<std::vector<double>> k(batch, std::vector<double>(batch));
    for (std::size_t p = 0; p < batch; ++p) {
      for (std::size_t q = 0; q < batch; ++q) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t t = 0; t < t_len; ++t) {
            d2 += std::pow(xs[p].at(i, t, kPx) - xs[q].at(i, t, kPx), 2) +
                  std::pow(xs[p].at(i, t, kPy) - xs[q].at(i, t, kPy), 2);
          }
        }
        k[p][q] = std::exp(-d2 / (2.0 * sigma * sigma)) + (p == q ? 1e-6 : 0.0);
      }
    }
    ok = ok && rel_close(diversity_logdet(xs, sigma), -oracle_logdet(k));
    if (!ok) ++mismatches;
  }
  return {mismatches == 0, format("%zu randomized batches (N<=8, T<=20), %zu mismatches", instances, mismatches)};
}

Outcome guidance_off() {
  const BaseModel model;
  std::size_t identical = 0, total = 0;
  for (ScenarioKind kind :
       {ScenarioKind::intersection, ScenarioKind::highway_merge, ScenarioKind::roundabout, ScenarioKind::urban_dense}) {
    ScenarioSpec spec;
    spec.kind = kind;
    spec.n_agents = 6;
    spec.seed = 11;
    const Scenario sc = generate(spec);
    EnergyConfig e = ExperimentConfig::default_sampling_energy();
    e.limits = sc.limits;
    GuidanceSchedule off;
    off.lambda0 = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      ++total;
      const Trajectory g = sample(sc, model, e, off, seed).trajectory;
      const Trajectory u = sample_unguided(sc, model, seed);
      const auto a = g.values(), b = u.values();
      identical += std::equal(a.begin(), a.end(), b.begin(), b.end(), [](double x, double y) {
        return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
      }) ? 1 : 0;
    }
  }
  return {identical == total, format("%zu/%zu chains bit-identical (50 seeds x 4 kinds)", identical, total)};
}

ExperimentConfig paired_config(ScenarioKind kind, std::size_t agents) {
  ExperimentConfig cfg;
  cfg.scenarios.front().kind = kind;
  cfg.scenarios.front().n_agents = agents;
  cfg.scenarios.front().horizon = 30;
  cfg.seed_count = 500;
  return cfg;
}

const MethodAggregate& find(const ComparisonResult& r, const std::string& method) {
  return *std::find_if(r.aggregates.begin(), r.aggregates.end(),
                       [&](const MethodAggregate& a) { return a.method == method; });
}

const PairedComparison& find_paired(const ComparisonResult& r, const std::string& method) {
  return *std::find_if(r.paired.begin(), r.paired.end(),
                       [&](const PairedComparison& p) { return p.method == method; });
}

Outcome validity_improvement() {
  const ComparisonResult r = run_comparison(paired_config(ScenarioKind::intersection, 4));
  const PairedComparison& p = find_paired(r, "guided_quadratic");
  return {p.validity.mean_diff >= 0.15,
          format("guided %.3f vs unguided %.3f, paired diff %+.3f (se %.3f, t %.1f, n %zu), need >= +0.150",
                 find(r, "guided_quadratic").validity.mean, find(r, "unguided").validity.mean, p.validity.mean_diff,
                 p.validity.se, p.validity.t, p.validity.n)};
}

Outcome collision_reduction() {
  const ComparisonResult r = run_comparison(paired_config(ScenarioKind::head_on, 2));
  const double g = find(r, "guided_quadratic").collision.mean, u = find(r, "unguided").collision.mean;
  return {g <= 0.5 * u, format("head-on collision rate guided %.3f vs unguided %.3f (need <= %.3f), %.1f%% exploded",
                               g, u, 0.5 * u, 100.0 * find(r, "guided_quadratic").explosion_rate)};
}

Outcome schedule_ordering() {
  const ComparisonResult r = run_schedule_ablation(paired_config(ScenarioKind::intersection, 4));
  const PairedComparison& p = find_paired(r, "guided_quadratic");
  std::string all;
  for (const MethodAggregate& a : r.aggregates) all += format(" %s=%.3f", a.method.c_str(), a.validity.mean);
  return {p.validity.mean_diff >= 0.0,
          format("quadratic - constant validity %+.3f (se %.3f, n %zu);", p.validity.mean_diff, p.validity.se,
                 p.validity.n) +
              all};
}

Outcome smooth_stability() {
  const StabilityResult r = run_stability_study(100, 20, EnergyConfig{}, 4242);
  const double rate = static_cast<double>(r.smooth_wins) / static_cast<double>(r.sequences);
  return {rate >= 0.9, format("smooth wins %zu/%zu (%.0f%%); mean stability smooth %.3f vs inverse %.3f",
                              r.smooth_wins, r.sequences, 100.0 * rate, r.smooth.mean, r.inverse.mean)};
}

Outcome scaling_law() {
  ExperimentConfig cfg;
  const ScalingResult r = run_scaling_study({16, 32, 64, 128}, cfg);
  const ScalingRow& last = r.rows.back();
  const double slope = r.brute_slope.value_or(0.0);
  std::string times;
  for (const ScalingRow& row : r.rows) {
    times += format(" N=%zu %.1f/%.1fus", row.n_agents, 1e6 * row.brute_seconds, 1e6 * row.pruned_seconds);
  }
  return {slope >= 1.7 && slope <= 2.3 && last.pruned_seconds < last.brute_seconds,
          format("brute slope %.2f in [1.7, 2.3]; at N=128 pruned %.1fus vs brute %.1fus; brute/pruned:", slope,
                 1e6 * last.pruned_seconds, 1e6 * last.brute_seconds) +
              times};
}

Outcome sample_complexity() {
  ExperimentConfig cfg;
  cfg.seed_count = 300;
  const std::vector<ComplexityRow> rows = run_sample_complexity({0.2, 0.1, 0.05}, cfg);
  std::string detail;
  for (const ComplexityRow& r : rows) {
    detail += format(" eps=%.2f: p=%.3f attempts=%.2f budget=%s;", r.epsilon, r.unguided_validity, r.mean_attempts,
                     r.guided_budget ? std::to_string(*r.guided_budget).c_str() : "none");
  }
  const ComplexityRow &a = rows.front(), &b = rows.back();
  const double attempt_ratio = b.mean_attempts / a.mean_attempts;
  const bool budgets = a.guided_budget && b.guided_budget && *a.guided_budget > 0;
  const double budget_ratio = budgets ? static_cast<double>(*b.guided_budget) / static_cast<double>(*a.guided_budget)
                                      : std::numeric_limits<double>::infinity();
  return {attempt_ratio >= 2.0 && budget_ratio < 2.0,
          format("rejection attempts x%.2f (need >= 2), guided budget x%.2f (need < 2);", attempt_ratio,
                 budget_ratio) +
              detail};
}

Outcome convergence_trend() {
  ExperimentConfig cfg = paired_config(ScenarioKind::intersection, 4);
  const ConvergenceResult r = run_convergence_study({10, 50, 250}, 200, cfg);
  const bool monotone = std::is_sorted(r.validity.begin(), r.validity.end());
  return {monotone && r.non_monotone_traces == 0,
          format("validity at budgets 10/50/250: %.3f/%.3f/%.3f over %zu invalid starts (%zu exploded); "
                 "%zu/%zu deterministic traces at eta=1e-4 non-monotone (%zu aborted by the explosion check)",
                 r.validity[0], r.validity[1], r.validity[2], r.starts, r.exploded, r.non_monotone_traces, r.traces,
                 r.exploded_traces)};
}

Outcome density_failure() {
  ExperimentConfig cfg;
  // A short horizon keeps the lowest density away from zero validity.
  cfg.scenarios.front().arena_side = 25.0;
  cfg.scenarios.front().horizon = 5;
  cfg.seed_count = 200;
  const std::vector<FailureRow> rows = run_failure_sweep({0.02, 0.04, 0.06, 0.09, 0.12}, cfg);
  bool monotone = true;
  std::string detail;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (k > 0 && rows[k].validity.mean > rows[k - 1].validity.mean) monotone = false;
    detail += format(" rho=%.2f (N=%zu): validity %.3f, explosions %.3f, infeasible %zu;", rows[k].density,
                     rows[k].n_agents, rows[k].validity.mean, rows[k].explosion_rate, rows[k].infeasible);
  }
  const bool explode = rows.back().explosion_rate >= rows.front().explosion_rate;
  return {monotone && explode, "validity non-increasing and explosions(0.12) >= explosions(0.02):" + detail};
}

Outcome robustness() {
  ExperimentConfig cfg = paired_config(ScenarioKind::intersection, 4);
  cfg.seed_count = 100;
  const std::vector<RobustnessRow> rows = run_robustness_study({1e-3, 1e-2}, cfg);
  return {rows[0].deviation.mean < rows[1].deviation.mean,
          format("mean RMS deviation %.3e m (delta=1e-3, n %zu) vs %.3e m (delta=1e-2, n %zu); seeds with an "
                 "exploded chain skipped",
                 rows[0].deviation.mean, rows[0].deviation.n, rows[1].deviation.mean, rows[1].deviation.n)};
}

Outcome determinism() {
  ExperimentConfig cfg;
  cfg.seed_count = 20;
  cfg.methods.push_back({MethodKind::rejection});
  cfg.methods.push_back({MethodKind::langevin});
  auto csv = [](const ExperimentConfig& c) {
    std::ostringstream out;
    write_comparison_csv(run_comparison(c), out);
    return out.str();
  };
  const std::string first = csv(cfg);
  ExperimentConfig threaded = cfg;
  threaded.workers = 3;
  const bool csv_same = first == csv(cfg) && first == csv(threaded);

  std::size_t round_trips = 0, kinds = 0;
  for (ScenarioKind kind : {ScenarioKind::intersection, ScenarioKind::highway_merge, ScenarioKind::roundabout,
                            ScenarioKind::urban_dense, ScenarioKind::head_on}) {
    ScenarioSpec spec;
    spec.kind = kind;
    spec.seed = 99;
    const std::string text = dump_scenario(generate(spec));
    ++kinds;
    round_trips += dump_scenario(parse_scenario(text)) == text ? 1 : 0;
  }
  return {csv_same && round_trips == kinds,
          format("CSV reruns byte-identical: %s (%zu bytes, 1 and 3 workers); scenario JSON round trips %zu/%zu",
                 csv_same ? "yes" : "no", first.size(), round_trips, kinds)};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
    // Wall-time budget in seconds, part of the criterion where one is stated.
    double budget = std::numeric_limits<double>::infinity();
  };
  const std::vector<Criterion> criteria{
      {"gradient correctness", gradient_correctness, 60.0},
      {"oracle equivalence", oracle_equivalence, 60.0},
      {"guidance-off equivalence", guidance_off},
      {"validity improvement", validity_improvement, 300.0},
      {"collision reduction", collision_reduction},
      {"schedule ordering", schedule_ordering},
      {"smooth-variant stability", smooth_stability},
      {"scaling law", scaling_law},
      {"sample-complexity trend", sample_complexity},
      {"convergence trend", convergence_trend},
      {"density failure mode", density_failure},
      {"robustness", robustness},
      {"determinism and round trip", determinism},
  };
  // Optional arguments select criteria by number; all run by default.
  std::vector<bool> selected(criteria.size(), argc <= 1);
  for (int a = 1; a < argc; ++a) {
    const long k = std::strtol(argv[a], nullptr, 10);
    if (k >= 1 && static_cast<std::size_t>(k) <= criteria.size()) selected[static_cast<std::size_t>(k - 1)] = true;
  }
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    if (!selected[k]) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs >= criteria[k].budget) {
      o.pass = false;
      o.detail += format(" [over the %.0f s budget]", criteria[k].budget);
    }
    std::printf("%s [%2zu] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].name, o.detail.c_str(),
                secs);
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  std::printf("%d of %zu acceptance criteria failed\n", failures,
              static_cast<std::size_t>(std::count(selected.begin(), selected.end(), true)));
  return failures == 0 ? 0 : 1;
}
