#include "physguide/harness.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <numbers>
#include <numeric>
#include <thread>

#include "physguide/interaction_graph.hpp"
#include "physguide/rng.hpp"

namespace physguide {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
// Stream offsets for seeds derived inside the harness.
constexpr std::uint64_t kLangevinStream = 0x4c414e47ULL;
constexpr std::uint64_t kCalibrationStream = 1000000;

// Runs fn(k) for k in [0, count) on up to `workers` threads. Results must be written by index.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < count; k = next++) {
        try {
          fn(k);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

Json json_number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json to_json(const Stat& s) { return Json{{"mean", json_number(s.mean)}, {"se", json_number(s.se)}, {"n", s.n}}; }

Json to_json(const PairedStat& s) {
  return Json{{"mean_diff", json_number(s.mean_diff)}, {"se", json_number(s.se)}, {"t", json_number(s.t)},
              {"n", s.n}};
}

EnergyConfig energy_for(const EnergyConfig& base, const Scenario& scenario) {
  EnergyConfig e = base;
  e.limits = scenario.limits;
  return e;
}

// Descent energy whose safety distance is widened by the margin so that iterates settle strictly outside d_safe.
EnergyConfig descent_energy(const ExperimentConfig& cfg, const PhysicalLimits& limits) {
  EnergyConfig e = cfg.energy;
  e.limits = limits;
  e.limits.d_safe += cfg.descent_margin;
  return e;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double max_of(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, x);
  return m;
}

bool state_valid_at(const Trajectory& traj, std::size_t t, const PhysicalLimits& limits) {
  for (std::size_t i = 0; i < traj.agents(); ++i) {
    if (traj.velocity(i, t).norm() > limits.v_max || traj.acceleration(i, t).norm() > limits.a_max) return false;
    for (std::size_t j = i + 1; j < traj.agents(); ++j) {
      if ((traj.position(i, t) - traj.position(j, t)).norm() < limits.d_safe) return false;
    }
  }
  return true;
}

void fill_metrics(RunRecord& rec, const Trajectory& traj, const Trajectory& reference, const PhysicalLimits& limits,
                  const MetricsConfig& metrics) {
  if (rec.status == RunStatus::ok) {
    rec.valid = is_valid(traj, limits);
    rec.collision = in_collision_set(traj, limits);
  }
  rec.ade = ade(traj, reference);
  rec.fde = fde(traj, reference);
  const std::span<const Trajectory> one(&traj, 1);
  rec.tc = temporal_consistency(one, limits, std::min(metrics.tc_window, traj.horizon()));
  rec.jerk = traj.horizon() >= 2 ? jerk_profile(traj) : 0.0;
  rec.social = social_conformity(traj, metrics.d_social);
}

RunRecord run_method(const MethodSpec& method, const Scenario& scenario, std::uint64_t seed,
                     const ExperimentConfig& cfg, const BaseModel& model) {
  RunRecord rec;
  rec.kind = scenario.kind;
  rec.method = method.label();
  rec.seed = seed;
  rec.ade = rec.fde = rec.tc = rec.jerk = rec.social = kNaN;
  const EnergyConfig energy = energy_for(cfg.energy, scenario);
  std::optional<Trajectory> traj;

  switch (method.kind) {
    case MethodKind::unguided:
      traj = sample_unguided(scenario, model, seed);
      break;
    case MethodKind::guided:
      try {
        SampleResult r = sample(scenario, model, energy, method.schedule, seed, cfg.sampler);
        rec.max_grad_norm = max_of(r.diagnostics.grad_norms);
        traj = std::move(r.trajectory);
      } catch (const GradientExplosion& e) {
        rec.status = RunStatus::exploded;
        rec.max_grad_norm = e.grad_norm();
      }
      break;
    case MethodKind::rejection: {
      RejectionResult r = rejection_sample(scenario, model, scenario.limits, cfg.sampler.max_attempts, seed);
      rec.attempts = r.attempts;
      if (!r.succeeded()) rec.status = RunStatus::exhausted;
      traj = std::move(r.last_draw);
      break;
    }
    case MethodKind::langevin: {
      const Trajectory start = sample_unguided(scenario, model, seed);
      const std::vector<double> steps(method.langevin_iterations, method.langevin_eta);
      Rng rng(derive_seed(seed, kLangevinStream));
      const LangevinOptions opts{method.langevin_deterministic, cfg.sampler.c_crit, std::nullopt};
      try {
        SampleResult r = langevin_refine(start, descent_energy(cfg, scenario.limits), steps,
                                         method.langevin_iterations, rng, opts);
        rec.max_grad_norm = max_of(r.diagnostics.grad_norms);
        rec.attempts = method.langevin_iterations;
        traj = std::move(r.trajectory);
      } catch (const GradientExplosion& e) {
        rec.status = RunStatus::exploded;
        rec.max_grad_norm = e.grad_norm();
      }
      break;
    }
  }
  if (traj) {
    fill_metrics(rec, *traj, model.prior_mean(scenario), scenario.limits, cfg.metrics);
    rec.trajectory = std::move(traj);
  }
  return rec;
}

MethodAggregate aggregate(const std::vector<const RunRecord*>& rows, const ExperimentConfig& cfg,
                          const PhysicalLimits& limits) {
  MethodAggregate agg;
  std::vector<double> validity, collision, ade_v, fde_v, tc, jerk, social, attempts;
  std::vector<Trajectory> trajs;
  std::size_t exploded = 0, used = 0;
  std::size_t horizon = 0;
  for (const RunRecord* r : rows) {
    if (r->status == RunStatus::infeasible) {
      ++agg.infeasible;
      continue;
    }
    ++used;
    validity.push_back(r->valid ? 1.0 : 0.0);
    collision.push_back(r->collision ? 1.0 : 0.0);
    ade_v.push_back(r->ade);
    fde_v.push_back(r->fde);
    tc.push_back(r->tc);
    jerk.push_back(r->jerk);
    social.push_back(r->social);
    attempts.push_back(static_cast<double>(r->attempts));
    if (r->status == RunStatus::exploded) ++exploded;
    if (r->trajectory) {
      trajs.push_back(*r->trajectory);
      horizon = std::max(horizon, r->trajectory->horizon());
    }
  }
  agg.validity = summarize(validity);
  agg.collision = summarize(collision);
  agg.ade = summarize(ade_v);
  agg.fde = summarize(fde_v);
  agg.tc = summarize(tc);
  agg.jerk = summarize(jerk);
  agg.social = summarize(social);
  agg.attempts = summarize(attempts);
  agg.explosion_rate = used == 0 ? 0.0 : static_cast<double>(exploded) / static_cast<double>(used);
  if (trajs.size() >= 2) agg.diversity = diversity_logdet(trajs, cfg.metrics.sigma_k);
  agg.violations = violation_breakdown(trajs, limits);
  agg.validity_over_time.assign(horizon, 0.0);
  if (used > 0) {
    for (std::size_t t = 0; t < horizon; ++t) {
      std::size_t ok = 0;
      for (const Trajectory& tr : trajs) ok += state_valid_at(tr, t, limits) ? 1 : 0;
      agg.validity_over_time[t] = static_cast<double>(ok) / static_cast<double>(used);
    }
  }
  return agg;
}

void finish(ComparisonResult& result, const ExperimentConfig& cfg, std::size_t baseline) {
  const std::size_t n_methods = cfg.methods.size();
  const std::size_t n_seeds = cfg.seed_list().size();
  for (std::size_t s = 0; s < cfg.scenarios.size(); ++s) {
    std::vector<std::vector<double>> validity(n_methods), collision(n_methods);
    for (std::size_t m = 0; m < n_methods; ++m) {
      std::vector<const RunRecord*> rows;
      for (std::size_t k = 0; k < n_seeds; ++k) {
        const RunRecord& r = result.records[(s * n_methods + m) * n_seeds + k];
        rows.push_back(&r);
        const bool usable = r.status != RunStatus::infeasible;
        validity[m].push_back(usable ? (r.valid ? 1.0 : 0.0) : kNaN);
        collision[m].push_back(usable ? (r.collision ? 1.0 : 0.0) : kNaN);
      }
      MethodAggregate agg = aggregate(rows, cfg, cfg.scenarios[s].limits);
      agg.scenario_index = s;
      agg.kind = cfg.scenarios[s].kind;
      agg.method = cfg.methods[m].label();
      result.aggregates.push_back(std::move(agg));
    }
    for (std::size_t m = 0; m < n_methods; ++m) {
      if (m == baseline) continue;
      PairedComparison pc;
      pc.scenario_index = s;
      pc.method = cfg.methods[m].label();
      pc.baseline = cfg.methods[baseline].label();
      pc.validity = paired_difference(validity[m], validity[baseline]);
      pc.collision = paired_difference(collision[m], collision[baseline]);
      result.paired.push_back(pc);
    }
  }
}

ComparisonResult run_methods(const ExperimentConfig& cfg, std::size_t baseline) {
  cfg.validate();
  const BaseModel model(cfg.model);
  const std::vector<std::uint64_t> seeds = cfg.seed_list();
  const std::size_t n_methods = cfg.methods.size();
  const std::size_t n_seeds = seeds.size();

  ComparisonResult result;
  result.records.resize(cfg.scenarios.size() * n_methods * n_seeds);
  parallel_for(cfg.scenarios.size() * n_seeds, cfg.workers, [&](std::size_t task) {
    const std::size_t s = task / n_seeds;
    const std::size_t k = task % n_seeds;
    std::optional<Scenario> scenario;
    try {
      scenario = scenario_instance(cfg.scenarios[s], s, seeds[k]);
    } catch (const InfeasibleScenario&) {
    }
    for (std::size_t m = 0; m < n_methods; ++m) {
      RunRecord rec;
      if (scenario) {
        rec = run_method(cfg.methods[m], *scenario, seeds[k], cfg, model);
      } else {
        rec.kind = cfg.scenarios[s].kind;
        rec.method = cfg.methods[m].label();
        rec.seed = seeds[k];
        rec.status = RunStatus::infeasible;
        rec.ade = rec.fde = rec.tc = rec.jerk = rec.social = kNaN;
      }
      rec.scenario_index = s;
      rec.method_index = m;
      result.records[(s * n_methods + m) * n_seeds + k] = std::move(rec);
    }
  });
  finish(result, cfg, baseline);
  return result;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Seconds per call of fn, median over repetitions of batches sized to roughly batch_seconds.
// Per-call wall time of each workload: median of `repetitions` batches after one warm-up batch.
// Batches of different workloads are interleaved so that machine load drifts hit all of them alike.
std::vector<double> interleaved_times(const std::vector<std::function<void()>>& workloads, const ScalingOptions& opts) {
  using Clock = std::chrono::steady_clock;
  std::vector<std::size_t> batch(workloads.size());
  for (std::size_t w = 0; w < workloads.size(); ++w) {
    const auto once = Clock::now();
    workloads[w]();
    const double single = std::chrono::duration<double>(Clock::now() - once).count();
    const double reps = std::ceil(opts.batch_seconds / std::max(single, 1e-9));
    batch[w] = std::max<std::size_t>(1, static_cast<std::size_t>(reps));
  }
  auto run_batch = [&](std::size_t w) {
    const auto start = Clock::now();
    for (std::size_t b = 0; b < batch[w]; ++b) workloads[w]();
    return std::chrono::duration<double>(Clock::now() - start).count() / static_cast<double>(batch[w]);
  };
  for (std::size_t w = 0; w < workloads.size(); ++w) run_batch(w);
  std::vector<std::vector<double>> samples(workloads.size());
  for (std::size_t r = 0; r < opts.repetitions; ++r) {
    for (std::size_t w = 0; w < workloads.size(); ++w) samples[w].push_back(run_batch(w));
  }
  std::vector<double> out;
  for (const auto& s : samples) out.push_back(median(s));
  return out;
}

}  // namespace

RunRecord run_single(const MethodSpec& method, const Scenario& scenario, std::uint64_t seed,
                     const ExperimentConfig& cfg) {
  cfg.validate();
  return run_method(method, scenario, seed, cfg, BaseModel(cfg.model));
}

Json to_json(const RunRecord& r) {
  return Json{{"kind", std::string(to_string(r.kind))},
              {"method", r.method},
              {"seed", r.seed},
              {"status", std::string(to_string(r.status))},
              {"valid", r.valid},
              {"collision", r.collision},
              {"ade", json_number(r.ade)},
              {"fde", json_number(r.fde)},
              {"tc", json_number(r.tc)},
              {"jerk", json_number(r.jerk)},
              {"social", json_number(r.social)},
              {"attempts", r.attempts},
              {"max_grad_norm", json_number(r.max_grad_norm)}};
}

void write_trajectory_csv(const Trajectory& traj, std::ostream& out) {
  out << "agent,t,px,py,vx,vy,ax,ay\n";
  char buf[32];
  for (std::size_t i = 0; i < traj.agents(); ++i) {
    for (std::size_t t = 0; t < traj.horizon(); ++t) {
      out << i << ',' << t;
      for (std::size_t c = 0; c < kStateDim; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", traj.at(i, t, static_cast<Component>(c)));
        out << ',' << buf;
      }
      out << '\n';
    }
  }
}

std::string_view to_string(MethodKind kind) {
  switch (kind) {
    case MethodKind::unguided:
      return "unguided";
    case MethodKind::guided:
      return "guided";
    case MethodKind::rejection:
      return "rejection";
    case MethodKind::langevin:
      return "langevin";
  }
  return "unknown";
}

MethodKind method_kind_from_string(std::string_view name) {
  for (MethodKind k : {MethodKind::unguided, MethodKind::guided, MethodKind::rejection, MethodKind::langevin}) {
    if (to_string(k) == name) return k;
  }
  throw InputError("unknown method: " + std::string(name));
}

std::string MethodSpec::label() const {
  if (kind == MethodKind::guided) return "guided_" + std::string(to_string(schedule.family));
  return std::string(to_string(kind));
}

std::string_view to_string(RunStatus status) {
  switch (status) {
    case RunStatus::ok:
      return "ok";
    case RunStatus::exploded:
      return "exploded";
    case RunStatus::exhausted:
      return "exhausted";
    case RunStatus::infeasible:
      return "infeasible";
  }
  return "unknown";
}

std::vector<MethodSpec> ExperimentConfig::default_methods() {
  MethodSpec guided, unguided;
  unguided.kind = MethodKind::unguided;
  return {guided, unguided};
}

EnergyConfig ExperimentConfig::default_sampling_energy() {
  EnergyConfig e;
  e.weight_inverse_by_k_c = true;
  return e;
}

std::vector<std::uint64_t> ExperimentConfig::seed_list() const {
  if (!seeds.empty()) return seeds;
  std::vector<std::uint64_t> out(seed_count);
  std::iota(out.begin(), out.end(), base_seed);
  return out;
}

void ExperimentConfig::validate() const {
  if (scenarios.empty()) throw InputError("experiment needs at least one scenario");
  if (methods.empty()) throw InputError("experiment needs at least one method");
  if (seed_list().empty()) throw InputError("experiment needs at least one seed");
  if (workers < 1) throw InputError("workers must be at least 1");
  if (!(descent_margin >= 0.0)) throw InputError("descent_margin must be nonnegative");
  for (const ScenarioSpec& s : scenarios) s.validate();
  for (const MethodSpec& m : methods) {
    m.schedule.validate();
    if (m.kind == MethodKind::langevin && !(m.langevin_eta > 0.0)) throw InputError("langevin_eta must be positive");
  }
  energy.validate();
  model.validate();
  sampler.validate();
  metrics.validate();
}

Json to_json(const ExperimentConfig& cfg) {
  Json scenarios = Json::array();
  for (const ScenarioSpec& s : cfg.scenarios) scenarios.push_back(to_json(s));
  Json methods = Json::array();
  for (const MethodSpec& m : cfg.methods) {
    Json jm{{"kind", std::string(to_string(m.kind))}};
    if (m.kind == MethodKind::guided) {
      jm["schedule_family"] = std::string(to_string(m.schedule.family));
      jm["lambda0"] = m.schedule.lambda0;
      jm["exponent"] = m.schedule.exponent;
    }
    if (m.kind == MethodKind::langevin) {
      jm["iterations"] = m.langevin_iterations;
      jm["eta"] = m.langevin_eta;
      jm["deterministic"] = m.langevin_deterministic;
    }
    methods.push_back(std::move(jm));
  }
  return Json{{"scenarios", std::move(scenarios)},
              {"methods", std::move(methods)},
              {"seeds", cfg.seeds},
              {"experiment",
               {{"seed_count", cfg.seed_count}, {"base_seed", cfg.base_seed}, {"descent_margin", cfg.descent_margin}}},
              {"energy", to_json(cfg.energy)},
              {"model", to_json(cfg.model)},
              {"sampler", sampler_to_json(GuidanceSchedule{}, cfg.sampler)},
              {"metrics", to_json(cfg.metrics)}};
}

ExperimentConfig experiment_config_from_json(const Json& j, ExperimentConfig cfg) {
  if (!j.is_object()) throw InputError("config must be a JSON object");
  try {
    if (j.contains("scenarios")) {
      if (!j.at("scenarios").is_array()) throw InputError("'scenarios' must be an array");
      cfg.scenarios.clear();
      for (const Json& s : j.at("scenarios")) cfg.scenarios.push_back(scenario_spec_from_json(s));
    } else if (j.contains("scenario")) {
      cfg.scenarios = {scenario_spec_from_json(j.at("scenario"))};
    }
    GuidanceSchedule sampler_sched;
    if (j.contains("sampler")) sampler_from_json(j.at("sampler"), sampler_sched, cfg.sampler);
    if (j.contains("methods")) {
      if (!j.at("methods").is_array()) throw InputError("'methods' must be an array");
      cfg.methods.clear();
      for (const Json& jm : j.at("methods")) {
        MethodSpec m;
        if (jm.is_string()) {
          m.kind = method_kind_from_string(jm.get<std::string>());
          m.schedule = sampler_sched;
        } else {
          if (!jm.is_object() || !jm.contains("kind")) throw InputError("each method needs a 'kind'");
          m.kind = method_kind_from_string(jm.at("kind").get<std::string>());
          m.schedule = sampler_sched;
          if (jm.contains("schedule_family")) {
            m.schedule.family = schedule_family_from_string(jm.at("schedule_family").get<std::string>());
          }
          if (jm.contains("lambda0")) m.schedule.lambda0 = jm.at("lambda0").get<double>();
          if (jm.contains("exponent")) m.schedule.exponent = jm.at("exponent").get<double>();
          if (jm.contains("iterations")) m.langevin_iterations = jm.at("iterations").get<std::size_t>();
          if (jm.contains("eta")) m.langevin_eta = jm.at("eta").get<double>();
          if (jm.contains("deterministic")) m.langevin_deterministic = jm.at("deterministic").get<bool>();
        }
        cfg.methods.push_back(m);
      }
    } else if (j.contains("sampler")) {
      for (MethodSpec& m : cfg.methods) {
        if (m.kind == MethodKind::guided) m.schedule = sampler_sched;
      }
    }
    if (j.contains("seeds")) {
      const Json& js = j.at("seeds");
      if (js.is_number_unsigned() || js.is_number_integer()) {
        cfg.seeds.clear();
        cfg.seed_count = js.get<std::size_t>();
      } else {
        cfg.seeds = js.get<std::vector<std::uint64_t>>();
        if (cfg.seeds.empty()) throw InputError("'seeds' list must not be empty");
      }
    }
    if (j.contains("experiment")) {
      const Json& je = j.at("experiment");
      if (!je.is_object()) throw InputError("'experiment' must be an object");
      if (je.contains("seed_count")) cfg.seed_count = je.at("seed_count").get<std::size_t>();
      if (je.contains("base_seed")) cfg.base_seed = je.at("base_seed").get<std::uint64_t>();
      if (je.contains("workers")) cfg.workers = je.at("workers").get<std::size_t>();
      if (je.contains("descent_margin")) cfg.descent_margin = je.at("descent_margin").get<double>();
    }
    if (j.contains("energy")) cfg.energy = energy_config_from_json(j.at("energy"), cfg.energy);
    if (j.contains("model")) cfg.model = model_config_from_json(j.at("model"), cfg.model);
    if (j.contains("metrics")) cfg.metrics = metrics_config_from_json(j.at("metrics"), cfg.metrics);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

Scenario scenario_instance(const ScenarioSpec& spec, std::size_t index, std::uint64_t seed) {
  ScenarioSpec s = spec;
  s.seed = derive_seed(seed, index);
  return generate(s);
}

Stat summarize(const std::vector<double>& values) {
  std::vector<double> v;
  for (double x : values) {
    if (std::isfinite(x)) v.push_back(x);
  }
  Stat s;
  s.n = v.size();
  if (v.empty()) {
    s.mean = s.se = kNaN;
    return s;
  }
  s.mean = mean_of(v);
  if (v.size() < 2) return s;
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  const double n = static_cast<double>(v.size());
  s.se = std::sqrt(ss / (n - 1.0) / n);
  return s;
}

PairedStat paired_difference(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InputError("paired_difference needs equal-length series");
  std::vector<double> d;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (std::isfinite(a[k]) && std::isfinite(b[k])) d.push_back(a[k] - b[k]);
  }
  const Stat s = summarize(d);
  PairedStat p;
  p.n = s.n;
  p.mean_diff = s.mean;
  p.se = s.se;
  p.t = s.se > 0.0 ? s.mean / s.se : 0.0;
  return p;
}

ComparisonResult run_comparison(const ExperimentConfig& cfg) {
  std::size_t baseline = 0;
  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    if (cfg.methods[m].kind == MethodKind::unguided) {
      baseline = m;
      break;
    }
  }
  return run_methods(cfg, baseline);
}

ComparisonResult run_schedule_ablation(const ExperimentConfig& cfg) {
  const auto guided = std::find_if(cfg.methods.begin(), cfg.methods.end(),
                                   [](const MethodSpec& m) { return m.kind == MethodKind::guided; });
  if (guided == cfg.methods.end()) throw InputError("schedule ablation needs a guided method");
  ExperimentConfig sweep = cfg;
  sweep.methods.clear();
  for (ScheduleFamily f :
       {ScheduleFamily::constant, ScheduleFamily::linear, ScheduleFamily::quadratic, ScheduleFamily::exponential}) {
    MethodSpec m = *guided;
    m.schedule.family = f;
    sweep.methods.push_back(m);
  }
  // Paired against the constant schedule.
  return run_methods(sweep, 0);
}

void write_comparison_csv(const ComparisonResult& result, std::ostream& out) {
  out << "scenario,kind,method,seed,validity,collision,ade,fde,tc,jerk,social,diversity,status\n";
  for (const RunRecord& r : result.records) {
    const bool has = r.status != RunStatus::infeasible;
    out << r.scenario_index << ',' << to_string(r.kind) << ',' << r.method << ',' << r.seed << ','
        << (has ? (r.valid ? "1" : "0") : "") << ',' << (has ? (r.collision ? "1" : "0") : "") << ','
        << fmt(r.ade) << ',' << fmt(r.fde) << ',' << fmt(r.tc) << ',' << fmt(r.jerk) << ',' << fmt(r.social)
        << ",," << to_string(r.status) << '\n';
  }
  for (const MethodAggregate& a : result.aggregates) {
    const std::string head = std::to_string(a.scenario_index) + ',' + std::string(to_string(a.kind)) + ',' + a.method;
    out << head << ",mean," << fmt(a.validity.mean) << ',' << fmt(a.collision.mean) << ',' << fmt(a.ade.mean) << ','
        << fmt(a.fde.mean) << ',' << fmt(a.tc.mean) << ',' << fmt(a.jerk.mean) << ',' << fmt(a.social.mean) << ','
        << (a.diversity ? fmt(*a.diversity) : "") << ",aggregate\n";
    out << head << ",se," << fmt(a.validity.se) << ',' << fmt(a.collision.se) << ',' << fmt(a.ade.se) << ','
        << fmt(a.fde.se) << ',' << fmt(a.tc.se) << ',' << fmt(a.jerk.se) << ',' << fmt(a.social.se)
        << ",,aggregate\n";
  }
}

void write_validity_over_time_csv(const ComparisonResult& result, std::ostream& out) {
  out << "scenario,kind,method,t,valid_fraction\n";
  for (const MethodAggregate& a : result.aggregates) {
    for (std::size_t t = 0; t < a.validity_over_time.size(); ++t) {
      out << a.scenario_index << ',' << to_string(a.kind) << ',' << a.method << ',' << t << ','
          << fmt(a.validity_over_time[t]) << '\n';
    }
  }
}

void write_violation_csv(const ComparisonResult& result, std::ostream& out) {
  out << "scenario,kind,method,collision,speed,acceleration\n";
  for (const MethodAggregate& a : result.aggregates) {
    out << a.scenario_index << ',' << to_string(a.kind) << ',' << a.method << ',' << a.violations.collision << ','
        << a.violations.speed << ',' << a.violations.acceleration << '\n';
  }
}

Json comparison_summary(const ComparisonResult& result, const ExperimentConfig& cfg) {
  Json aggregates = Json::array();
  for (const MethodAggregate& a : result.aggregates) {
    aggregates.push_back(Json{{"scenario", a.scenario_index},
                              {"kind", std::string(to_string(a.kind))},
                              {"method", a.method},
                              {"validity", to_json(a.validity)},
                              {"collision", to_json(a.collision)},
                              {"ade", to_json(a.ade)},
                              {"fde", to_json(a.fde)},
                              {"tc", to_json(a.tc)},
                              {"jerk", to_json(a.jerk)},
                              {"social", to_json(a.social)},
                              {"attempts", to_json(a.attempts)},
                              {"diversity", a.diversity ? json_number(*a.diversity) : Json(nullptr)},
                              {"explosion_rate", a.explosion_rate},
                              {"infeasible", a.infeasible},
                              {"violations",
                               {{"collision", a.violations.collision},
                                {"speed", a.violations.speed},
                                {"acceleration", a.violations.acceleration}}}});
  }
  Json paired = Json::array();
  for (const PairedComparison& p : result.paired) {
    paired.push_back(Json{{"scenario", p.scenario_index},
                          {"method", p.method},
                          {"baseline", p.baseline},
                          {"validity", to_json(p.validity)},
                          {"collision", to_json(p.collision)}});
  }
  return Json{{"config", to_json(cfg)}, {"aggregates", std::move(aggregates)}, {"paired", std::move(paired)}};
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("loglog_slope needs two or more matched points");
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(x[k] > 0.0) || !(y[k] > 0.0)) throw InputError("loglog_slope needs positive values");
    lx.push_back(std::log(x[k]));
    ly.push_back(std::log(y[k]));
  }
  const double mx = mean_of(lx), my = mean_of(ly);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    sxy += (lx[k] - mx) * (ly[k] - my);
    sxx += (lx[k] - mx) * (lx[k] - mx);
  }
  if (!(sxx > 0.0)) throw InputError("loglog_slope needs distinct x values");
  return sxy / sxx;
}

ScalingResult run_scaling_study(const std::vector<std::size_t>& agent_counts, const ExperimentConfig& cfg,
                                const ScalingOptions& opts) {
  if (agent_counts.empty()) throw InputError("scaling study needs at least one agent count");
  if (opts.repetitions < 1) throw InputError("scaling study needs at least one repetition");
  if (!(opts.density > 0.0)) throw InputError("scaling density must be positive");
  cfg.validate();
  ScalingResult result;
  struct Case {
    Trajectory traj;
    EnergyConfig energy;
  };
  std::vector<Case> cases;
  for (std::size_t n : agent_counts) {
    if (n < 1) throw InputError("agent counts must be positive");
    ScenarioSpec spec = cfg.scenarios.front();
    spec.kind = ScenarioKind::urban_dense;
    spec.arena_side = std::sqrt(static_cast<double>(n) / opts.density);
    spec.density_target = opts.density;
    spec.seed = cfg.base_seed;
    const Scenario scenario = generate(spec);
    cases.push_back({constant_velocity_rollout(scenario), energy_for(cfg.energy, scenario)});
  }

  volatile double sink = 0.0;
  std::vector<std::function<void()>> workloads;
  for (const Case& c : cases) {
    workloads.emplace_back([&sink, &c] { sink = sink + total_energy_and_grad(c.traj, c.energy).e_total; });
    workloads.emplace_back([&sink, &c, &cfg] {
      const InteractionGraph graph = build_graph(c.traj, cfg.sampler.graph, EdgeWeights::skip);
      sink = sink + total_energy_and_grad(c.traj, c.energy, graph).e_total;
    });
  }
  const std::vector<double> times = interleaved_times(workloads, opts);
  for (std::size_t k = 0; k < cases.size(); ++k) {
    const Trajectory& traj = cases[k].traj;
    ScalingRow row;
    row.n_agents = traj.agents();
    row.horizon = traj.horizon();
    row.brute_seconds = times[2 * k];
    row.pruned_seconds = times[2 * k + 1];
    row.mean_edges = static_cast<double>(build_graph(traj, cfg.sampler.graph).total_edges()) /
                     static_cast<double>(traj.horizon());
    result.rows.push_back(row);
  }
  if (result.rows.size() >= 2) {
    std::vector<double> n, brute, pruned;
    for (const ScalingRow& r : result.rows) {
      n.push_back(static_cast<double>(r.n_agents));
      brute.push_back(r.brute_seconds);
      pruned.push_back(r.pruned_seconds);
    }
    result.brute_slope = loglog_slope(n, brute);
    result.pruned_slope = loglog_slope(n, pruned);
  }
  return result;
}

void write_scaling_csv(const ScalingResult& result, std::ostream& out) {
  out << "n_agents,horizon,brute_seconds,pruned_seconds,mean_edges\n";
  for (const ScalingRow& r : result.rows) {
    out << r.n_agents << ',' << r.horizon << ',' << fmt(r.brute_seconds) << ',' << fmt(r.pruned_seconds) << ','
        << fmt(r.mean_edges) << '\n';
  }
}

Json scaling_summary(const ScalingResult& result) {
  Json rows = Json::array();
  for (const ScalingRow& r : result.rows) {
    rows.push_back(Json{{"n_agents", r.n_agents},
                        {"horizon", r.horizon},
                        {"brute_seconds", r.brute_seconds},
                        {"pruned_seconds", r.pruned_seconds},
                        {"mean_edges", r.mean_edges}});
  }
  return Json{{"rows", std::move(rows)},
              {"brute_slope", result.brute_slope ? Json(*result.brute_slope) : Json(nullptr)},
              {"pruned_slope", result.pruned_slope ? Json(*result.pruned_slope) : Json(nullptr)}};
}

std::vector<FailureRow> run_failure_sweep(const std::vector<double>& densities, const ExperimentConfig& cfg) {
  if (densities.empty()) throw InputError("failure sweep needs at least one density");
  for (double d : densities) {
    if (!(d > 0.0)) throw InputError("densities must be positive");
  }
  cfg.validate();
  const auto guided = std::find_if(cfg.methods.begin(), cfg.methods.end(),
                                   [](const MethodSpec& m) { return m.kind == MethodKind::guided; });
  const GuidanceSchedule sched = guided == cfg.methods.end() ? GuidanceSchedule{} : guided->schedule;
  const BaseModel model(cfg.model);
  const std::vector<std::uint64_t> seeds = cfg.seed_list();

  std::vector<FailureRow> rows;
  for (double rho : densities) {
    ScenarioSpec spec = cfg.scenarios.front();
    spec.kind = ScenarioKind::urban_dense;
    spec.density_target = rho;

    struct Outcome {
      bool feasible = false, valid = false, collision = true, exploded = false;
      double grad_norm = 0.0;
    };
    std::vector<Outcome> outcomes(seeds.size());
    parallel_for(seeds.size(), cfg.workers, [&](std::size_t k) {
      Outcome& o = outcomes[k];
      std::optional<Scenario> scenario;
      try {
        scenario = scenario_instance(spec, 0, seeds[k]);
      } catch (const InfeasibleScenario&) {
        return;
      }
      o.feasible = true;
      const EnergyConfig energy = energy_for(cfg.energy, *scenario);
      try {
        const SampleResult r = sample(*scenario, model, energy, sched, seeds[k], cfg.sampler);
        o.valid = is_valid(r.trajectory, scenario->limits);
        o.collision = in_collision_set(r.trajectory, scenario->limits);
        o.grad_norm = mean_of(r.diagnostics.grad_norms);
      } catch (const GradientExplosion& e) {
        o.exploded = true;
        std::vector<double> norms = e.diagnostics().grad_norms;
        norms.push_back(e.grad_norm());
        o.grad_norm = mean_of(norms);
      }
    });

    FailureRow row;
    row.density = rho;
    row.n_agents = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(rho * spec.arena_side * spec.arena_side)));
    row.seeds = seeds.size();
    std::vector<double> validity, grad;
    std::size_t collisions = 0, explosions = 0;
    for (const Outcome& o : outcomes) {
      if (!o.feasible) {
        ++row.infeasible;
        continue;
      }
      validity.push_back(o.valid ? 1.0 : 0.0);
      grad.push_back(o.grad_norm);
      collisions += o.collision ? 1 : 0;
      explosions += o.exploded ? 1 : 0;
    }
    row.validity = summarize(validity);
    const double used = static_cast<double>(validity.size());
    row.collision_rate = validity.empty() ? kNaN : static_cast<double>(collisions) / used;
    row.explosion_rate = validity.empty() ? kNaN : static_cast<double>(explosions) / used;
    row.mean_grad_norm = validity.empty() ? kNaN : mean_of(grad);
    rows.push_back(row);
  }
  return rows;
}

void write_failure_csv(const std::vector<FailureRow>& rows, std::ostream& out) {
  out << "density,n_agents,seeds,infeasible,validity,validity_se,collision_rate,explosion_rate,mean_grad_norm\n";
  for (const FailureRow& r : rows) {
    out << fmt(r.density) << ',' << r.n_agents << ',' << r.seeds << ',' << r.infeasible << ','
        << fmt(r.validity.mean) << ',' << fmt(r.validity.se) << ',' << fmt(r.collision_rate) << ','
        << fmt(r.explosion_rate) << ',' << fmt(r.mean_grad_norm) << '\n';
  }
}

Json failure_summary(const std::vector<FailureRow>& rows) {
  Json out = Json::array();
  for (const FailureRow& r : rows) {
    out.push_back({{"density", r.density},
                   {"n_agents", r.n_agents},
                   {"seeds", r.seeds},
                   {"infeasible", r.infeasible},
                   {"validity", to_json(r.validity)},
                   {"collision_rate", json_number(r.collision_rate)},
                   {"explosion_rate", json_number(r.explosion_rate)},
                   {"mean_grad_norm", json_number(r.mean_grad_norm)}});
  }
  return Json{{"rows", std::move(out)}};
}

namespace {

Trajectory random_instance(Rng& rng, const PhysicalLimits& limits) {
  const auto n = static_cast<std::size_t>(2 + rng.next_u64() % 4);
  const auto horizon = static_cast<std::size_t>(2 + rng.next_u64() % 5);
  Trajectory x(n, horizon, 0.1);
  const double box = 1.5 * limits.d_safe;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < horizon; ++t) {
      const double hv = rng.uniform(0.0, 2.0 * std::numbers::pi), ha = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double speed = rng.uniform(0.0, 1.3 * limits.v_max), accel = rng.uniform(0.0, 1.3 * limits.a_max);
      x.set_state(i, t,
                  {rng.uniform(0.0, box), rng.uniform(0.0, box), speed * std::cos(hv), speed * std::sin(hv),
                   accel * std::cos(ha), accel * std::sin(ha)});
    }
  }
  return x;
}

double soft_min_distance(const Trajectory& x, std::size_t t, double beta) {
  double lo = std::numeric_limits<double>::infinity();
  std::vector<double> d;
  for (std::size_t i = 0; i < x.agents(); ++i) {
    for (std::size_t j = i + 1; j < x.agents(); ++j) d.push_back((x.position(i, t) - x.position(j, t)).norm());
  }
  for (double v : d) lo = std::min(lo, v);
  double sum = 0.0;
  for (double v : d) sum += std::exp(-beta * (v - lo));
  return lo - std::log(sum) / beta;
}

// Nearest non-smooth locus affecting component (i, t, c), or "none".
std::string locus_of(const Trajectory& x, std::size_t i, std::size_t t, std::size_t c, const EnergyConfig& cfg,
                     double margin) {
  const PhysicalLimits& lim = cfg.limits;
  if (c == kPx || c == kPy) {
    if (cfg.collision_variant == CollisionVariant::inverse_distance) {
      for (std::size_t j = 0; j < x.agents(); ++j) {
        if (j == i) continue;
        const double d = (x.position(i, t) - x.position(j, t)).norm();
        if (std::abs(d - lim.d_safe) < margin) return "d_safe";
        if (d < cfg.d_min + margin) return "d_min";
      }
    } else if (cfg.collision_variant == CollisionVariant::soft_minimum) {
      const double ds = soft_min_distance(x, t, cfg.soft_min_beta);
      if (std::abs(ds - lim.d_safe) < margin) return "d_safe";
      if (ds < cfg.d_min + margin) return "d_min";
    }
    return "none";
  }
  if (c == kVx || c == kVy) {
    return std::abs(x.velocity(i, t).norm() - lim.v_max) < margin ? "v_max" : "none";
  }
  if (cfg.kinematic_term == KinematicTerm::consistency &&
      std::abs(x.acceleration(i, t).norm() - lim.a_max) < margin) {
    return "a_max";
  }
  return "none";
}

}  // namespace

GradcheckReport run_gradcheck(std::size_t trials, const EnergyConfig& cfg, std::uint64_t seed,
                              const GradcheckOptions& opts) {
  if (trials < 1) throw InputError("gradcheck needs at least one trial");
  if (!(opts.step > 0.0) || !(opts.locus_margin >= 0.0) || !(opts.tolerance > 0.0)) {
    throw InputError("gradcheck options must be positive");
  }
  cfg.validate();
  constexpr std::array<CollisionVariant, 4> kVariants{CollisionVariant::inverse_distance,
                                                      CollisionVariant::smooth_exponential,
                                                      CollisionVariant::gaussian_rbf, CollisionVariant::soft_minimum};
  GradcheckReport report;
  report.trials = trials;
  report.tolerance = opts.tolerance;
  for (CollisionVariant v : kVariants) report.max_rel_error_by_variant[std::string(to_string(v))] = 0.0;
  Rng rng(seed);
  for (std::size_t k = 0; k < trials; ++k) {
    EnergyConfig e = cfg;
    e.collision_variant = kVariants[k % 4];
    e.kinematic_term = (k / 4) % 2 == 0 ? KinematicTerm::speed_hinge : KinematicTerm::consistency;
    e.weight_inverse_by_k_c = (k / 8) % 2 == 1;
    Trajectory x = random_instance(rng, e.limits);
    const Trajectory analytic = total_energy_and_grad(x, e).grad;
    double scale = 0.0;
    for (double g : analytic.values()) scale = std::max(scale, std::abs(g));
    const double floor = 1e-6 * (1.0 + scale);
    const std::string variant(to_string(e.collision_variant));

    for (std::size_t i = 0; i < x.agents(); ++i) {
      for (std::size_t t = 0; t < x.horizon(); ++t) {
        for (std::size_t comp = 0; comp < kStateDim; ++comp) {
          const auto c = static_cast<Component>(comp);
          const double orig = x.at(i, t, c);
          x.at(i, t, c) = orig + opts.step;
          const double up = total_energy_and_grad(x, e).e_total;
          x.at(i, t, c) = orig - opts.step;
          const double down = total_energy_and_grad(x, e).e_total;
          x.at(i, t, c) = orig;
          const double fd = (up - down) / (2.0 * opts.step);
          const double a = analytic.at(i, t, c);
          const double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
          ++report.components;
          const std::string locus = locus_of(x, i, t, c, e, opts.locus_margin);
          if (err >= opts.tolerance) ++report.failure_loci[locus];
          if (locus != "none") {
            ++report.near_locus;
            continue;
          }
          report.max_rel_error = std::max(report.max_rel_error, err);
          double& per = report.max_rel_error_by_variant[variant];
          per = std::max(per, err);
        }
      }
    }
  }
  return report;
}

Json to_json(const GradcheckReport& report) {
  Json by_variant = Json::object();
  for (const auto& [k, v] : report.max_rel_error_by_variant) by_variant[k] = v;
  Json loci = Json::object();
  for (const auto& [k, v] : report.failure_loci) loci[k] = v;
  return Json{{"trials", report.trials},
              {"components", report.components},
              {"near_locus", report.near_locus},
              {"max_rel_error", report.max_rel_error},
              {"tolerance", report.tolerance},
              {"passed", report.passed()},
              {"max_rel_error_by_variant", std::move(by_variant)},
              {"failure_loci", std::move(loci)}};
}

namespace {

Scenario head_on_instance(const ExperimentConfig& cfg, double speed) {
  ScenarioSpec spec = cfg.scenarios.front();
  spec.kind = ScenarioKind::head_on;
  spec.lateral_offset = 0.0;
  spec.approach_speed = speed;
  spec.seed = cfg.base_seed;
  return generate(spec);
}

double unguided_validity(const Scenario& scenario, const BaseModel& model, const std::vector<std::uint64_t>& seeds,
                         std::size_t workers) {
  std::vector<char> ok(seeds.size(), 0);
  parallel_for(seeds.size(), workers, [&](std::size_t k) {
    ok[k] = is_valid(sample_unguided(scenario, model, seeds[k]), scenario.limits) ? 1 : 0;
  });
  return static_cast<double>(std::count(ok.begin(), ok.end(), 1)) / static_cast<double>(seeds.size());
}

}  // namespace

std::vector<ComplexityRow> run_sample_complexity(const std::vector<double>& epsilons, const ExperimentConfig& cfg,
                                                 const ComplexityOptions& opts) {
  if (epsilons.empty()) throw InputError("sample complexity needs at least one epsilon");
  for (double eps : epsilons) {
    if (!(eps > 0.0 && eps < 1.0)) throw InputError("epsilon must lie in (0, 1)");
  }
  cfg.validate();
  const BaseModel model(cfg.model);
  const std::vector<std::uint64_t> seeds = cfg.seed_list();
  std::vector<std::uint64_t> calibration(opts.calibration_seeds);
  for (std::size_t k = 0; k < calibration.size(); ++k) {
    calibration[k] = derive_seed(cfg.base_seed, kCalibrationStream + k);
  }

  std::vector<ComplexityRow> rows;
  for (double eps : epsilons) {
    // Validity grows with approach speed: faster agents overlap for fewer timesteps.
    double lo = 0.05, hi = 12.0;
    for (std::size_t r = 0; r < opts.calibration_rounds; ++r) {
      const double mid = 0.5 * (lo + hi);
      if (unguided_validity(head_on_instance(cfg, mid), model, calibration, cfg.workers) < eps) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    ComplexityRow row;
    row.epsilon = eps;
    row.approach_speed = 0.5 * (lo + hi);
    const Scenario scenario = head_on_instance(cfg, row.approach_speed);
    row.unguided_validity = unguided_validity(scenario, model, seeds, cfg.workers);

    std::vector<std::size_t> attempts(seeds.size());
    std::vector<char> exhausted(seeds.size(), 0);
    // first_valid[k][b]: draw k is valid after b descent iterations.
    std::vector<std::vector<char>> valid_after(seeds.size());
    const EnergyConfig energy = descent_energy(cfg, scenario.limits);
    parallel_for(seeds.size(), cfg.workers, [&](std::size_t k) {
      const RejectionResult r = rejection_sample(scenario, model, scenario.limits, opts.max_attempts, seeds[k]);
      attempts[k] = r.attempts;
      exhausted[k] = r.succeeded() ? 0 : 1;

      std::vector<char>& track = valid_after[k];
      track.assign(opts.max_budget + 1, 0);
      Trajectory x = sample_unguided(scenario, model, seeds[k]);
      track[0] = is_valid(x, scenario.limits) ? 1 : 0;
      Rng rng(seeds[k]);
      const std::array<double, 1> step{opts.eta};
      const LangevinOptions lopts{true, cfg.sampler.c_crit, explosion_threshold(cfg.sampler.c_crit, opts.eta)};
      for (std::size_t b = 1; b <= opts.max_budget; ++b) {
        try {
          x = langevin_refine(x, energy, step, 1, rng, lopts).trajectory;
        } catch (const GradientExplosion&) {
          break;  // non-finite gradient; remaining budgets stay invalid
        }
        track[b] = is_valid(x, scenario.limits) ? 1 : 0;
      }
    });
    double total = 0.0;
    for (std::size_t a : attempts) total += static_cast<double>(a);
    row.mean_attempts = total / static_cast<double>(seeds.size());
    row.exhausted = static_cast<std::size_t>(std::count(exhausted.begin(), exhausted.end(), 1));
    for (std::size_t b = 0; b <= opts.max_budget; ++b) {
      std::size_t ok = 0;
      for (const auto& track : valid_after) ok += track[b] ? 1 : 0;
      if (static_cast<double>(ok) >= (1.0 - eps) * static_cast<double>(seeds.size())) {
        row.guided_budget = b;
        break;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

ConvergenceResult run_convergence_study(const std::vector<std::size_t>& budgets, std::size_t starts,
                                        const ExperimentConfig& cfg, double eta, double trace_eta,
                                        std::size_t trace_iterations) {
  if (budgets.empty() || starts < 1) throw InputError("convergence study needs budgets and starts");
  if (!(eta > 0.0) || !(trace_eta > 0.0)) throw InputError("step sizes must be positive");
  cfg.validate();
  const BaseModel model(cfg.model);

  struct Start {
    Scenario scenario;
    Trajectory x;
    std::uint64_t seed;
  };
  std::vector<Start> pool;
  const std::size_t max_tries = 100 * starts;
  for (std::uint64_t k = 0; pool.size() < starts && k < max_tries; ++k) {
    const std::uint64_t seed = cfg.base_seed + k;
    Scenario scenario = scenario_instance(cfg.scenarios.front(), 0, seed);
    Trajectory x = sample_unguided(scenario, model, seed);
    if (!is_valid(x, scenario.limits)) pool.push_back({std::move(scenario), std::move(x), seed});
  }
  if (pool.size() < starts) throw InputError("could not find enough invalid starts");

  ConvergenceResult result;
  result.budgets = budgets;
  result.starts = starts;
  result.traces = starts;
  std::vector<std::vector<char>> valid(starts, std::vector<char>(budgets.size(), 0));
  std::vector<char> exploded(starts, 0), non_monotone(starts, 0), trace_exploded(starts, 0);
  parallel_for(starts, cfg.workers, [&](std::size_t k) {
    const Start& s = pool[k];
    const EnergyConfig energy = descent_energy(cfg, s.scenario.limits);
    for (std::size_t b = 0; b < budgets.size(); ++b) {
      const std::vector<double> steps(budgets[b], eta);
      Rng rng(derive_seed(s.seed, kLangevinStream));
      try {
        const SampleResult r =
            langevin_refine(s.x, energy, steps, budgets[b], rng, {false, cfg.sampler.c_crit, std::nullopt});
        valid[k][b] = is_valid(r.trajectory, s.scenario.limits) ? 1 : 0;
      } catch (const GradientExplosion&) {
        exploded[k] = 1;
      }
    }
    const std::vector<double> steps(trace_iterations, trace_eta);
    Rng rng(s.seed);
    std::vector<double> trace;
    try {
      const SampleResult r =
          langevin_refine(s.x, energy, steps, trace_iterations, rng, {true, cfg.sampler.c_crit, std::nullopt});
      trace = r.diagnostics.energies;
      trace.push_back(r.diagnostics.final_energy);
    } catch (const GradientExplosion& e) {
      // The aborted chain's trace is checked up to the abort.
      trace_exploded[k] = 1;
      trace = e.diagnostics().energies;
    }
    for (std::size_t i = 1; i < trace.size(); ++i) {
      if (trace[i] > trace[i - 1]) non_monotone[k] = 1;
    }
  });
  for (std::size_t b = 0; b < budgets.size(); ++b) {
    std::size_t ok = 0;
    for (std::size_t k = 0; k < starts; ++k) ok += valid[k][b] ? 1 : 0;
    result.validity.push_back(static_cast<double>(ok) / static_cast<double>(starts));
  }
  result.exploded = static_cast<std::size_t>(std::count(exploded.begin(), exploded.end(), 1));
  result.non_monotone_traces = static_cast<std::size_t>(std::count(non_monotone.begin(), non_monotone.end(), 1));
  result.exploded_traces = static_cast<std::size_t>(std::count(trace_exploded.begin(), trace_exploded.end(), 1));
  return result;
}

std::vector<RobustnessRow> run_robustness_study(const std::vector<double>& deltas, const ExperimentConfig& cfg) {
  if (deltas.empty()) throw InputError("robustness study needs at least one delta");
  cfg.validate();
  const auto guided = std::find_if(cfg.methods.begin(), cfg.methods.end(),
                                   [](const MethodSpec& m) { return m.kind == MethodKind::guided; });
  const GuidanceSchedule sched = guided == cfg.methods.end() ? GuidanceSchedule{} : guided->schedule;
  const BaseModel model(cfg.model);
  const std::vector<std::uint64_t> seeds = cfg.seed_list();

  // deviation[d][k]; NaN when either chain exploded.
  std::vector<std::vector<double>> deviation(deltas.size(), std::vector<double>(seeds.size(), kNaN));
  parallel_for(seeds.size(), cfg.workers, [&](std::size_t k) {
    const Scenario scenario = scenario_instance(cfg.scenarios.front(), 0, seeds[k]);
    const EnergyConfig energy = energy_for(cfg.energy, scenario);
    std::optional<Trajectory> base;
    try {
      base = sample(scenario, model, energy, sched, seeds[k], cfg.sampler).trajectory;
    } catch (const GradientExplosion&) {
      return;
    }
    for (std::size_t d = 0; d < deltas.size(); ++d) {
      GuidanceSchedule perturbed = sched;
      perturbed.lambda0 += deltas[d];
      try {
        const Trajectory x = sample(scenario, model, energy, perturbed, seeds[k], cfg.sampler).trajectory;
        double ss = 0.0;
        for (std::size_t i = 0; i < x.agents(); ++i) {
          for (std::size_t t = 0; t < x.horizon(); ++t) {
            const Vec2 diff = x.position(i, t) - base->position(i, t);
            ss += diff.x * diff.x + diff.y * diff.y;
          }
        }
        deviation[d][k] = std::sqrt(ss / static_cast<double>(x.agents() * x.horizon()));
      } catch (const GradientExplosion&) {
      }
    }
  });
  // Compare deltas on the same seeds: drop a seed from every row if any of its chains exploded.
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    bool complete = true;
    for (const auto& dev : deviation) complete = complete && std::isfinite(dev[k]);
    if (!complete) {
      for (auto& dev : deviation) dev[k] = kNaN;
    }
  }
  std::vector<RobustnessRow> rows;
  for (std::size_t d = 0; d < deltas.size(); ++d) {
    RobustnessRow row;
    row.delta = deltas[d];
    row.deviation = summarize(deviation[d]);
    row.skipped = seeds.size() - row.deviation.n;
    rows.push_back(row);
  }
  return rows;
}

StabilityResult run_stability_study(std::size_t sequences, std::size_t length, const EnergyConfig& cfg,
                                    std::uint64_t seed) {
  if (sequences < 1 || length < 2) throw InputError("stability study needs sequences of two or more iterates");
  cfg.validate();
  constexpr std::size_t kAgents = 3;
  constexpr std::size_t kSteps = 5;
  const double d_safe = cfg.limits.d_safe;
  EnergyConfig smooth = cfg, inverse = cfg;
  smooth.collision_variant = CollisionVariant::smooth_exponential;
  inverse.collision_variant = CollisionVariant::inverse_distance;

  StabilityResult result;
  result.sequences = sequences;
  std::vector<double> s_scores, i_scores;
  Rng rng(seed);
  for (std::size_t q = 0; q < sequences; ++q) {
    // A chain of agents spaced close to d_safe; jitter moves pairs across the boundary.
    Trajectory base(kAgents, kSteps, 0.1);
    for (std::size_t t = 0; t < kSteps; ++t) {
      Vec2 p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
      for (std::size_t i = 0; i < kAgents; ++i) {
        base.set_state(i, t, {p.x, p.y, 0.0, 0.0, 0.0, 0.0});
        const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
        p += Vec2{std::cos(heading), std::sin(heading)} * (d_safe * rng.uniform(0.9, 1.1));
      }
    }
    std::vector<Trajectory> iterates;
    for (std::size_t k = 0; k < length; ++k) {
      Trajectory x = base;
      for (std::size_t i = 0; i < kAgents; ++i) {
        for (std::size_t t = 0; t < kSteps; ++t) {
          x.at(i, t, kPx) += 0.05 * d_safe * rng.normal();
          x.at(i, t, kPy) += 0.05 * d_safe * rng.normal();
        }
      }
      iterates.push_back(std::move(x));
    }
    const double s = gradient_stability(iterates, smooth);
    const double v = gradient_stability(iterates, inverse);
    s_scores.push_back(s);
    i_scores.push_back(v);
    if (s > v) ++result.smooth_wins;
  }
  result.smooth = summarize(s_scores);
  result.inverse = summarize(i_scores);
  return result;
}

}  // namespace physguide
