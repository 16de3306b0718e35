#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "physguide/guided_sampler.hpp"
#include "physguide/scenarios.hpp"
#include "support.hpp"

using namespace physguide;
using testsupport::dist;

namespace {

Scenario two_agents(double gap, std::size_t horizon = 10) {
  Scenario s;
  s.initial = {{0, 0, 0, 0, 0, 0}, {gap, 0, 0, 0, 0, 0}};
  s.horizon = horizon;
  s.arena = {-20, -20, 20, 20};
  return s;
}

EnergyConfig weighted_energy() {
  EnergyConfig cfg;
  cfg.weight_inverse_by_k_c = true;
  return cfg;
}

}  // namespace

TEST_CASE("guidance strength schedules") {
  GuidanceSchedule q;
  CHECK(guidance_strength(16, 16, q) == doctest::Approx(0.1));
  CHECK(guidance_strength(0, 16, q) == 0.0);
  CHECK(guidance_strength(4, 16, q) == doctest::Approx(0.1 / 16));
  q.exponent = 0.7;
  CHECK(guidance_strength(8, 16, q) == doctest::Approx(0.1 * std::pow(0.5, 0.7)));

  GuidanceSchedule lin{ScheduleFamily::linear, 0.1, 2.0};
  CHECK(guidance_strength(8, 16, lin) == doctest::Approx(0.05));
  GuidanceSchedule con{ScheduleFamily::constant, 0.1, 2.0};
  CHECK(guidance_strength(3, 16, con) == doctest::Approx(0.1));
  GuidanceSchedule ex{ScheduleFamily::exponential, 0.1, 2.0};
  CHECK(guidance_strength(16, 16, ex) == doctest::Approx(0.1));
  CHECK(guidance_strength(0, 16, ex) == doctest::Approx(0.1 / std::exp(1.0)));

  CHECK_THROWS_AS(guidance_strength(17, 16, q), IndexError);
  for (auto f : {ScheduleFamily::constant, ScheduleFamily::linear, ScheduleFamily::quadratic,
                 ScheduleFamily::exponential}) {
    CHECK(schedule_family_from_string(to_string(f)) == f);
    const GuidanceSchedule s{f, 0.2, 2.0};
    for (std::size_t t = 1; t <= 16; ++t) {
      CHECK(guidance_strength(t, 16, s) >= guidance_strength(t - 1, 16, s));
      CHECK(guidance_strength(t, 16, s) <= 0.2 + 1e-15);
    }
  }
}

TEST_CASE("guided step with guidance off or zero gradient equals the unguided step") {
  const BaseModel model;
  const EnergyConfig cfg = weighted_energy();
  Rng init(3);

  SUBCASE("lambda0 = 0") {
    const Scenario s = two_agents(1.0);
    const Trajectory prior = model.prior_mean(s);
    const Trajectory noisy = testsupport::random_trajectory(init, 2, 10, 2, 3, 1);
    const GuidanceSchedule off{ScheduleFamily::constant, 0.0, 2.0};
    Rng a(11), b(11);
    const auto [guided, rec] = guided_reverse_step(noisy, 9, model, cfg, off, prior, a);
    CHECK(guided == reverse_step(noisy, 9, model, prior, b));
    CHECK(rec.eta == 0.0);
  }
  SUBCASE("valid interior iterate") {
    const Scenario s = two_agents(10.0);
    const Trajectory prior = model.prior_mean(s);
    const GuidanceSchedule on{ScheduleFamily::constant, 0.5, 2.0};
    Rng a(11), b(11);
    const auto [guided, rec] = guided_reverse_step(prior, 16, model, cfg, on, prior, a);
    CHECK(guided == reverse_step(prior, 16, model, prior, b));
    CHECK(rec.grad_norm == 0.0);
  }
}

TEST_CASE("guidance pushes close agents apart relative to the unguided step") {
  const BaseModel model;
  const EnergyConfig cfg = weighted_energy();
  const Scenario s = two_agents(1.0, 3);
  const Trajectory prior = model.prior_mean(s);
  const GuidanceSchedule on{ScheduleFamily::constant, 1e-3, 2.0};
  Rng a(5), b(5);
  const auto [guided, rec] = guided_reverse_step(prior, 10, model, cfg, on, prior, a);
  const Trajectory plain = reverse_step(prior, 10, model, prior, b);
  CHECK(rec.grad_norm > 0.0);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(guided.at(0, t, kPx) - plain.at(0, t, kPx) < 0.0);
    CHECK(guided.at(1, t, kPx) - plain.at(1, t, kPx) > 0.0);
    CHECK(guided.at(0, t, kPy) == doctest::Approx(plain.at(0, t, kPy)));
  }
}

TEST_CASE("full chains") {
  ScenarioSpec spec;
  spec.n_agents = 4;
  const Scenario s = generate(spec);
  const BaseModel model;
  const EnergyConfig cfg = weighted_energy();
  const GuidanceSchedule sched;
  SamplerOptions clipped;
  clipped.clip_grad_norm = 1e3;

  SUBCASE("fixed seed is deterministic") {
    const SampleResult a = sample(s, model, cfg, sched, 42, clipped);
    const SampleResult b = sample(s, model, cfg, sched, 42, clipped);
    CHECK(a.trajectory == b.trajectory);
    CHECK(a.diagnostics.grad_norms == b.diagnostics.grad_norms);
    CHECK(a.diagnostics.steps == 16);
    CHECK(a.diagnostics.attempts == 1);
  }
  SUBCASE("lambda0 = 0 reproduces the unguided chain bit for bit") {
    const GuidanceSchedule off{ScheduleFamily::quadratic, 0.0, 2.0};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      CHECK(sample(s, model, cfg, off, seed).trajectory == sample_unguided(s, model, seed));
    }
  }
  SUBCASE("pruned pair evaluation gives the same chain when no pair is cut") {
    SamplerOptions pruned = clipped;
    pruned.prune_pairs = true;
    pruned.graph.r_interact = 1e4;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto a = sample(s, model, cfg, sched, seed, clipped).trajectory;
      const auto b = sample(s, model, cfg, sched, seed, pruned).trajectory;
      for (std::size_t k = 0; k < a.size(); ++k) CHECK(a.values()[k] == doctest::Approx(b.values()[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("a single stationary agent always yields a valid sample") {
  Scenario s;
  s.initial = {{0, 0, 0, 0, 0, 0}};
  s.horizon = 20;
  s.arena = {-10, -10, 10, 10};
  const BaseModel model;
  int valid = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    valid += is_valid(sample(s, model, weighted_energy(), GuidanceSchedule{}, seed).trajectory, s.limits);
  }
  CHECK(valid == 100);
}

TEST_CASE("guided samples have lower mean energy than unguided samples on every scenario kind") {
  const BaseModel model;
  const EnergyConfig cfg = weighted_energy();
  for (auto kind : {ScenarioKind::intersection, ScenarioKind::highway_merge, ScenarioKind::roundabout,
                    ScenarioKind::urban_dense, ScenarioKind::head_on}) {
    ScenarioSpec spec;
    spec.kind = kind;
    spec.n_agents = kind == ScenarioKind::head_on ? 2 : 4;
    spec.arena_side = 20.0;
    SamplerOptions opts;
    opts.clip_grad_norm = 1e3;
    double guided = 0.0, unguided = 0.0;
    const int seeds = 200;
    for (int k = 0; k < seeds; ++k) {
      spec.seed = derive_seed(static_cast<std::uint64_t>(k), 1);
      const Scenario s = generate(spec);
      const auto u = sample_unguided(s, model, static_cast<std::uint64_t>(k));
      const auto g = sample(s, model, cfg, GuidanceSchedule{}, static_cast<std::uint64_t>(k), opts);
      unguided += total_energy_and_grad(u, cfg).e_total;
      guided += g.diagnostics.final_energy;
    }
    INFO("kind ", to_string(kind));
    CHECK(guided <= unguided);
  }
}

TEST_CASE("explosion handling") {
  const BaseModel model;
  EnergyConfig cfg = weighted_energy();
  cfg.k_c = 1e6;
  const Scenario s = two_agents(0.05, 4);
  const GuidanceSchedule strong{ScheduleFamily::constant, 1.0, 2.0};
  SamplerOptions opts;
  opts.c_crit = 1.0;

  SUBCASE("aborts with diagnostics") {
    try {
      (void)sample(s, model, cfg, strong, 1, opts);
      FAIL("expected an explosion");
    } catch (const GradientExplosion& e) {
      CHECK(e.step() == 16);
      CHECK(e.grad_norm() >= explosion_threshold(1.0, 1.0));
      CHECK(e.diagnostics().explosion_flag);
    }
  }
  SUBCASE("clipping keeps the chain going") {
    opts.clip_grad_norm = 1.0;
    const SampleResult r = sample(s, model, cfg, strong, 1, opts);
    CHECK(r.trajectory.is_finite());
    CHECK(r.diagnostics.steps == 16);
    // Clipped steps still raise the flag so the event stays visible.
    CHECK(r.diagnostics.explosion_flag);
  }
}

TEST_CASE("explosion detection") {
  CHECK(explosion_threshold(1e3, 0.01) == doctest::Approx(1e4));
  CHECK(std::isinf(explosion_threshold(1e3, 0.0)));

  SamplerDiagnostics zeros;
  for (int k = 0; k < 5; ++k) zeros.record({std::size_t(k), 0.0, 0.0, 0.1, false});
  const std::vector<double> eta(5, 0.1);
  CHECK_FALSE(detect_gradient_explosion(zeros, 1e3, eta));

  SamplerDiagnostics spike = zeros;
  spike.grad_norms[2] = 1e6;
  const std::vector<double> small(5, 1e-4);
  CHECK(detect_gradient_explosion(spike, 1e3, small));
  CHECK_FALSE(detect_gradient_explosion(spike, 1e3, std::vector<double>(5, 0.0)));
  spike.grad_norms[2] = std::numeric_limits<double>::quiet_NaN();
  CHECK(detect_gradient_explosion(spike, 1e3, eta));
  CHECK_THROWS_AS(detect_gradient_explosion(zeros, 1e3, std::vector<double>(3, 0.1)), InputError);
}

TEST_CASE("dense scenes explode more often than sparse ones") {
  const BaseModel model;
  const EnergyConfig cfg = weighted_energy();
  auto explosion_rate = [&](double density) {
    ScenarioSpec spec;
    spec.kind = ScenarioKind::urban_dense;
    spec.arena_side = 25.0;
    spec.horizon = 5;
    spec.density_target = density;
    int exploded = 0;
    const int seeds = 60;
    for (int k = 0; k < seeds; ++k) {
      spec.seed = static_cast<std::uint64_t>(k);
      const Scenario s = generate(spec);
      try {
        (void)sample(s, model, cfg, GuidanceSchedule{}, static_cast<std::uint64_t>(k));
      } catch (const GradientExplosion&) {
        ++exploded;
      }
    }
    return static_cast<double>(exploded) / seeds;
  };
  CHECK(explosion_rate(0.12) > explosion_rate(0.01));
}

TEST_CASE("langevin refinement") {
  const EnergyConfig cfg = weighted_energy();
  LangevinOptions det;
  det.deterministic = true;

  SUBCASE("a valid trajectory is left unchanged") {
    const auto x = testsupport::static_positions({{0, 0}, {10, 0}}, 5);
    Rng rng(1);
    const auto eta = harmonic_step_sizes(1e-3, 20);
    const SampleResult r = langevin_refine(x, cfg, eta, 20, rng, det);
    CHECK(r.trajectory == x);
    CHECK(r.diagnostics.final_energy == 0.0);
  }
  SUBCASE("overlapping agents separate") {
    const auto x = testsupport::static_positions({{0, 0}, {0.5, 0}}, 3);
    Rng rng(1);
    const std::vector<double> eta(50, 1e-4);
    const SampleResult r = langevin_refine(x, cfg, eta, 50, rng, det);
    for (std::size_t t = 0; t < 3; ++t) CHECK(dist(r.trajectory, 0, 1, t) > dist(x, 0, 1, t));
    CHECK(r.diagnostics.energies.size() == 50);
    CHECK(r.diagnostics.final_energy < r.diagnostics.energies.front());
  }
  SUBCASE("stochastic mode is reproducible and differs from deterministic mode") {
    const auto x = testsupport::static_positions({{0, 0}, {0.5, 0}}, 3);
    const std::vector<double> eta(10, 1e-4);
    Rng a(4), b(4), c(4);
    const auto ra = langevin_refine(x, cfg, eta, 10, a);
    const auto rb = langevin_refine(x, cfg, eta, 10, b);
    CHECK(ra.trajectory == rb.trajectory);
    CHECK_FALSE(ra.trajectory == langevin_refine(x, cfg, eta, 10, c, det).trajectory);
  }
  SUBCASE("argument checks") {
    const auto x = testsupport::static_positions({{0, 0}, {0.5, 0}});
    Rng rng(1);
    CHECK_THROWS_AS(langevin_refine(x, cfg, std::vector<double>(2, 1e-3), 3, rng), InputError);
    CHECK_THROWS_AS(langevin_refine(x, cfg, std::vector<double>{1e-3, 0.0}, 2, rng), InputError);
    CHECK_THROWS_AS(harmonic_step_sizes(0.0, 3), InputError);
  }
  SUBCASE("harmonic steps") {
    const auto eta = harmonic_step_sizes(0.6, 3);
    CHECK(eta[0] == doctest::Approx(0.6));
    CHECK(eta[2] == doctest::Approx(0.2));
  }
}

TEST_CASE("rejection sampling") {
  const BaseModel model;
  SUBCASE("attempt zero reuses the seed") {
    CHECK(rejection_attempt_seed(99, 0) == 99);
    CHECK(rejection_attempt_seed(99, 1) != 99);
  }
  SUBCASE("an easy scenario succeeds on the first attempt") {
    Scenario s;
    s.initial = {{0, 0, 1, 0, 0, 0}};
    s.horizon = 10;
    s.arena = {-10, -10, 10, 10};
    std::size_t first = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const RejectionResult r = rejection_sample(s, model, s.limits, 10, seed);
      CHECK(r.succeeded());
      first += r.attempts == 1;
      if (r.attempts == 1) CHECK(*r.trajectory == sample_unguided(s, model, seed));
    }
    CHECK(first == 50);
  }
  SUBCASE("a pinned overlapping pair exhausts the budget") {
    ModelConfig tight;
    tight.prior_scale = {1e-6, 1e-6, 1e-6};
    const BaseModel pinned(tight);
    const Scenario s = two_agents(0.1, 4);
    const RejectionResult r = rejection_sample(s, pinned, s.limits, 25, 3);
    CHECK_FALSE(r.succeeded());
    CHECK(r.attempts == 25);
    CHECK(r.last_draw.has_value());
  }
  SUBCASE("mean attempts match the geometric law") {
    ScenarioSpec spec;
    spec.kind = ScenarioKind::head_on;
    spec.n_agents = 2;
    spec.approach_speed = 10.0;
    spec.lateral_offset = 2.2;
    const Scenario s = generate(spec);
    int valid = 0;
    const int probes = 2000;
    for (int k = 0; k < probes; ++k) {
      valid += is_valid(sample_unguided(s, model, 100000 + static_cast<std::uint64_t>(k)), s.limits);
    }
    const double p = static_cast<double>(valid) / probes;
    REQUIRE(p > 0.1);
    REQUIRE(p < 0.9);
    double attempts = 0.0;
    const int runs = 1000;
    for (int k = 0; k < runs; ++k) {
      const auto r = rejection_sample(s, model, s.limits, 1000, static_cast<std::uint64_t>(k));
      attempts += static_cast<double>(r.attempts);
    }
    const double mean = attempts / runs;
    const double se = std::sqrt((1 - p) / (p * p) / runs);
    CHECK(std::abs(mean - 1.0 / p) < 4.0 * se + 0.05 / p);
  }
  CHECK_THROWS_AS(rejection_sample(two_agents(5.0), model, PhysicalLimits{}, 0, 1), InputError);
}

TEST_CASE("sampler option validation") {
  SamplerOptions opts;
  CHECK_NOTHROW(opts.validate());
  opts.c_crit = 0.0;
  CHECK_THROWS_AS(opts.validate(), InputError);
  GuidanceSchedule g;
  g.lambda0 = -1.0;
  CHECK_THROWS_AS(g.validate(), InputError);
}
