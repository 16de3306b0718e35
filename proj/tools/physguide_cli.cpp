#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "physguide/harness.hpp"

namespace fs = std::filesystem;
using namespace physguide;

namespace {

// Exit codes; every failure also prints {"error": {"type", "message"}} on stderr.
enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kInfeasible = 3,
  kExplosion = 4,
  kIo = 5,
  kCheckFailed = 6,
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckFailed : public std::runtime_error {
 public:
  CheckFailed(const std::string& what, Json detail) : std::runtime_error(what), detail_(std::move(detail)) {}
  const Json& detail() const { return detail_; }

 private:
  Json detail_;
};

int fail(ExitCode code, const std::string& type, const std::string& message, const Json& detail = nullptr) {
  Json err{{"type", type}, {"message", message}};
  if (!detail.is_null()) err["detail"] = detail;
  std::cerr << Json{{"error", err}}.dump() << '\n';
  return code;
}

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::optional<std::size_t> workers;
};

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return Json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("'" + path + "' is not valid JSON: " + e.what());
  }
}

ExperimentConfig load_config(const Globals& g) {
  ExperimentConfig cfg;
  if (!g.config_path.empty()) cfg = experiment_config_from_json(read_json_file(g.config_path));
  if (g.seed) {
    cfg.base_seed = *g.seed;
    cfg.seeds.clear();
  }
  if (g.workers) cfg.workers = *g.workers;
  cfg.validate();
  return cfg;
}

class Outputs {
 public:
  explicit Outputs(const std::string& dir) : dir_(dir) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  }

  template <typename Writer>
  void write(const std::string& name, Writer&& writer) {
    const fs::path path = dir_ / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    writer(out);
    out.flush();
    if (!out) throw IoError("write to '" + path.string() + "' failed");
    files_.push_back(path.string());
  }

  void write_json(const std::string& name, const Json& j) {
    write(name, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
  }

  Json files() const { return files_; }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

void print_ok(const std::string& command, const Outputs& outputs, Json extra = Json::object()) {
  Json j{{"status", "ok"}, {"command", command}, {"outputs", outputs.files()}};
  for (auto& [k, v] : extra.items()) j[k] = v;
  std::cout << j.dump() << '\n';
}

void write_comparison(Outputs& out, const std::string& stem, const ComparisonResult& r, const ExperimentConfig& cfg) {
  out.write(stem + ".csv", [&](std::ostream& o) { write_comparison_csv(r, o); });
  out.write(stem + "_validity_over_time.csv", [&](std::ostream& o) { write_validity_over_time_csv(r, o); });
  out.write(stem + "_violations.csv", [&](std::ostream& o) { write_violation_csv(r, o); });
  out.write_json(stem + ".json", comparison_summary(r, cfg));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Physics-guided multi-agent trajectory sampling and benchmarks"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config_path, "Experiment config JSON file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Base seed (overrides the config seed list)");
  app.add_option("--out", g.out_dir, "Output directory")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber);

  auto* gen = app.add_subcommand("generate-scenario", "Generate one scenario and write it as JSON");
  std::optional<std::string> gen_kind;
  std::optional<std::size_t> gen_agents, gen_horizon;
  std::optional<double> gen_density;
  gen->add_option("--kind", gen_kind, "intersection, highway_merge, roundabout, urban_dense or head_on");
  gen->add_option("--agents", gen_agents, "Number of agents");
  gen->add_option("--horizon", gen_horizon, "Timesteps");
  gen->add_option("--density", gen_density, "urban_dense target density, agents/m^2");

  auto* smp = app.add_subcommand("sample", "Draw one sample and write the trajectory and its metrics");
  std::string smp_scenario;
  std::optional<std::string> smp_method, smp_schedule;
  std::optional<double> smp_lambda0;
  smp->add_option("--scenario", smp_scenario, "Scenario JSON file (default: generated from the config)")
      ->check(CLI::ExistingFile);
  smp->add_option("--method", smp_method, "unguided, guided, rejection or langevin (default: first config method)");
  smp->add_option("--schedule", smp_schedule, "Guidance schedule family for the guided method");
  smp->add_option("--lambda0", smp_lambda0, "Guidance strength for the guided method");

  auto* cmp = app.add_subcommand("compare", "Paired comparison of the configured methods");
  std::optional<std::size_t> cmp_seeds;
  cmp->add_option("--seeds", cmp_seeds, "Number of seeds")->check(CLI::PositiveNumber);

  auto* abl = app.add_subcommand("ablate-schedule", "Compare the four guidance schedule families");
  std::optional<std::size_t> abl_seeds;
  abl->add_option("--seeds", abl_seeds, "Number of seeds")->check(CLI::PositiveNumber);

  auto* scl = app.add_subcommand("scaling", "Time brute-force and pruned energy evaluation against N");
  std::vector<std::size_t> scl_agents{16, 32, 64, 128};
  ScalingOptions scl_opts;
  scl->add_option("--agents", scl_agents, "Agent counts")->capture_default_str();
  scl->add_option("--repetitions", scl_opts.repetitions, "Timed batches per point")->capture_default_str();
  scl->add_option("--density", scl_opts.density, "Sparse placement density, agents/m^2")->capture_default_str();

  auto* fsw = app.add_subcommand("failure-sweep", "Validity and explosion rate against agent density");
  std::vector<double> fsw_densities{0.02, 0.04, 0.06, 0.09, 0.12};
  std::optional<std::size_t> fsw_seeds;
  fsw->add_option("--densities", fsw_densities, "Densities, agents/m^2")->capture_default_str();
  fsw->add_option("--seeds", fsw_seeds, "Seeds per density")->check(CLI::PositiveNumber);

  auto* grc = app.add_subcommand("gradcheck", "Finite-difference check of the energy gradient");
  std::size_t grc_trials = 1000;
  GradcheckOptions grc_opts;
  grc->add_option("--trials", grc_trials, "Random instances")->capture_default_str();
  grc->add_option("--tolerance", grc_opts.tolerance, "Maximum relative error")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, "usage_error", e.what());
  }

  try {
    ExperimentConfig cfg = load_config(g);
    Outputs out(g.out_dir);

    if (gen->parsed()) {
      ScenarioSpec spec = cfg.scenarios.front();
      if (gen_kind) spec.kind = scenario_kind_from_string(*gen_kind);
      if (gen_agents) spec.n_agents = *gen_agents;
      if (gen_horizon) spec.horizon = *gen_horizon;
      if (gen_density) spec.density_target = *gen_density;
      if (g.seed) spec.seed = *g.seed;
      spec.validate();
      const Scenario scenario = generate(spec);
      out.write("scenario.json", [&](std::ostream& o) { o << dump_scenario(scenario); });
      print_ok("generate-scenario", out,
               {{"kind", std::string(to_string(scenario.kind))}, {"agents", scenario.agents()},
                {"density", density(scenario)}});
    } else if (smp->parsed()) {
      MethodSpec method = cfg.methods.front();
      if (smp_method) method.kind = method_kind_from_string(*smp_method);
      if (smp_schedule) method.schedule.family = schedule_family_from_string(*smp_schedule);
      if (smp_lambda0) method.schedule.lambda0 = *smp_lambda0;
      method.schedule.validate();
      const std::uint64_t seed = cfg.seed_list().front();
      const Scenario scenario = smp_scenario.empty() ? scenario_instance(cfg.scenarios.front(), 0, seed)
                                                     : scenario_from_json(read_json_file(smp_scenario));
      const RunRecord rec = run_single(method, scenario, seed, cfg);
      if (rec.trajectory) {
        out.write("trajectory.csv", [&](std::ostream& o) { write_trajectory_csv(*rec.trajectory, o); });
      }
      out.write_json("sample.json", Json{{"record", to_json(rec)}, {"scenario", scenario_to_json(scenario)}});
      if (rec.status == RunStatus::exploded) {
        return fail(kExplosion, "gradient_explosion", "guided chain aborted by the gradient explosion check",
                    to_json(rec));
      }
      print_ok("sample", out, {{"status_detail", std::string(to_string(rec.status))}, {"valid", rec.valid}});
    } else if (cmp->parsed()) {
      if (cmp_seeds) cfg.seed_count = *cmp_seeds, cfg.seeds.clear();
      const ComparisonResult r = run_comparison(cfg);
      write_comparison(out, "comparison", r, cfg);
      print_ok("compare", out);
    } else if (abl->parsed()) {
      if (abl_seeds) cfg.seed_count = *abl_seeds, cfg.seeds.clear();
      const ComparisonResult r = run_schedule_ablation(cfg);
      write_comparison(out, "ablation", r, cfg);
      print_ok("ablate-schedule", out);
    } else if (scl->parsed()) {
      // Timing runs are single-threaded regardless of --workers.
      cfg.workers = 1;
      const ScalingResult r = run_scaling_study(scl_agents, cfg, scl_opts);
      out.write("scaling.csv", [&](std::ostream& o) { write_scaling_csv(r, o); });
      out.write_json("scaling.json", scaling_summary(r));
      print_ok("scaling", out);
    } else if (fsw->parsed()) {
      if (fsw_seeds) cfg.seed_count = *fsw_seeds, cfg.seeds.clear();
      const std::vector<FailureRow> rows = run_failure_sweep(fsw_densities, cfg);
      out.write("failure.csv", [&](std::ostream& o) { write_failure_csv(rows, o); });
      out.write_json("failure.json", failure_summary(rows));
      print_ok("failure-sweep", out);
    } else if (grc->parsed()) {
      EnergyConfig energy = cfg.energy;
      energy.limits = cfg.scenarios.front().limits;
      const GradcheckReport report = run_gradcheck(grc_trials, energy, cfg.base_seed, grc_opts);
      out.write_json("gradcheck.json", to_json(report));
      if (!report.passed()) throw CheckFailed("gradient check exceeded the tolerance", to_json(report));
      print_ok("gradcheck", out, {{"max_rel_error", report.max_rel_error}});
    }
  } catch (const CheckFailed& e) {
    return fail(kCheckFailed, "check_failed", e.what(), e.detail());
  } catch (const InputError& e) {
    return fail(kUsage, "input_error", e.what());
  } catch (const IndexError& e) {
    return fail(kUsage, "index_error", e.what());
  } catch (const InfeasibleScenario& e) {
    return fail(kInfeasible, "infeasible_scenario", e.what());
  } catch (const GradientExplosion& e) {
    return fail(kExplosion, "gradient_explosion", e.what());
  } catch (const IoError& e) {
    return fail(kIo, "io_error", e.what());
  } catch (const std::exception& e) {
    return fail(kInternal, "internal_error", e.what());
  }
  return kOk;
}
