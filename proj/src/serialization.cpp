#include "physguide/serialization.hpp"

namespace physguide {

namespace {

template <typename T>
void read_if(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad value for '") + key + "': " + e.what());
  }
}

template <typename T>
T require(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw InputError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad value for '") + key + "': " + e.what());
  }
}

void require_object(const Json& j, const char* what) {
  if (!j.is_object()) throw InputError(std::string(what) + " must be a JSON object");
}

}  // namespace

Json to_json(const PhysicalLimits& limits) {
  return Json{{"d_safe", limits.d_safe}, {"v_max", limits.v_max}, {"a_max", limits.a_max}};
}

PhysicalLimits limits_from_json(const Json& j, PhysicalLimits base) {
  require_object(j, "limits");
  read_if(j, "d_safe", base.d_safe);
  read_if(j, "v_max", base.v_max);
  read_if(j, "a_max", base.a_max);
  base.validate();
  return base;
}

Json scenario_to_json(const Scenario& s) {
  Json agents = Json::array();
  for (const AgentState& a : s.initial) agents.push_back(Json::array({a.px, a.py, a.vx, a.vy, a.ax, a.ay}));
  return Json{{"kind", std::string(to_string(s.kind))},
              {"seed", s.seed},
              {"limits", to_json(s.limits)},
              {"dt", s.dt},
              {"horizon", s.horizon},
              {"arena", {{"min_x", s.arena.min_x}, {"min_y", s.arena.min_y}, {"max_x", s.arena.max_x},
                         {"max_y", s.arena.max_y}}},
              {"agents", std::move(agents)}};
}

Scenario scenario_from_json(const Json& j) {
  require_object(j, "scenario");
  Scenario s;
  s.kind = scenario_kind_from_string(require<std::string>(j, "kind"));
  s.seed = require<std::uint64_t>(j, "seed");
  s.limits = limits_from_json(require<Json>(j, "limits"), PhysicalLimits{});
  s.dt = require<double>(j, "dt");
  s.horizon = require<std::size_t>(j, "horizon");
  const Json arena = require<Json>(j, "arena");
  s.arena = {require<double>(arena, "min_x"), require<double>(arena, "min_y"), require<double>(arena, "max_x"),
             require<double>(arena, "max_y")};
  const Json agents = require<Json>(j, "agents");
  if (!agents.is_array()) throw InputError("'agents' must be an array");
  for (const Json& row : agents) {
    if (!row.is_array() || row.size() != kStateDim) throw InputError("each agent must be a 6-element array");
    try {
      s.initial.push_back({row[0].get<double>(), row[1].get<double>(), row[2].get<double>(), row[3].get<double>(),
                           row[4].get<double>(), row[5].get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("agent state is not numeric: ") + e.what());
    }
  }
  s.validate();
  return s;
}

std::string dump_scenario(const Scenario& scenario) { return scenario_to_json(scenario).dump(2) + "\n"; }

Scenario parse_scenario(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("scenario JSON does not parse: ") + e.what());
  }
  return scenario_from_json(j);
}

Json to_json(const EnergyConfig& cfg) {
  Json j{{"collision_variant", std::string(to_string(cfg.collision_variant))},
         {"k_c", cfg.k_c},
         {"sigma", cfg.sigma ? Json(*cfg.sigma) : Json(nullptr)},
         {"lambda_kin", cfg.lambda_kin},
         {"lambda_v", cfg.lambda_v},
         {"lambda_a", cfg.lambda_a},
         {"kinematic_term", std::string(to_string(cfg.kinematic_term))},
         {"weight_inverse_by_k_c", cfg.weight_inverse_by_k_c},
         {"soft_min_beta", cfg.soft_min_beta},
         {"d_min", cfg.d_min},
         {"tau_margin", cfg.tau_margin},
         {"gamma", cfg.gamma}};
  return j;
}

EnergyConfig energy_config_from_json(const Json& j, EnergyConfig base) {
  require_object(j, "energy");
  if (j.contains("collision_variant")) {
    base.collision_variant = collision_variant_from_string(require<std::string>(j, "collision_variant"));
  }
  read_if(j, "k_c", base.k_c);
  if (j.contains("sigma")) {
    if (j.at("sigma").is_null()) {
      base.sigma.reset();
    } else {
      base.sigma = require<double>(j, "sigma");
    }
  }
  read_if(j, "lambda_kin", base.lambda_kin);
  read_if(j, "lambda_v", base.lambda_v);
  read_if(j, "lambda_a", base.lambda_a);
  if (j.contains("kinematic_term")) {
    base.kinematic_term = kinematic_term_from_string(require<std::string>(j, "kinematic_term"));
  }
  read_if(j, "weight_inverse_by_k_c", base.weight_inverse_by_k_c);
  read_if(j, "soft_min_beta", base.soft_min_beta);
  read_if(j, "d_min", base.d_min);
  read_if(j, "tau_margin", base.tau_margin);
  read_if(j, "gamma", base.gamma);
  if (j.contains("limits")) base.limits = limits_from_json(j.at("limits"), base.limits);
  base.validate();
  return base;
}

Json to_json(const ModelConfig& cfg) {
  return Json{{"steps", cfg.steps},
              {"beta_min", cfg.beta_min},
              {"beta_max", cfg.beta_max},
              {"temperature", cfg.temperature},
              {"prior_scale", {{"pos", cfg.prior_scale.pos}, {"vel", cfg.prior_scale.vel},
                               {"acc", cfg.prior_scale.acc}}}};
}

ModelConfig model_config_from_json(const Json& j, ModelConfig base) {
  require_object(j, "model");
  read_if(j, "steps", base.steps);
  read_if(j, "beta_min", base.beta_min);
  read_if(j, "beta_max", base.beta_max);
  read_if(j, "temperature", base.temperature);
  if (j.contains("prior_scale")) {
    const Json& ps = j.at("prior_scale");
    require_object(ps, "prior_scale");
    read_if(ps, "pos", base.prior_scale.pos);
    read_if(ps, "vel", base.prior_scale.vel);
    read_if(ps, "acc", base.prior_scale.acc);
  }
  base.validate();
  return base;
}

Json sampler_to_json(const GuidanceSchedule& sched, const SamplerOptions& opts) {
  return Json{{"schedule_family", std::string(to_string(sched.family))},
              {"lambda0", sched.lambda0},
              {"exponent", sched.exponent},
              {"c_crit", opts.c_crit},
              {"clip_grad_norm", opts.clip_grad_norm ? Json(*opts.clip_grad_norm) : Json(nullptr)},
              {"max_attempts", opts.max_attempts},
              {"prune_pairs", opts.prune_pairs},
              {"r_interact", opts.graph.r_interact}};
}

void sampler_from_json(const Json& j, GuidanceSchedule& sched, SamplerOptions& opts) {
  require_object(j, "sampler");
  if (j.contains("schedule_family")) {
    sched.family = schedule_family_from_string(require<std::string>(j, "schedule_family"));
  }
  read_if(j, "lambda0", sched.lambda0);
  read_if(j, "exponent", sched.exponent);
  read_if(j, "c_crit", opts.c_crit);
  if (j.contains("clip_grad_norm")) {
    if (j.at("clip_grad_norm").is_null()) {
      opts.clip_grad_norm.reset();
    } else {
      opts.clip_grad_norm = require<double>(j, "clip_grad_norm");
    }
  }
  read_if(j, "max_attempts", opts.max_attempts);
  read_if(j, "prune_pairs", opts.prune_pairs);
  read_if(j, "r_interact", opts.graph.r_interact);
  sched.validate();
  opts.validate();
}

Json to_json(const MetricsConfig& cfg) {
  return Json{{"d_social", cfg.d_social},
              {"tc_window", cfg.tc_window},
              {"sigma_k", cfg.sigma_k ? Json(*cfg.sigma_k) : Json(nullptr)}};
}

MetricsConfig metrics_config_from_json(const Json& j, MetricsConfig base) {
  require_object(j, "metrics");
  read_if(j, "d_social", base.d_social);
  read_if(j, "tc_window", base.tc_window);
  if (j.contains("sigma_k")) {
    if (j.at("sigma_k").is_null()) {
      base.sigma_k.reset();
    } else {
      base.sigma_k = require<double>(j, "sigma_k");
    }
  }
  base.validate();
  return base;
}

Json to_json(const ScenarioSpec& spec) {
  return Json{{"kind", std::string(to_string(spec.kind))},
              {"n_agents", spec.n_agents},
              {"horizon", spec.horizon},
              {"dt", spec.dt},
              {"density_target", spec.density_target ? Json(*spec.density_target) : Json(nullptr)},
              {"arena_side", spec.arena_side},
              {"lateral_offset", spec.lateral_offset},
              {"approach_speed", spec.approach_speed ? Json(*spec.approach_speed) : Json(nullptr)},
              {"seed", spec.seed},
              {"limits", to_json(spec.limits)}};
}

ScenarioSpec scenario_spec_from_json(const Json& j, ScenarioSpec base) {
  require_object(j, "scenario spec");
  if (j.contains("kind")) base.kind = scenario_kind_from_string(require<std::string>(j, "kind"));
  read_if(j, "n_agents", base.n_agents);
  read_if(j, "horizon", base.horizon);
  read_if(j, "dt", base.dt);
  if (j.contains("density_target")) {
    if (j.at("density_target").is_null()) {
      base.density_target.reset();
    } else {
      base.density_target = require<double>(j, "density_target");
    }
  }
  read_if(j, "arena_side", base.arena_side);
  read_if(j, "lateral_offset", base.lateral_offset);
  if (j.contains("approach_speed")) {
    if (j.at("approach_speed").is_null()) {
      base.approach_speed.reset();
    } else {
      base.approach_speed = require<double>(j, "approach_speed");
    }
  }
  read_if(j, "seed", base.seed);
  if (j.contains("limits")) base.limits = limits_from_json(j.at("limits"), base.limits);
  base.validate();
  return base;
}

}  // namespace physguide
