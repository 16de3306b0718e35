#pragma once

#include <string>

#include <json.hpp>

#include "physguide/base_diffusion.hpp"
#include "physguide/core.hpp"
#include "physguide/energy.hpp"
#include "physguide/guided_sampler.hpp"
#include "physguide/metrics.hpp"
#include "physguide/scenarios.hpp"

namespace physguide {

using Json = nlohmann::ordered_json;

/*
 * Scenario file layout (field names are part of the interchange format):
 *
 *   {"kind": "intersection", "seed": 7,
 *    "limits": {"d_safe": 2.0, "v_max": 30.0, "a_max": 8.0},
 *    "dt": 0.1, "horizon": 30,
 *    "arena": {"min_x": ..., "min_y": ..., "max_x": ..., "max_y": ...},
 *    "agents": [[px, py, vx, vy, ax, ay], ...]}
 */
Json scenario_to_json(const Scenario& scenario);
Scenario scenario_from_json(const Json& j);

/// Two-space indented dump with a trailing newline; stable across read/write cycles.
std::string dump_scenario(const Scenario& scenario);
Scenario parse_scenario(const std::string& text);

// Config sections. Readers start from defaults and override the fields present.
Json to_json(const PhysicalLimits& limits);
PhysicalLimits limits_from_json(const Json& j, PhysicalLimits base = {});

Json to_json(const EnergyConfig& cfg);
EnergyConfig energy_config_from_json(const Json& j, EnergyConfig base = {});

Json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const Json& j, ModelConfig base = {});

/// Sampler section: schedule_family, lambda0, exponent, c_crit, clip_grad_norm, max_attempts.
Json sampler_to_json(const GuidanceSchedule& sched, const SamplerOptions& opts);
void sampler_from_json(const Json& j, GuidanceSchedule& sched, SamplerOptions& opts);

Json to_json(const MetricsConfig& cfg);
MetricsConfig metrics_config_from_json(const Json& j, MetricsConfig base = {});

Json to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_spec_from_json(const Json& j, ScenarioSpec base = {});

}  // namespace physguide
