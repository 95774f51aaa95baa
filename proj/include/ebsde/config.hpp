#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "ebsde/blocks_estimator.hpp"
#include "ebsde/drivers.hpp"
#include "ebsde/experiments.hpp"
#include "ebsde/sde_sim.hpp"

namespace ebsde {

using Json = nlohmann::json;

/// Parses a JSON config file; ConfigError on a missing file or bad syntax.
Json load_config(const std::filesystem::path& path);

/// Applies "a.b.c=value". The value is parsed as JSON when possible and kept
/// as a string otherwise.
void apply_override(Json& config, const std::string& assignment);

/// Returns a copy with every default filled in, so that the result alone
/// determines a run. Notes about defaulted choices are appended to `notes`.
Json normalize_config(const Json& config, std::vector<std::string>* notes = nullptr);

// The readers below expect a normalized config.
DriverSpec driver_from_config(const Json& config);
ScenarioSpec scenario_from_config(const Json& config);
ThetaBox theta_box_from_config(const Json& config);
EstimatorOptions estimator_options_from_config(const Json& config);
ExperimentConfig experiment_from_config(const Json& config);

/// Gamma used to standardize estimates, or an empty matrix when the config
/// asks for the replication average of the plug-in estimate.
Matrix normality_gamma_from_config(const Json& config);

}  // namespace ebsde
