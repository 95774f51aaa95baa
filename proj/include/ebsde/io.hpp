#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "ebsde/blocks_estimator.hpp"
#include "ebsde/sde_sim.hpp"

namespace ebsde {

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Header `k,t,x_1..x_dx,y_1..y_dy`; values with 17 significant digits.
std::string observation_csv(const ObservationRecord& obs);

/// Reads a file written by observation_csv. The step is taken from the t
/// column and must be uniform. Throws ConfigError on malformed input.
ObservationRecord read_observation_csv(const std::filesystem::path& path);

nlohmann::json to_json(const EstimationResult& result);

}  // namespace ebsde
