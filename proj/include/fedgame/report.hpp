#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedgame/scenario.hpp"
#include "fedgame/server_opt.hpp"

namespace fedgame {

struct RunRequest {
  std::string mode;  // nash | haipo | uniform | sweep | oracle-suite
  ScenarioConfig config;
  std::optional<std::vector<double>> payment_override;  // nash mode, defaults to zeros
  std::string sweep_key;                                // sweep mode: numeric config field
  std::vector<double> sweep_values;
  int grid_points = 201;  // oracle cross-check resolution (oracle-suite)
  OptOptions options;
};

struct RunReport {
  nlohmann::ordered_json canonical;  // deterministic: byte-identical across reruns
  nlohmann::ordered_json runtime;    // wall-clock per stage, excluded from canonical
  std::string csv;                   // fixed per-client columns
  bool converged = true;
};

// Executes one request end to end. Throws ConfigError / IntegrityError;
// solver non-convergence is reported via RunReport::converged.
RunReport run(const RunRequest& req);

// Runs haipo and the uniform baseline on the same profile and reports them side
// by side with participation rank correlations against weight share and
// distance to the removed-client mixture.
nlohmann::ordered_json compare_modes(const ScenarioConfig& cfg, const OptOptions& opts);

// Serializes the full report (canonical plus runtime sections).
std::string report_to_string(const RunReport& rep);

// Spearman rank correlation with average ranks on ties.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace fedgame
