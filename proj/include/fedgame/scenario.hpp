#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedgame/client_game.hpp"
#include "fedgame/embedding.hpp"

namespace fedgame {

// Generation knobs. JSON scenario files use exactly these field names as
// top-level keys; unknown keys are rejected and seed is mandatory.
struct ScenarioConfig {
  int num_remaining = 5;
  int num_removed = 2;
  double dirichlet_beta = 0.5;
  int num_classes = 4;
  int points_per_class_cap = 20;
  int feature_dim = 2;
  double class_spread = 0.3;
  double gamma = 0.0;  // per-point cost; 0 means derive 10 / n_O from the data volume
  double budget = 1.0;
  double lambda_v = 1.0;
  double lambda_s = 1.0;
  double lambda_q = 1.0;
  double bound_constant = 1.0;
  std::uint64_t seed = 0;
};

// Throws ConfigError on violations: num_remaining >= 1, num_removed >= 0,
// dirichlet_beta > 0, all lambda > 0, budget >= 0, gamma >= 0, class counts and
// dims >= 1, class_spread > 0, bound_constant > 0, and finite reals throughout.
void validate_config(const ScenarioConfig& cfg);

// Parses and validates a scenario JSON file (or a raw JSON string).
ScenarioConfig load_config(const std::string& path);
ScenarioConfig parse_config(const std::string& json_text);

struct ClientSpec {
  int index = 0;
  EmpiricalDistribution dataset;
  int volume = 0;      // number of points
  bool removed = false;
};

struct Scenario {
  std::vector<ClientSpec> clients;  // removed clients occupy the leading indices
  KernelSpec kernel;                // Rbf with median-heuristic bandwidth
  ScenarioConfig config;
};

// Dirichlet label mixtures and data volumes, class means on the unit circle of
// the first two feature dims, Gaussian spread around them. Per-client volumes
// floor at one point. Deterministic in config.seed.
Scenario generate_scenario(const ScenarioConfig& cfg);

// Builds the embedding table over every client and wires up weights, costs and
// reference mixtures. Client k's cost is gamma_eff * volume_k with gamma_eff =
// config.gamma when positive, else 10 / n_O.
GameProfile assemble_profile(const Scenario& sc);

}  // namespace fedgame
