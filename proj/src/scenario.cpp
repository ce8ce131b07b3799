#include "fedgame/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "fedgame/errors.hpp"
#include "fedgame/rng.hpp"

namespace fedgame {

void validate_config(const ScenarioConfig& cfg) {
  auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
  if (cfg.num_remaining < 1) fail("num_remaining must be >= 1");
  if (cfg.num_removed < 0) fail("num_removed must be >= 0");
  if (!(cfg.dirichlet_beta > 0.0) || !std::isfinite(cfg.dirichlet_beta))
    fail("dirichlet_beta must be positive");
  if (cfg.num_classes < 1) fail("num_classes must be >= 1");
  if (cfg.points_per_class_cap < 1) fail("points_per_class_cap must be >= 1");
  if (cfg.feature_dim < 1) fail("feature_dim must be >= 1");
  if (!(cfg.class_spread > 0.0) || !std::isfinite(cfg.class_spread))
    fail("class_spread must be positive");
  if (!(cfg.gamma >= 0.0) || !std::isfinite(cfg.gamma)) fail("gamma must be >= 0");
  if (!(cfg.budget >= 0.0) || !std::isfinite(cfg.budget)) fail("budget must be >= 0");
  if (!(cfg.lambda_v > 0.0) || !std::isfinite(cfg.lambda_v)) fail("lambda_v must be positive");
  if (!(cfg.lambda_s > 0.0) || !std::isfinite(cfg.lambda_s)) fail("lambda_s must be positive");
  if (!(cfg.lambda_q > 0.0) || !std::isfinite(cfg.lambda_q)) fail("lambda_q must be positive");
  if (!(cfg.bound_constant > 0.0) || !std::isfinite(cfg.bound_constant))
    fail("bound_constant must be positive");
}

ScenarioConfig parse_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  ScenarioConfig cfg;
  bool saw_seed = false;
  auto get_int = [](const nlohmann::json& v, const char* name) {
    if (!v.is_number_integer()) throw ConfigError(std::string("config: ") + name + " must be an integer");
    return v.get<int>();
  };
  auto get_real = [](const nlohmann::json& v, const char* name) {
    if (!v.is_number()) throw ConfigError(std::string("config: ") + name + " must be a number");
    return v.get<double>();
  };
  for (const auto& [key, val] : j.items()) {
    if (key == "num_remaining") cfg.num_remaining = get_int(val, key.c_str());
    else if (key == "num_removed") cfg.num_removed = get_int(val, key.c_str());
    else if (key == "dirichlet_beta") cfg.dirichlet_beta = get_real(val, key.c_str());
    else if (key == "num_classes") cfg.num_classes = get_int(val, key.c_str());
    else if (key == "points_per_class_cap") cfg.points_per_class_cap = get_int(val, key.c_str());
    else if (key == "feature_dim") cfg.feature_dim = get_int(val, key.c_str());
    else if (key == "class_spread") cfg.class_spread = get_real(val, key.c_str());
    else if (key == "gamma") cfg.gamma = get_real(val, key.c_str());
    else if (key == "budget") cfg.budget = get_real(val, key.c_str());
    else if (key == "lambda_v") cfg.lambda_v = get_real(val, key.c_str());
    else if (key == "lambda_s") cfg.lambda_s = get_real(val, key.c_str());
    else if (key == "lambda_q") cfg.lambda_q = get_real(val, key.c_str());
    else if (key == "bound_constant") cfg.bound_constant = get_real(val, key.c_str());
    else if (key == "seed") {
      if (!val.is_number_unsigned() && !val.is_number_integer())
        throw ConfigError("config: seed must be a nonnegative integer");
      if (val.is_number_integer() && !val.is_number_unsigned() && val.get<long long>() < 0)
        throw ConfigError("config: seed must be a nonnegative integer");
      cfg.seed = val.get<std::uint64_t>();
      saw_seed = true;
    } else {
      throw ConfigError("config: unknown key \"" + key + "\"");
    }
  }
  if (!saw_seed) throw ConfigError("config: seed is required");
  validate_config(cfg);
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open \"" + path + "\"");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

namespace {

// Integer apportionment of n points across classes by largest remainder, then
// clipped at the per-class cap. Guarantees at least one point.
std::vector<int> class_counts(const std::vector<double>& props, int n, int cap) {
  const int L = static_cast<int>(props.size());
  std::vector<int> cnt(L, 0);
  std::vector<double> frac(L);
  int assigned = 0;
  for (int l = 0; l < L; ++l) {
    double raw = props[l] * n;
    cnt[l] = static_cast<int>(std::floor(raw));
    frac[l] = raw - cnt[l];
    assigned += cnt[l];
  }
  std::vector<int> order(L);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return frac[a] > frac[b]; });
  for (int r = 0; r < n - assigned; ++r) cnt[order[r % L]] += 1;
  for (int l = 0; l < L; ++l) cnt[l] = std::min(cnt[l], cap);
  if (std::accumulate(cnt.begin(), cnt.end(), 0) == 0) {
    int top = static_cast<int>(std::max_element(props.begin(), props.end()) - props.begin());
    cnt[top] = 1;
  }
  return cnt;
}

}  // namespace

Scenario generate_scenario(const ScenarioConfig& cfg) {
  validate_config(cfg);
  Scenario sc;
  sc.config = cfg;
  const int total = cfg.num_remaining + cfg.num_removed;
  const int L = cfg.num_classes;
  const int d = cfg.feature_dim;
  Rng rng(cfg.seed);

  // Draw order is part of the determinism contract: label mixtures per client,
  // then volume shares, then features in (client, class, point, coordinate) order.
  std::vector<std::vector<double>> label_props;
  label_props.reserve(total);
  for (int i = 0; i < total; ++i) label_props.push_back(rng.dirichlet(cfg.dirichlet_beta, L));
  std::vector<double> shares = rng.dirichlet(cfg.dirichlet_beta, total);

  const int point_target = total * L * cfg.points_per_class_cap / 2;
  std::vector<SamplePoint> centers(L, SamplePoint(d, 0.0));
  for (int l = 0; l < L; ++l) {
    double ang = 2.0 * std::numbers::pi * l / L;
    centers[l][0] = std::cos(ang);
    if (d > 1) centers[l][1] = std::sin(ang);
  }

  sc.clients.reserve(total);
  std::vector<SamplePoint> pool;
  for (int i = 0; i < total; ++i) {
    int n_i = std::max(1, static_cast<int>(std::floor(shares[i] * point_target)));
    std::vector<int> cnt = class_counts(label_props[i], n_i, cfg.points_per_class_cap);
    ClientSpec spec;
    spec.index = i;
    spec.removed = i < cfg.num_removed;
    std::vector<SamplePoint> pts;
    for (int l = 0; l < L; ++l) {
      for (int t = 0; t < cnt[l]; ++t) {
        SamplePoint p(d);
        for (int c = 0; c < d; ++c) p[c] = centers[l][c] + cfg.class_spread * rng.normal();
        pts.push_back(p);
      }
    }
    spec.volume = static_cast<int>(pts.size());
    pool.insert(pool.end(), pts.begin(), pts.end());
    spec.dataset = EmpiricalDistribution::uniform(std::move(pts));
    spec.dataset.validate();
    sc.clients.push_back(std::move(spec));
  }

  sc.kernel = KernelSpec::rbf(median_heuristic(pool));
  return sc;
}

GameProfile assemble_profile(const Scenario& sc) {
  const ScenarioConfig& cfg = sc.config;
  validate_config(cfg);
  const int total = static_cast<int>(sc.clients.size());
  if (total != cfg.num_remaining + cfg.num_removed)
    throw ConfigError("scenario client count does not match config");

  std::vector<EmpiricalDistribution> dists;
  dists.reserve(total);
  double n_all = 0.0;
  double n_removed = 0.0;
  double n_remaining = 0.0;
  for (const auto& c : sc.clients) {
    dists.push_back(c.dataset);
    n_all += c.volume;
    (c.removed ? n_removed : n_remaining) += c.volume;
  }

  GameProfile pr;
  pr.table = build_table(dists, sc.kernel);
  validate_table(pr.table);
  pr.lambda_hat_v = cfg.lambda_v * cfg.bound_constant;
  pr.lambda_hat_s = cfg.lambda_s * cfg.bound_constant;
  pr.lambda_hat_q = cfg.lambda_q * cfg.bound_constant;
  pr.bound_constant = cfg.bound_constant;
  pr.budget = cfg.budget;
  pr.gamma = cfg.gamma > 0.0 ? cfg.gamma : 10.0 / n_all;

  pr.mu_n.coeffs.assign(total, 0.0);
  pr.mu_o.coeffs.assign(total, 0.0);
  pr.mu_r.coeffs.assign(total, 0.0);
  for (const auto& c : sc.clients) {
    pr.mu_o.coeffs[c.index] = c.volume / n_all;
    if (c.removed) {
      pr.mu_r.coeffs[c.index] = c.volume / n_removed;
    } else {
      ClientProfile cp;
      cp.alpha = c.volume / n_remaining;
      cp.cost = pr.gamma * c.volume;
      cp.delta = 0.0;
      cp.embedding_index = c.index;
      pr.mu_n.coeffs[c.index] = cp.alpha;
      pr.clients.push_back(cp);
    }
  }
  return pr;
}

}  // namespace fedgame
