#include "fedgame/report.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fedgame/errors.hpp"
#include "fedgame/oracles.hpp"

namespace fedgame {

namespace {

using nlohmann::ordered_json;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw IntegrityError("number formatting failed");
  return std::string(buf, ptr);
}

ordered_json config_echo(const ScenarioConfig& c) {
  ordered_json j;
  j["num_remaining"] = c.num_remaining;
  j["num_removed"] = c.num_removed;
  j["dirichlet_beta"] = c.dirichlet_beta;
  j["num_classes"] = c.num_classes;
  j["points_per_class_cap"] = c.points_per_class_cap;
  j["feature_dim"] = c.feature_dim;
  j["class_spread"] = c.class_spread;
  j["gamma"] = c.gamma;
  j["budget"] = c.budget;
  j["lambda_v"] = c.lambda_v;
  j["lambda_s"] = c.lambda_s;
  j["lambda_q"] = c.lambda_q;
  j["bound_constant"] = c.bound_constant;
  j["seed"] = c.seed;
  return j;
}

ordered_json scenario_digest(const Scenario& sc) {
  ordered_json j;
  j["kernel_sigma"] = sc.kernel.sigma;
  j["n_total"] = static_cast<int>(sc.clients.size());
  j["n_removed"] = sc.config.num_removed;
  j["n_remaining"] = sc.config.num_remaining;
  ordered_json arr = ordered_json::array();
  for (const auto& cl : sc.clients) {
    ordered_json e;
    e["index"] = cl.index;
    e["volume"] = cl.volume;
    e["removed"] = cl.removed;
    arr.push_back(std::move(e));
  }
  j["clients"] = std::move(arr);
  return j;
}

double removed_distance(const GameProfile& pr, int k, bool any_removed) {
  if (!any_removed) return 0.0;
  WeightedEmbedding mu_k = unit_embedding(pr.table.bases, pr.clients[k].embedding_index);
  return std::sqrt(dist_sq(pr.table, mu_k, pr.mu_r));
}

std::string build_csv(const GameProfile& pr, bool any_removed, std::span<const double> p,
                      std::span<const double> x) {
  MetricsReport mb = metric_bounds(pr, x);
  std::string out = "client_id,alpha,cost,het_to_removed,payment,participation,q_bound\n";
  for (int k = 0; k < pr.n_clients(); ++k) {
    out += std::to_string(pr.clients[k].embedding_index);
    out += ',';
    out += fmt(pr.clients[k].alpha);
    out += ',';
    out += fmt(pr.clients[k].cost);
    out += ',';
    out += fmt(removed_distance(pr, k, any_removed));
    out += ',';
    out += fmt(p[k]);
    out += ',';
    out += fmt(x[k]);
    out += ',';
    out += fmt(mb.quality_bounds[k]);
    out += '\n';
  }
  return out;
}

ordered_json metrics_json(const GameProfile& pr, std::span<const double> x) {
  MetricsReport mb = metric_bounds(pr, x);
  ordered_json j;
  j["verification_bound"] = mb.verification_bound;
  j["forgetting_bound"] = mb.forgetting_bound;
  j["quality_bounds"] = mb.quality_bounds;
  return j;
}

ordered_json trace_json(const std::vector<PaymentIterate>& trace) {
  ordered_json arr = ordered_json::array();
  for (const auto& it : trace) {
    ordered_json e;
    e["payment"] = it.p;
    e["true_utility"] = it.true_utility;
    arr.push_back(std::move(e));
  }
  return arr;
}

ordered_json haipo_json(const GameProfile& pr, const HaipoResult& r) {
  ordered_json j;
  j["payment"] = r.p;
  j["participation"] = r.x;
  j["server_utility"] = r.server_utility;
  j["u_server"] = r.u_server_value;
  j["spend"] = r.spend;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["caps"] = r.caps;
  j["trace"] = trace_json(r.trace);
  j["metrics"] = metrics_json(pr, r.x);
  return j;
}

std::vector<double> client_alphas(const GameProfile& pr) {
  std::vector<double> a(pr.n_clients());
  for (int k = 0; k < pr.n_clients(); ++k) a[k] = pr.clients[k].alpha;
  return a;
}

std::vector<double> client_removed_dists(const GameProfile& pr, bool any_removed) {
  std::vector<double> d(pr.n_clients());
  for (int k = 0; k < pr.n_clients(); ++k) d[k] = removed_distance(pr, k, any_removed);
  return d;
}

void apply_sweep_value(ScenarioConfig& cfg, const std::string& key, double v) {
  if (key == "budget")
    cfg.budget = v;
  else if (key == "gamma")
    cfg.gamma = v;
  else if (key == "lambda_v")
    cfg.lambda_v = v;
  else if (key == "lambda_s")
    cfg.lambda_s = v;
  else if (key == "lambda_q")
    cfg.lambda_q = v;
  else if (key == "dirichlet_beta")
    cfg.dirichlet_beta = v;
  else if (key == "class_spread")
    cfg.class_spread = v;
  else if (key == "bound_constant")
    cfg.bound_constant = v;
  else
    throw ConfigError(
        "sweep key must be one of budget, gamma, lambda_v, lambda_s, lambda_q, "
        "dirichlet_beta, class_spread, bound_constant");
}

ordered_json oracle_suite(const GameProfile& pr, const RunRequest& req, bool& all_passed) {
  const int n = pr.n_clients();
  ordered_json checks = ordered_json::array();
  all_passed = true;

  {
    // Closed-form best response against the dense scan, several payments per
    // client around its cost.
    std::vector<double> ones(n, 1.0);
    double worst = 0.0;
    for (int k = 0; k < n; ++k) {
      double c = pr.clients[k].cost;
      Thresholds th = thresholds(pr, ones, k);
      std::vector<double> pays;
      for (int j = 0; j <= 6; ++j) pays.push_back(0.25 * j * c);
      if (th.upper > th.lower)
        for (double t : {0.25, 0.5, 0.75})
          pays.push_back(th.lower + t * (th.upper - th.lower));
      for (double p : pays) {
        if (p < 0.0) continue;
        double a = best_response(pr, p, ones, k);
        double b = grid_best_response(pr, p, ones, k, 2001);
        worst = std::max(worst, std::abs(a - b));
      }
    }
    bool ok = worst <= 1e-3;
    ordered_json e;
    e["name"] = "best_response_vs_grid";
    e["max_gap"] = worst;
    e["tolerance"] = 1e-3;
    e["passed"] = ok;
    checks.push_back(std::move(e));
    all_passed = all_passed && ok;
  }

  if (n <= 3) {
    // Equilibrium solver against the joint grid at half-cost payments.
    std::vector<double> p(n);
    for (int k = 0; k < n; ++k) p[k] = 0.5 * pr.clients[k].cost;
    EquilibriumResult eq = nash_solve(pr, p, req.options.nash);
    GridNashResult gr = grid_nash(pr, p, 101);
    double gap = 0.0;
    for (int k = 0; k < n; ++k) gap = std::max(gap, std::abs(eq.x[k] - gr.x[k]));
    bool ok = eq.converged && gap <= 0.021;
    ordered_json e;
    e["name"] = "nash_vs_grid";
    e["solver_converged"] = eq.converged;
    e["max_gap"] = gap;
    e["tolerance"] = 0.021;
    e["grid_residual_gain"] = gr.total_gain;
    e["passed"] = ok;
    checks.push_back(std::move(e));
    all_passed = all_passed && ok;
  }

  {
    // Likelihood-difference bound on a fixed small lattice domain.
    std::vector<SamplePoint> atoms;
    for (int i = 0; i < 8; ++i) atoms.push_back({0.25 * i, 0.1 * ((i * 3) % 5)});
    DiscreteDomain dom = DiscreteDomain::make(std::move(atoms), KernelSpec::rbf(0.7));
    std::vector<double> t1(8), t2(8);
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < 8; ++i) {
      t1[i] = 1.0;
      t2[i] = static_cast<double>(i + 1);
      s1 += t1[i];
      s2 += t2[i];
    }
    for (int i = 0; i < 8; ++i) {
      t1[i] /= s1;
      t2[i] /= s2;
    }
    BoundCheck chk = lemma1_check(dom, t1, t2);
    bool ok = chk.holds && chk.fits_converged;
    ordered_json e;
    e["name"] = "likelihood_bound";
    e["lhs"] = chk.lhs;
    e["rhs"] = chk.rhs;
    e["fits_converged"] = chk.fits_converged;
    e["passed"] = ok;
    checks.push_back(std::move(e));
    all_passed = all_passed && ok;
  }

  if (n <= 2) {
    // Payment search against the exhaustive payment grid, smoke tolerance.
    std::vector<double> ones(n, 1.0);
    std::vector<double> caps(n);
    for (int k = 0; k < n; ++k)
      caps[k] = budget_bisection(pr, k, budget_share(pr, k), ones, req.options);
    int g = std::clamp(req.grid_points, 2, 41);
    GridPaymentResult gr = grid_payment_search(pr, caps, g, req.options.nash);
    HaipoResult h = haipo(pr, req.options);
    double slack = 0.05 * (1.0 + std::abs(gr.server_utility));
    bool ok = h.converged && h.server_utility >= gr.server_utility - slack;
    ordered_json e;
    e["name"] = "haipo_vs_payment_grid";
    e["haipo_utility"] = h.server_utility;
    e["grid_utility"] = gr.server_utility;
    e["slack"] = slack;
    e["grid_points"] = g;
    e["passed"] = ok;
    checks.push_back(std::move(e));
    all_passed = all_passed && ok;
  }

  ordered_json j;
  j["checks"] = std::move(checks);
  j["all_passed"] = all_passed;
  return j;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("rank inputs differ in length");
  const int n = static_cast<int>(a.size());
  if (n < 2) return 0.0;
  auto ranks = [n](std::span<const double> v) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int i, int j) { return v[i] < v[j]; });
    std::vector<double> r(n);
    int i = 0;
    while (i < n) {
      int j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      double avg = 0.5 * (i + j) + 1.0;  // average rank over the tie block
      for (int t = i; t <= j; ++t) r[idx[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  std::vector<double> ra = ranks(a), rb = ranks(b);
  double ma = 0.0, mb = 0.0;
  for (int i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double num = 0.0, da = 0.0, db = 0.0;
  for (int i = 0; i < n; ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  if (da <= 0.0 || db <= 0.0) return 0.0;  // constant input: correlation undefined
  return num / std::sqrt(da * db);
}

nlohmann::ordered_json compare_modes(const ScenarioConfig& cfg, const OptOptions& opts) {
  Scenario sc = generate_scenario(cfg);
  GameProfile pr = assemble_profile(sc);
  const bool any_removed = cfg.num_removed > 0;
  HaipoResult h = haipo(pr, opts);
  HaipoResult u = uniform_baseline(pr, opts);
  ordered_json j;
  j["haipo"] = haipo_json(pr, h);
  j["uniform"] = haipo_json(pr, u);
  j["delta_utility"] = h.server_utility - u.server_utility;
  j["spearman_participation_alpha"] = spearman(h.x, client_alphas(pr));
  j["spearman_participation_removed_dist"] =
      spearman(h.x, client_removed_dists(pr, any_removed));
  return j;
}

RunReport run(const RunRequest& req) {
  const std::string& mode = req.mode;
  const bool known = mode == "nash" || mode == "haipo" || mode == "uniform" ||
                     mode == "sweep" || mode == "oracle-suite";
  if (!known) throw ConfigError("unknown mode \"" + mode + "\"");
  validate_config(req.config);
  if (req.payment_override && mode != "nash")
    throw ConfigError("payment override applies to nash mode only");
  if (mode == "sweep") {
    if (req.sweep_values.empty()) throw ConfigError("sweep mode needs sweep values");
    ScenarioConfig probe = req.config;
    apply_sweep_value(probe, req.sweep_key, req.sweep_values.front());
  } else if (!req.sweep_key.empty() || !req.sweep_values.empty()) {
    throw ConfigError("sweep key and values apply to sweep mode only");
  }

  RunReport rep;
  rep.canonical["mode"] = mode;
  rep.canonical["config"] = config_echo(req.config);

  auto t0 = std::chrono::steady_clock::now();
  Scenario sc = generate_scenario(req.config);
  rep.runtime["generate_seconds"] = seconds_since(t0);
  t0 = std::chrono::steady_clock::now();
  GameProfile pr = assemble_profile(sc);
  rep.runtime["assemble_seconds"] = seconds_since(t0);
  rep.canonical["scenario"] = scenario_digest(sc);
  const bool any_removed = req.config.num_removed > 0;
  const int n = pr.n_clients();
  {
    ordered_json prof;
    prof["alpha"] = client_alphas(pr);
    std::vector<double> costs(n);
    for (int k = 0; k < n; ++k) costs[k] = pr.clients[k].cost;
    prof["cost"] = costs;
    ordered_json dmat = ordered_json::array();
    for (int a = 0; a < n; ++a) {
      std::vector<double> row(n, 0.0);
      WeightedEmbedding mu_a = unit_embedding(pr.table.bases, pr.clients[a].embedding_index);
      for (int b = 0; b < n; ++b) {
        WeightedEmbedding mu_b =
            unit_embedding(pr.table.bases, pr.clients[b].embedding_index);
        row[b] = std::sqrt(dist_sq(pr.table, mu_a, mu_b));
      }
      dmat.push_back(row);
    }
    prof["distance_matrix"] = std::move(dmat);
    prof["het_to_removed"] = client_removed_dists(pr, any_removed);
    rep.canonical["profile"] = std::move(prof);
  }

  t0 = std::chrono::steady_clock::now();
  if (mode == "nash") {
    std::vector<double> p(n, 0.0);
    if (req.payment_override) {
      if (static_cast<int>(req.payment_override->size()) != n)
        throw ConfigError("payment override needs one value per remaining client");
      for (double v : *req.payment_override)
        if (!std::isfinite(v) || v < 0.0)
          throw ConfigError("payment override values must be finite and nonnegative");
      p = *req.payment_override;
    }
    EquilibriumResult eq = nash_solve(pr, p, req.options.nash);
    UniquenessReport uq = uniqueness_check(pr, p);
    ordered_json r;
    r["payment"] = p;
    r["participation"] = eq.x;
    r["converged"] = eq.converged;
    r["iterations"] = eq.iterations;
    r["residual"] = eq.residual;
    r["server_utility"] = server_utility(pr, p, eq.x);
    r["u_server"] = u_server(pr, eq.x);
    double spend = 0.0;
    for (int k = 0; k < n; ++k) spend += p[k] * eq.x[k];
    r["spend"] = spend;
    r["metrics"] = metrics_json(pr, eq.x);
    ordered_json uj;
    uj["unique"] = uq.unique;
    uj["diameter"] = uq.diameter;
    uj["margins"] = uq.margins;
    r["uniqueness"] = std::move(uj);
    rep.canonical["result"] = std::move(r);
    rep.csv = build_csv(pr, any_removed, p, eq.x);
    rep.converged = eq.converged;
  } else if (mode == "haipo" || mode == "uniform") {
    HaipoResult r = mode == "haipo" ? haipo(pr, req.options) : uniform_baseline(pr, req.options);
    rep.canonical["result"] = haipo_json(pr, r);
    rep.csv = build_csv(pr, any_removed, r.p, r.x);
    rep.converged = r.converged;
  } else if (mode == "sweep") {
    const int count = static_cast<int>(req.sweep_values.size());
    std::vector<ordered_json> rows(count);
    std::vector<std::string> csvs(count);
    std::vector<char> oks(count, 0);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < count; ++i) {
      ScenarioConfig cfg_i = req.config;
      apply_sweep_value(cfg_i, req.sweep_key, req.sweep_values[i]);
      validate_config(cfg_i);
      Scenario sc_i = generate_scenario(cfg_i);
      GameProfile pr_i = assemble_profile(sc_i);
      HaipoResult h = haipo(pr_i, req.options);
      ordered_json row;
      row["value"] = req.sweep_values[i];
      row["server_utility"] = h.server_utility;
      row["u_server"] = h.u_server_value;
      row["spend"] = h.spend;
      row["converged"] = h.converged;
      row["payment"] = h.p;
      row["participation"] = h.x;
      MetricsReport mb = metric_bounds(pr_i, h.x);
      row["verification_bound"] = mb.verification_bound;
      row["forgetting_bound"] = mb.forgetting_bound;
      rows[i] = std::move(row);
      csvs[i] = build_csv(pr_i, cfg_i.num_removed > 0, h.p, h.x);
      oks[i] = h.converged ? 1 : 0;
    }
    ordered_json r;
    r["key"] = req.sweep_key;
    r["values"] = req.sweep_values;
    ordered_json arr = ordered_json::array();
    bool all_ok = true;
    for (int i = 0; i < count; ++i) {
      arr.push_back(std::move(rows[i]));
      all_ok = all_ok && oks[i];
    }
    r["rows"] = std::move(arr);
    rep.canonical["result"] = std::move(r);
    rep.csv = csvs.back();  // per-client table for the final sweep value
    rep.converged = all_ok;
  } else {  // oracle-suite
    bool all_passed = true;
    rep.canonical["result"] = oracle_suite(pr, req, all_passed);
    rep.csv = "client_id,alpha,cost,het_to_removed,payment,participation,q_bound\n";
    rep.converged = all_passed;
  }
  rep.runtime["solve_seconds"] = seconds_since(t0);
  rep.canonical["csv"] = rep.csv;
  return rep;
}

std::string report_to_string(const RunReport& rep) {
  ordered_json root;
  root["canonical"] = rep.canonical;
  root["runtime"] = rep.runtime;
  return root.dump(2) + "\n";
}

}  // namespace fedgame
