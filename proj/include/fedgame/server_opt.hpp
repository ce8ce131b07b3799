#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fedgame/client_game.hpp"

namespace fedgame {

// Heterogeneity-driven guarantees at a participation profile, scaled by the
// bound constant C (not by the lambda-hat weights).
struct MetricsReport {
  double verification_bound = 0.0;     // C ||mu(x) - mu_n||^2
  double forgetting_bound = 0.0;       // C ||mu(x) - mu_o||^2
  std::vector<double> quality_bounds;  // C ||mu(x) - mu_k||^2 + delta_k
};

MetricsReport metric_bounds(const GameProfile& pr, std::span<const double> x);

// lambda_hat_v ||mu(x) - mu_n||^2 + lambda_hat_s ||mu(x) - mu_o||^2.
double u_server(const GameProfile& pr, std::span<const double> x);

// -u_server(x) - p.x, the quantity the payment search maximizes.
double server_utility(const GameProfile& pr, std::span<const double> p,
                      std::span<const double> x);

// First-order surrogate anchored at (mu0, u0):
// u0 + 2 <lambda_hat_v (mu0 - mu_n) + lambda_hat_s (mu0 - mu_o), mu(x) - mu0>.
double linearized_u_server(const GameProfile& pr, std::span<const double> x,
                           const WeightedEmbedding& mu0, double u0);

// Proportional budget split b_k = B alpha_k.
double budget_share(const GameProfile& pr, int k);

struct OptOptions {
  double epsilon = 1e-6;       // outer payment loop stop, max-norm step
  int max_iters = 100;         // outer payment loop cap
  double bisection_tol = 1e-8; // budget cap bisection interval width
  double levelset_tol = 1e-6;  // level bisection bracket width and line search tol
  int multistart = 16;         // seeded interior starts for the box search
  std::uint64_t search_seed = 0x5eedf00dULL;
  SolverOptions nash;          // inner equilibrium solver wiring
};

// Largest payment cap that keeps client k's spending p * BR_k(p) within b_k
// against the fixed profile x_others; the spending curve is nondecreasing for
// p >= 0, so a monotone boundary bisection applies. With b_k = 0 this
// degenerates to max(0, lower threshold).
double budget_bisection(const GameProfile& pr, int k, double b_k,
                        std::span<const double> x_others, const OptOptions& opts);

using BoxObjective = std::function<double(std::span<const double>)>;

struct BoxMinResult {
  std::vector<double> p;
  double value = 0.0;
  int evals = 0;
};

// Derivative-free minimizer over the box [0, cap]: seeded multistart (corners,
// midpoint, interior draws) with fixed-order coordinate descent via golden
// section, wrapped in a bisection on the objective level whose feasibility
// probes descend from the incumbent. Ties within 1e-12 prefer the
// lexicographically smaller payment vector. Fully deterministic in search_seed.
BoxMinResult quasiconvex_min(const BoxObjective& objective, std::span<const double> cap,
                             const OptOptions& opts);

struct PaymentIterate {
  std::vector<double> p;
  double true_utility = 0.0;  // server_utility at the iterate's equilibrium
};

struct HaipoResult {
  std::vector<double> p;
  std::vector<double> x;
  double server_utility = 0.0;
  double u_server_value = 0.0;
  double spend = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> caps;            // per-client payment caps from stage 1
  std::vector<PaymentIterate> trace;   // accepted iterates, true utility nondecreasing
};

// Two-stage payment optimization: per-client budget caps at full participation,
// then iterated linearize-and-search over the capped box with re-anchoring at
// each accepted equilibrium. Candidate payments whose equilibrium spending
// exceeds the budget are rejected inside the search, and an iterate is accepted
// only if it does not decrease the true server utility; otherwise the previous
// payment is retained and the loop stops at its fixed point.
HaipoResult haipo(const GameProfile& pr, const OptOptions& opts = {});

// Single shared payment level: scan plus golden-section refinement over
// [0, max_k cap_k], keeping the budget-feasible level with the best true server
// utility (ties toward the smaller level). Same result shape as haipo.
HaipoResult uniform_baseline(const GameProfile& pr, const OptOptions& opts = {});

}  // namespace fedgame
