#pragma once

#include <span>
#include <vector>

#include "fedgame/embedding.hpp"

namespace fedgame {

// One remaining client as the solver sees it.
struct ClientProfile {
  double alpha = 0.0;      // retained-data weight share, in (0,1], shares sum to 1
  double cost = 0.0;       // full-participation cost c_k = gamma * volume
  double delta = 0.0;      // additive slack on the client quality bound
  int embedding_index = 0; // base slot of this client's embedding in the table
};

// Assembled game state: remaining clients plus the embedding geometry.
struct GameProfile {
  std::vector<ClientProfile> clients;  // remaining clients only
  InnerProductTable table;             // bases cover every original client
  WeightedEmbedding mu_n;              // full-participation mixture of remaining clients
  WeightedEmbedding mu_o;              // original mixture over all clients
  WeightedEmbedding mu_r;              // removed-client mixture (all zero when none removed)
  double lambda_hat_v = 1.0;
  double lambda_hat_s = 1.0;
  double lambda_hat_q = 1.0;
  double bound_constant = 1.0;  // C; lambda_hat_* = lambda_* times C
  double budget = 0.0;
  double gamma = 0.0;  // effective per-point cost used for client costs

  int n_clients() const { return static_cast<int>(clients.size()); }

  // mu(x): participation mixture scattered into base coefficients. All-zero x
  // yields mu_n (limit convention).
  WeightedEmbedding mixture_embedding(std::span<const double> x) const;
};

// Performance impact lambda_hat_q * ||mu(x) - mu_k||^2 felt by client k.
double perf_impact(const GameProfile& pr, std::span<const double> x, int k);

// d/dx_k of perf_impact: -(2 alpha_k / S) * perf_impact with S = sum_i alpha_i x_i.
// Throws std::domain_error at S = 0.
double perf_impact_derivative(const GameProfile& pr, std::span<const double> x, int k);

// Second derivative (6 alpha_k^2 / S^2) * perf_impact.
double perf_impact_second(const GameProfile& pr, std::span<const double> x, int k);

// Closed-form impact change when client k moves x_hi -> x_lo (others from x):
// A (1/(1+b x_hi)^2 - 1/(1+b x_lo)^2) with A = lambda_hat_q ||mu_hat - mu_k||^2,
// b = alpha_k / S0, mu_hat the others-only mixture. Throws std::domain_error at
// S0 = 0.
double delta_u(const GameProfile& pr, std::span<const double> x, int k,
               double x_hi, double x_lo);

// p_k x_k - perf_impact - c_k x_k, with x_k taken from x.
double client_utility(const GameProfile& pr, double p_k, std::span<const double> x, int k);

// Weight of the participation pull term in client k's marginal utility:
// 2 lambda_hat_q ||sum_{i != k} alpha_i x_i (mu_i - mu_k)||^2.
double phi(const GameProfile& pr, std::span<const double> x, int k);

struct Thresholds {
  double lower = 0.0;  // below: best response 0
  double upper = 0.0;  // above: best response 1
};

// Payment zone boundaries for client k given the others' participation in x.
// Degenerate S0 = 0 collapses both thresholds to the cost.
Thresholds thresholds(const GameProfile& pr, std::span<const double> x, int k);

// Zone rule plus the interior cube-root stationary point. Exact threshold ties
// fall through to the interior formula. Results are clamped to [0,1]; clamps
// beyond 1e-9 throw IntegrityError.
double best_response(const GameProfile& pr, double p_k, std::span<const double> x, int k);

struct SolverOptions {
  double tol_x = 1e-8;
  int max_iters = 10000;
  std::vector<double> init;  // empty = all ones
};

struct EquilibriumResult {
  std::vector<double> x;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;  // fixed-point certificate max_k |BR_k(x) - x_k|
};

// Fixed-order Gauss-Seidel best-response sweeps. Converged means the sweep
// change criterion was met and the recomputed fixed-point certificate holds at
// tol_x. Non-convergence is reported, not thrown.
EquilibriumResult nash_solve(const GameProfile& pr, std::span<const double> p,
                             const SolverOptions& opts = {});

struct UniquenessReport {
  bool unique = false;
  double diameter = 0.0;          // max pairwise embedding distance among remaining clients
  std::vector<double> margins;    // per-client bound minus diameter, strict positivity required
};

// Sufficient condition: diameter < (3 alpha_k (1-alpha_k)^2 / 4) *
// sqrt(3 |c_k - p_k| / lambda_hat_q) for every k, strictly.
UniquenessReport uniqueness_check(const GameProfile& pr, std::span<const double> p);

}  // namespace fedgame
