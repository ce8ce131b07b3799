#include "fedgame/client_game.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fedgame/errors.hpp"

namespace fedgame {

namespace {

void check_client(const GameProfile& pr, std::span<const double> x, int k) {
  if (k < 0 || k >= pr.n_clients()) throw std::invalid_argument("client index out of range");
  if (x.size() != static_cast<std::size_t>(pr.n_clients()))
    throw std::invalid_argument("participation vector has wrong length");
}

double participation_mass(const GameProfile& pr, std::span<const double> x) {
  double s = 0.0;
  for (int i = 0; i < pr.n_clients(); ++i) s += pr.clients[i].alpha * x[i];
  return s;
}

double others_mass(const GameProfile& pr, std::span<const double> x, int k) {
  double s = 0.0;
  for (int i = 0; i < pr.n_clients(); ++i)
    if (i != k) s += pr.clients[i].alpha * x[i];
  return s;
}

// Round-off floor below which the pull term counts as zero and the client
// faces a plain step decision at its cost.
double phi_floor(const GameProfile& pr) {
  return 1e-13 * pr.lambda_hat_q * std::max(pr.table.trace(), 0.0);
}

}  // namespace

WeightedEmbedding GameProfile::mixture_embedding(std::span<const double> x) const {
  std::vector<double> alpha(clients.size());
  for (std::size_t i = 0; i < clients.size(); ++i) alpha[i] = clients[i].alpha;
  std::vector<double> c = mixture_coefficients(x, alpha);
  WeightedEmbedding e;
  e.coeffs.assign(static_cast<std::size_t>(table.bases), 0.0);
  for (std::size_t i = 0; i < clients.size(); ++i)
    e.coeffs[static_cast<std::size_t>(clients[i].embedding_index)] = c[i];
  return e;
}

double perf_impact(const GameProfile& pr, std::span<const double> x, int k) {
  check_client(pr, x, k);
  WeightedEmbedding mu = pr.mixture_embedding(x);
  WeightedEmbedding mu_k = unit_embedding(pr.table.bases, pr.clients[k].embedding_index);
  return pr.lambda_hat_q * dist_sq(pr.table, mu, mu_k);
}

double perf_impact_derivative(const GameProfile& pr, std::span<const double> x, int k) {
  check_client(pr, x, k);
  double s = participation_mass(pr, x);
  if (s <= 0.0) throw std::domain_error("impact derivative undefined at zero participation");
  return -(2.0 * pr.clients[k].alpha / s) * perf_impact(pr, x, k);
}

double perf_impact_second(const GameProfile& pr, std::span<const double> x, int k) {
  check_client(pr, x, k);
  double s = participation_mass(pr, x);
  if (s <= 0.0) throw std::domain_error("impact curvature undefined at zero participation");
  double a = pr.clients[k].alpha;
  return (6.0 * a * a / (s * s)) * perf_impact(pr, x, k);
}

double delta_u(const GameProfile& pr, std::span<const double> x, int k, double x_hi,
               double x_lo) {
  check_client(pr, x, k);
  double s0 = others_mass(pr, x, k);
  if (s0 <= 0.0) throw std::domain_error("impact change undefined with no other participants");
  WeightedEmbedding mu_hat;
  mu_hat.coeffs.assign(static_cast<std::size_t>(pr.table.bases), 0.0);
  for (int i = 0; i < pr.n_clients(); ++i) {
    if (i == k) continue;
    mu_hat.coeffs[static_cast<std::size_t>(pr.clients[i].embedding_index)] =
        pr.clients[i].alpha * x[i] / s0;
  }
  WeightedEmbedding mu_k = unit_embedding(pr.table.bases, pr.clients[k].embedding_index);
  double amp = pr.lambda_hat_q * dist_sq(pr.table, mu_hat, mu_k);
  double b = pr.clients[k].alpha / s0;
  auto sq = [](double v) { return v * v; };
  return amp * (1.0 / sq(1.0 + b * x_hi) - 1.0 / sq(1.0 + b * x_lo));
}

double client_utility(const GameProfile& pr, double p_k, std::span<const double> x, int k) {
  check_client(pr, x, k);
  return p_k * x[k] - perf_impact(pr, x, k) - pr.clients[k].cost * x[k];
}

double phi(const GameProfile& pr, std::span<const double> x, int k) {
  check_client(pr, x, k);
  WeightedEmbedding v;
  v.coeffs.assign(static_cast<std::size_t>(pr.table.bases), 0.0);
  const int base_k = pr.clients[k].embedding_index;
  for (int i = 0; i < pr.n_clients(); ++i) {
    if (i == k) continue;
    double w = pr.clients[i].alpha * x[i];
    v.coeffs[static_cast<std::size_t>(pr.clients[i].embedding_index)] += w;
    v.coeffs[static_cast<std::size_t>(base_k)] -= w;
  }
  double q = table_inner(pr.table, v, v);
  return 2.0 * pr.lambda_hat_q * std::max(q, 0.0);
}

Thresholds thresholds(const GameProfile& pr, std::span<const double> x, int k) {
  check_client(pr, x, k);
  const double a = pr.clients[k].alpha;
  const double c = pr.clients[k].cost;
  const double s0 = others_mass(pr, x, k);
  if (s0 <= 0.0) return {c, c};
  const double f = phi(pr, x, k);
  const double s1 = s0 + a;
  return {c - a * f / (s0 * s0 * s0), c - a * f / (s1 * s1 * s1)};
}

double best_response(const GameProfile& pr, double p_k, std::span<const double> x, int k) {
  check_client(pr, x, k);
  const double a = pr.clients[k].alpha;
  const double c = pr.clients[k].cost;
  const double s0 = others_mass(pr, x, k);
  if (s0 <= 0.0) return p_k > c ? 1.0 : 0.0;
  const double f = phi(pr, x, k);
  if (f <= phi_floor(pr)) return p_k > c ? 1.0 : 0.0;
  const Thresholds th = thresholds(pr, x, k);
  if (p_k < th.lower) return 0.0;
  if (p_k > th.upper) return 1.0;
  // Interior zone guarantees c - p_k >= a f / (s0 + a)^3 > 0.
  const double xs = std::cbrt(f / (a * a * (c - p_k))) - s0 / a;
  if (xs < -1e-9 || xs > 1.0 + 1e-9)
    throw IntegrityError("best response escaped [0,1] beyond clamp tolerance: " +
                         std::to_string(xs));
  return std::min(1.0, std::max(0.0, xs));
}

EquilibriumResult nash_solve(const GameProfile& pr, std::span<const double> p,
                             const SolverOptions& opts) {
  const int n = pr.n_clients();
  if (p.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("payment vector has wrong length");
  EquilibriumResult res;
  if (!opts.init.empty() && opts.init.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("equilibrium init has wrong length");
  res.x = opts.init.empty() ? std::vector<double>(n, 1.0) : opts.init;
  for (int sweep = 0; sweep < opts.max_iters; ++sweep) {
    double change = 0.0;
    for (int k = 0; k < n; ++k) {
      double nx = best_response(pr, p[k], res.x, k);
      change = std::max(change, std::abs(nx - res.x[k]));
      res.x[k] = nx;
    }
    res.iterations = sweep + 1;
    if (change < opts.tol_x) {
      double cert = 0.0;
      for (int k = 0; k < n; ++k)
        cert = std::max(cert, std::abs(best_response(pr, p[k], res.x, k) - res.x[k]));
      res.residual = cert;
      if (cert <= opts.tol_x) {
        res.converged = true;
        return res;
      }
    }
  }
  double cert = 0.0;
  for (int k = 0; k < n; ++k)
    cert = std::max(cert, std::abs(best_response(pr, p[k], res.x, k) - res.x[k]));
  res.residual = cert;
  res.converged = cert <= opts.tol_x;
  return res;
}

UniquenessReport uniqueness_check(const GameProfile& pr, std::span<const double> p) {
  const int n = pr.n_clients();
  if (p.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("payment vector has wrong length");
  UniquenessReport rep;
  for (int i = 0; i < n; ++i) {
    WeightedEmbedding mu_i = unit_embedding(pr.table.bases, pr.clients[i].embedding_index);
    for (int j = i + 1; j < n; ++j) {
      WeightedEmbedding mu_j = unit_embedding(pr.table.bases, pr.clients[j].embedding_index);
      rep.diameter = std::max(rep.diameter, std::sqrt(dist_sq(pr.table, mu_i, mu_j)));
    }
  }
  rep.unique = true;
  rep.margins.resize(n);
  for (int k = 0; k < n; ++k) {
    const double a = pr.clients[k].alpha;
    const double gap = std::abs(pr.clients[k].cost - p[k]);
    const double bound =
        (3.0 * a * (1.0 - a) * (1.0 - a) / 4.0) * std::sqrt(3.0 * gap / pr.lambda_hat_q);
    rep.margins[k] = bound - rep.diameter;
    if (!(rep.diameter < bound)) rep.unique = false;
  }
  return rep;
}

}  // namespace fedgame
