#include "fedgame/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "fedgame/errors.hpp"

namespace fedgame {

namespace {

std::vector<double> gram_apply(const InnerProductTable& g, std::span<const double> w) {
  const int m = g.bases;
  std::vector<double> out(m, 0.0);
  for (int a = 0; a < m; ++a) {
    double s = 0.0;
    for (int b = 0; b < m; ++b) s += g.at(a, b) * w[b];
    out[a] = s;
  }
  return out;
}

double gram_quad(const InnerProductTable& g, std::span<const double> u,
                 std::span<const double> v) {
  const int m = g.bases;
  double s = 0.0;
  for (int a = 0; a < m; ++a) {
    double row = 0.0;
    for (int b = 0; b < m; ++b) row += g.at(a, b) * v[b];
    s += u[a] * row;
  }
  return s;
}

double logsumexp(std::span<const double> v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

void check_target(const DiscreteDomain& dom, std::span<const double> t) {
  if (static_cast<int>(t.size()) != dom.size())
    throw std::invalid_argument("target size does not match the domain");
  for (double v : t)
    if (!(v >= 0.0)) throw std::invalid_argument("target masses must be nonnegative");
}

}  // namespace

DiscreteDomain DiscreteDomain::make(std::vector<SamplePoint> atoms, const KernelSpec& spec) {
  if (atoms.empty()) throw std::invalid_argument("domain needs at least one atom");
  const int m = static_cast<int>(atoms.size());
  DiscreteDomain dom;
  dom.kernel = spec;
  dom.gram.bases = m;
  dom.gram.entries.assign(static_cast<std::size_t>(m) * m, 0.0);
  for (int a = 0; a < m; ++a)
    for (int b = a; b < m; ++b) {
      double v = kernel_eval(spec, atoms[a], atoms[b]);
      dom.gram.entries[static_cast<std::size_t>(a) * m + b] = v;
      dom.gram.entries[static_cast<std::size_t>(b) * m + a] = v;
    }
  validate_table(dom.gram);
  dom.atoms = std::move(atoms);
  return dom;
}

double log_partition(const DiscreteDomain& dom, std::span<const double> w) {
  std::vector<double> l = gram_apply(dom.gram, w);
  return logsumexp(l) - std::log(static_cast<double>(dom.size()));
}

std::vector<double> expfam_pmf(const DiscreteDomain& dom, std::span<const double> w) {
  std::vector<double> l = gram_apply(dom.gram, w);
  double lse = logsumexp(l);
  for (double& v : l) v = std::exp(v - lse);
  return l;
}

FitResult expfam_fit(const DiscreteDomain& dom, std::span<const double> target,
                     const OracleOptions& opts) {
  check_target(dom, target);
  const int m = dom.size();
  const double lambda = opts.lambda;
  if (!(lambda > 0.0)) throw std::invalid_argument("ridge weight must be positive");

  auto objective_of = [&](std::span<const double> w) {
    std::vector<double> l = gram_apply(dom.gram, w);
    double lin = 0.0, quad = 0.0;
    for (int a = 0; a < m; ++a) {
      lin += target[a] * l[a];
      quad += w[a] * l[a];
    }
    return -lin + logsumexp(l) - std::log(static_cast<double>(m)) + 0.5 * lambda * quad;
  };

  FitResult res;
  res.w.assign(m, 0.0);
  double obj = objective_of(res.w);
  double eta = 1.0;
  std::vector<double> r(m), trial(m), rt(m);
  int it = 0;
  for (; it < opts.fit_max_iters; ++it) {
    std::vector<double> pi = expfam_pmf(dom, res.w);
    for (int a = 0; a < m; ++a) r[a] = pi[a] - target[a] + lambda * res.w[a];
    double dec = gram_quad(dom.gram, r, r);
    if (dec < 0.0) dec = 0.0;
    if (std::sqrt(dec) <= opts.fit_tol) {
      res.converged = true;
      break;
    }
    bool accepted = false;
    while (eta > 1e-18) {
      for (int a = 0; a < m; ++a) trial[a] = res.w[a] - eta * r[a];
      double obj_t = objective_of(trial);
      // Once the Armijo decrease drops below what doubles can represent in the
      // objective, zero-progress steps would pass it forever; steer the same
      // backtracked step by strict contraction of the gradient norm instead,
      // never letting the objective rise.
      if (1e-4 * eta * dec > 4e-16 * (1.0 + std::abs(obj))) {
        if (obj_t <= obj - 1e-4 * eta * dec) {
          if (obj_t > obj) res.monotone = false;
          res.w.swap(trial);
          obj = obj_t;
          accepted = true;
          break;
        }
      } else if (obj_t <= obj + 4e-16 * (1.0 + std::abs(obj))) {
        std::vector<double> pt = expfam_pmf(dom, trial);
        for (int a = 0; a < m; ++a) rt[a] = pt[a] - target[a] + lambda * trial[a];
        double dec_t = gram_quad(dom.gram, rt, rt);
        if (dec_t >= 0.0 && dec_t < dec) {
          res.w.swap(trial);
          obj = std::min(obj, obj_t);  // constant to rounding in this regime
          accepted = true;
          break;
        }
      }
      eta *= 0.5;
    }
    if (!accepted) break;  // step collapsed below representable progress
    eta = std::min(eta * 2.0, 64.0);
  }
  res.iterations = it;
  {
    std::vector<double> pi = expfam_pmf(dom, res.w);
    for (int a = 0; a < m; ++a) r[a] = pi[a] - target[a] + lambda * res.w[a];
    double dec = std::max(gram_quad(dom.gram, r, r), 0.0);
    res.residual = std::sqrt(dec);
    res.converged = res.residual <= opts.fit_tol;
  }
  res.objective = obj;
  return res;
}

BoundCheck lemma1_check(const DiscreteDomain& dom, std::span<const double> t1,
                        std::span<const double> t2, const OracleOptions& opts) {
  check_target(dom, t1);
  check_target(dom, t2);
  FitResult f1 = expfam_fit(dom, t1, opts);
  FitResult f2 = expfam_fit(dom, t2, opts);
  std::vector<double> l1 = gram_apply(dom.gram, f1.w);
  std::vector<double> l2 = gram_apply(dom.gram, f2.w);
  double a1 = log_partition(dom, f1.w);
  double a2 = log_partition(dom, f2.w);
  double lhs = 0.0;
  for (int b = 0; b < dom.size(); ++b)
    lhs += t2[b] * ((l2[b] - a2) - (l1[b] - a1));
  std::vector<double> d(dom.size());
  for (int b = 0; b < dom.size(); ++b) d[b] = t1[b] - t2[b];
  BoundCheck chk;
  chk.lhs = std::abs(lhs);
  chk.rhs = gram_quad(dom.gram, d, d) / opts.lambda;
  chk.holds = chk.lhs <= chk.rhs;
  chk.fits_converged = f1.converged && f2.converged;
  return chk;
}

namespace {

// Fixed ingredients for scanning one client's utility along its own axis:
// U(x) = (p - c) x - impact(S0 + alpha x) with
// impact(S) = lambda_hat_q * W / S^2 for S > 0 and the full-participation
// convention value when everyone is out.
struct AxisScan {
  double alpha = 0.0, cost = 0.0, s0 = 0.0, w2 = 0.0, empty_impact = 0.0, lq = 0.0;

  double utility(double p, double x) const {
    double s = s0 + alpha * x;
    double impact = s > 0.0 ? lq * w2 / (s * s) : empty_impact;
    return (p - cost) * x - impact;
  }
};

AxisScan make_axis(const GameProfile& pr, std::span<const double> x, int k) {
  const int n = pr.n_clients();
  const int m = pr.table.bases;
  AxisScan ax;
  ax.alpha = pr.clients[k].alpha;
  ax.cost = pr.clients[k].cost;
  ax.lq = pr.lambda_hat_q;
  std::vector<double> d(m, 0.0);
  for (int i = 0; i < n; ++i) {
    if (i == k) continue;
    double w = pr.clients[i].alpha * x[i];
    d[pr.clients[i].embedding_index] += w;
    ax.s0 += w;
  }
  d[pr.clients[k].embedding_index] -= ax.s0;
  double w2 = 0.0;
  for (int a = 0; a < m; ++a) {
    if (d[a] == 0.0) continue;
    double row = 0.0;
    for (int b = 0; b < m; ++b)
      if (d[b] != 0.0) row += pr.table.at(a, b) * d[b];
    w2 += d[a] * row;
  }
  ax.w2 = std::max(w2, 0.0);
  WeightedEmbedding mu_k = unit_embedding(m, pr.clients[k].embedding_index);
  ax.empty_impact = ax.lq * dist_sq(pr.table, pr.mu_n, mu_k);
  return ax;
}

}  // namespace

double grid_best_response(const GameProfile& pr, double p_k, std::span<const double> x,
                          int k, int grid_points) {
  if (k < 0 || k >= pr.n_clients()) throw std::invalid_argument("client index out of range");
  if (static_cast<int>(x.size()) != pr.n_clients())
    throw std::invalid_argument("participation size mismatch");
  if (grid_points < 2) throw std::invalid_argument("grid needs at least two points");
  AxisScan ax = make_axis(pr, x, k);
  double best_x = 0.0;
  double best_u = ax.utility(p_k, 0.0);
  for (int t = 1; t < grid_points; ++t) {
    double xv = static_cast<double>(t) / (grid_points - 1);
    double u = ax.utility(p_k, xv);
    if (u > best_u) {
      best_u = u;
      best_x = xv;
    }
  }
  return best_x;
}

GridNashResult grid_nash(const GameProfile& pr, std::span<const double> p, int grid_points) {
  const int n = pr.n_clients();
  if (n < 1 || n > 3)
    throw std::invalid_argument("joint grid search supports 1 to 3 clients");
  if (static_cast<int>(p.size()) != n) throw std::invalid_argument("payment size mismatch");
  if (grid_points < 2) throw std::invalid_argument("grid needs at least two points");
  const int g = grid_points;
  const int m = pr.table.bases;

  std::vector<double> xs(g);
  for (int t = 0; t < g; ++t) xs[t] = static_cast<double>(t) / (g - 1);

  // Per client: pairwise centered inner products of the others' embeddings, a
  // best unilateral utility per others-combination, and the (S0, W) pair needed
  // to price the client's own cell utility.
  std::int64_t combos = 1;
  for (int i = 0; i < n - 1; ++i) combos *= g;
  std::vector<std::vector<double>> best_dev(n), combo_s0(n), combo_w2(n);
  std::vector<double> empty_impact(n);
  for (int k = 0; k < n; ++k) {
    std::vector<int> others;
    for (int i = 0; i < n; ++i)
      if (i != k) others.push_back(i);
    const int no = static_cast<int>(others.size());
    std::vector<double> mk(static_cast<std::size_t>(no) * no);
    const int ik = pr.clients[k].embedding_index;
    for (int a = 0; a < no; ++a)
      for (int b = 0; b < no; ++b) {
        int ia = pr.clients[others[a]].embedding_index;
        int ib = pr.clients[others[b]].embedding_index;
        mk[static_cast<std::size_t>(a) * no + b] =
            pr.table.at(ia, ib) - pr.table.at(ia, ik) - pr.table.at(ik, ib) + pr.table.at(ik, ik);
      }
    WeightedEmbedding mu_k = unit_embedding(m, ik);
    empty_impact[k] = pr.lambda_hat_q * dist_sq(pr.table, pr.mu_n, mu_k);
    best_dev[k].resize(combos);
    combo_s0[k].resize(combos);
    combo_w2[k].resize(combos);
    std::vector<int> digit(no, 0);
    for (std::int64_t c = 0; c < combos; ++c) {
      std::int64_t rem = c;
      for (int a = no - 1; a >= 0; --a) {
        digit[a] = static_cast<int>(rem % g);
        rem /= g;
      }
      double s0 = 0.0;
      for (int a = 0; a < no; ++a) s0 += pr.clients[others[a]].alpha * xs[digit[a]];
      double w2 = 0.0;
      for (int a = 0; a < no; ++a) {
        double wa = pr.clients[others[a]].alpha * xs[digit[a]];
        for (int b = 0; b < no; ++b)
          w2 += wa * pr.clients[others[b]].alpha * xs[digit[b]] *
                mk[static_cast<std::size_t>(a) * no + b];
      }
      w2 = std::max(w2, 0.0);
      AxisScan ax{pr.clients[k].alpha, pr.clients[k].cost, s0, w2, empty_impact[k],
                  pr.lambda_hat_q};
      double bu = ax.utility(p[k], xs[0]);
      for (int t = 1; t < g; ++t) bu = std::max(bu, ax.utility(p[k], xs[t]));
      best_dev[k][c] = bu;
      combo_s0[k][c] = s0;
      combo_w2[k][c] = w2;
    }
  }

  // Others-combo index: the cell's digits without client k, most significant
  // first, same radix.
  std::int64_t cells = combos * g;
  std::int64_t best_cell = -1;
  double best_gain = 0.0;
#pragma omp parallel
  {
    std::int64_t loc_cell = -1;
    double loc_gain = 0.0;
#pragma omp for schedule(static)
    for (std::int64_t c = 0; c < cells; ++c) {
      int digit[3] = {0, 0, 0};
      std::int64_t rem = c;
      for (int i = n - 1; i >= 0; --i) {
        digit[i] = static_cast<int>(rem % g);
        rem /= g;
      }
      double gain = 0.0;
      for (int k = 0; k < n; ++k) {
        std::int64_t combo = 0;
        for (int i = 0; i < n; ++i)
          if (i != k) combo = combo * g + digit[i];
        AxisScan ax{pr.clients[k].alpha, pr.clients[k].cost, combo_s0[k][combo],
                    combo_w2[k][combo], empty_impact[k], pr.lambda_hat_q};
        double u_here = ax.utility(p[k], xs[digit[k]]);
        gain += std::max(0.0, best_dev[k][combo] - u_here);
      }
      if (loc_cell < 0 || gain < loc_gain || (gain == loc_gain && c < loc_cell)) {
        loc_gain = gain;
        loc_cell = c;
      }
    }
#pragma omp critical
    {
      if (loc_cell >= 0 &&
          (best_cell < 0 || loc_gain < best_gain ||
           (loc_gain == best_gain && loc_cell < best_cell))) {
        best_gain = loc_gain;
        best_cell = loc_cell;
      }
    }
  }

  GridNashResult res;
  res.x.resize(n);
  std::int64_t rem = best_cell;
  for (int i = n - 1; i >= 0; --i) {
    res.x[i] = xs[rem % g];
    rem /= g;
  }
  res.total_gain = best_gain;
  return res;
}

GridPaymentResult grid_payment_search(const GameProfile& pr, std::span<const double> cap,
                                      int grid_points, const SolverOptions& nash_opts) {
  const int n = pr.n_clients();
  if (static_cast<int>(cap.size()) != n) throw std::invalid_argument("cap size mismatch");
  if (grid_points < 2) throw std::invalid_argument("grid needs at least two points");
  const int g = grid_points;
  std::int64_t cells = 1;
  for (int i = 0; i < n; ++i) {
    cells *= g;
    if (cells > 100'000'000)
      throw std::invalid_argument("payment grid too large");
  }

  std::int64_t best_cell = -1;
  double best_v = 0.0;
  std::vector<double> best_x;
#pragma omp parallel
  {
    std::int64_t loc_cell = -1;
    double loc_v = 0.0;
    std::vector<double> loc_x;
    std::vector<double> pv(n);
#pragma omp for schedule(dynamic, 16)
    for (std::int64_t c = 0; c < cells; ++c) {
      std::int64_t rem = c;
      for (int i = n - 1; i >= 0; --i) {
        pv[i] = cap[i] * static_cast<double>(rem % g) / (g - 1);
        rem /= g;
      }
      EquilibriumResult eq = nash_solve(pr, pv, nash_opts);
      if (!eq.converged) continue;
      double spend = 0.0;
      for (int i = 0; i < n; ++i) spend += pv[i] * eq.x[i];
      if (spend > pr.budget + 1e-9) continue;
      double v = server_utility(pr, pv, eq.x);
      if (loc_cell < 0 || v > loc_v || (v == loc_v && c < loc_cell)) {
        loc_v = v;
        loc_cell = c;
        loc_x = eq.x;
      }
    }
#pragma omp critical
    {
      if (loc_cell >= 0 &&
          (best_cell < 0 || loc_v > best_v || (loc_v == best_v && loc_cell < best_cell))) {
        best_v = loc_v;
        best_cell = loc_cell;
        best_x = loc_x;
      }
    }
  }
  if (best_cell < 0) throw IntegrityError("payment grid had no feasible stable cell");

  GridPaymentResult res;
  res.p.resize(n);
  std::int64_t rem = best_cell;
  for (int i = n - 1; i >= 0; --i) {
    res.p[i] = cap[i] * static_cast<double>(rem % g) / (g - 1);
    rem /= g;
  }
  res.x = best_x;
  res.server_utility = best_v;
  return res;
}

double finite_difference(const std::function<double(double)>& f, double x, double h,
                         int order) {
  if (!(h > 0.0)) throw std::invalid_argument("step must be positive");
  if (order == 1) return (f(x + h) - f(x - h)) / (2.0 * h);
  if (order == 2) return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
  throw std::invalid_argument("order must be 1 or 2");
}

}  // namespace fedgame
