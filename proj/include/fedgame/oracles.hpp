#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fedgame/client_game.hpp"
#include "fedgame/embedding.hpp"
#include "fedgame/server_opt.hpp"

namespace fedgame {

// Finite support for exponential-family fits: atoms, their kernel Gram matrix,
// uniform base measure.
struct DiscreteDomain {
  std::vector<SamplePoint> atoms;
  KernelSpec kernel;
  InnerProductTable gram;  // atom Gram matrix, PSD-checked on build

  static DiscreteDomain make(std::vector<SamplePoint> atoms, const KernelSpec& spec);
  int size() const { return gram.bases; }
};

struct OracleOptions {
  double lambda = 0.1;       // ridge weight on the natural parameter
  double fit_tol = 1e-8;     // stationarity residual, RKHS norm
  int fit_max_iters = 200000;
  double fd_step = 1e-5;
};

// log sum_a exp((G w)_a) - log m under the uniform base measure; A(0) = 0.
double log_partition(const DiscreteDomain& dom, std::span<const double> w);

// Probability masses softmax((G w)); always sums to 1.
std::vector<double> expfam_pmf(const DiscreteDomain& dom, std::span<const double> w);

struct FitResult {
  std::vector<double> w;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;   // RKHS norm of pmf(w) - target + lambda w, recomputed post hoc
  double objective = 0.0;
  bool monotone = true;    // accepted objective values never increased
};

// Ridge-regularized maximum likelihood over the domain: functional gradient
// descent with Armijo backtracking on the convex objective
// -target.(G w) + logsumexp(G w) + (lambda/2) w.G w.
FitResult expfam_fit(const DiscreteDomain& dom, std::span<const double> target,
                     const OracleOptions& opts = {});

struct BoundCheck {
  double lhs = 0.0;   // |E_{t2}[log-likelihood ratio of the two fitted models]|
  double rhs = 0.0;   // ||mu_1 - mu_2||^2 / lambda
  bool holds = false;
  bool fits_converged = false;
};

// Fits both targets and checks the likelihood-difference bound against the
// squared embedding distance of the targets.
BoundCheck lemma1_check(const DiscreteDomain& dom, std::span<const double> t1,
                        std::span<const double> t2, const OracleOptions& opts = {});

// Dense scan of client k's utility over x_k in [0,1]; exact ties keep the
// smaller x.
double grid_best_response(const GameProfile& pr, double p_k, std::span<const double> x,
                          int k, int grid_points);

struct GridNashResult {
  std::vector<double> x;
  double total_gain = 0.0;  // summed positive unilateral improvements at the cell
};

// Exhaustive joint-grid equilibrium search, n_clients <= 3. Returns the cell
// minimizing the total unilateral deviation gain (zero at an exact grid
// equilibrium); ties keep the lexicographically smallest cell.
GridNashResult grid_nash(const GameProfile& pr, std::span<const double> p, int grid_points);

struct GridPaymentResult {
  std::vector<double> p;
  std::vector<double> x;
  double server_utility = 0.0;
};

// Exhaustive payment-grid search over [0, cap] per client, keeping the
// budget-feasible cell with the best true server utility (spending within
// budget + 1e-9; ties keep the lexicographically smallest payment).
GridPaymentResult grid_payment_search(const GameProfile& pr, std::span<const double> cap,
                                      int grid_points, const SolverOptions& nash_opts = {});

// Central difference of order 1 or 2.
double finite_difference(const std::function<double(double)>& f, double x, double h,
                         int order);

}  // namespace fedgame
