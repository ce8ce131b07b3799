#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fedgame/oracles.hpp"
#include "fedgame/rng.hpp"
#include "fedgame/scenario.hpp"
#include "test_util.hpp"

using namespace fedgame;

namespace {

DiscreteDomain line_domain() {
  return DiscreteDomain::make({{-1.5}, {-0.5}, {0.5}, {1.5}}, KernelSpec::rbf(1.0));
}

DiscreteDomain random_domain(std::uint64_t seed, int atoms) {
  Rng rng(seed);
  std::vector<SamplePoint> pts;
  for (int i = 0; i < atoms; ++i) pts.push_back({rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)});
  return DiscreteDomain::make(pts, KernelSpec::rbf(median_heuristic(pts)));
}

std::vector<double> gram_times(const DiscreteDomain& dom, const std::vector<double>& w) {
  std::vector<double> z(dom.size(), 0.0);
  for (int a = 0; a < dom.size(); ++a)
    for (int b = 0; b < dom.size(); ++b) z[a] += dom.gram.at(a, b) * w[b];
  return z;
}

// Plain Gaussian elimination with partial pivoting, small systems only.
std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b) {
  const int n = static_cast<int>(b.size());
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    for (int r = col + 1; r < n; ++r) {
      double f = a[r][col] / a[col][col];
      for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int c = r + 1; c < n; ++c) s -= a[r][c] * x[c];
    x[r] = s / a[r][r];
  }
  return x;
}

std::vector<double> random_pmf(Rng& rng, int n) { return rng.dirichlet(1.0, n); }

}  // namespace

TEST_CASE("log partition and masses") {
  DiscreteDomain dom = line_domain();
  std::vector<double> zero(4, 0.0);
  CHECK(std::abs((log_partition(dom, zero)) - (0.0)) <= 1e-12);
  std::vector<double> pmf0 = expfam_pmf(dom, zero);
  for (double m : pmf0) CHECK(m == doctest::Approx(0.25).epsilon(1e-12));

  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> w(4);
    for (double& v : w) v = rng.uniform(-2.0, 2.0);
    std::vector<double> z = gram_times(dom, w);
    double hi = *std::max_element(z.begin(), z.end());
    double acc = 0.0;
    for (double v : z) acc += std::exp(v - hi);
    double expect = hi + std::log(acc) - std::log(4.0);
    CHECK(std::abs((log_partition(dom, w)) - (expect)) <= 1e-12);

    std::vector<double> pmf = expfam_pmf(dom, w);
    double sum = 0.0;
    for (double m : pmf) {
      CHECK(m > 0.0);
      sum += m;
    }
    CHECK(std::abs((sum) - (1.0)) <= 1e-10);
  }
}

TEST_CASE("log partition shift invariance") {
  // Adding c * v with G v = 1 shifts every logit by c: the partition moves by
  // exactly c and the masses stay put.
  DiscreteDomain dom = line_domain();
  std::vector<std::vector<double>> g(4, std::vector<double>(4));
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) g[a][b] = dom.gram.at(a, b);
  std::vector<double> v = solve_dense(g, std::vector<double>(4, 1.0));

  Rng rng(5);
  std::vector<double> w(4);
  for (double& x : w) x = rng.uniform(-1.0, 1.0);
  for (double c : {-0.7, 0.4, 2.0}) {
    std::vector<double> ws = w;
    for (int i = 0; i < 4; ++i) ws[i] += c * v[i];
    CHECK(std::abs((log_partition(dom, ws)) - (log_partition(dom, w) + c)) <= 1e-9);
    std::vector<double> a = expfam_pmf(dom, w);
    std::vector<double> b = expfam_pmf(dom, ws);
    for (int i = 0; i < 4; ++i) CHECK(std::abs((a[i]) - (b[i])) <= 1e-9);
  }
}

TEST_CASE("model fitting") {
  DiscreteDomain dom = line_domain();
  OracleOptions opts;

  std::vector<double> uniform(4, 0.25);
  FitResult fit = expfam_fit(dom, uniform, opts);
  CHECK(fit.converged);
  CHECK(fit.monotone);
  CHECK(fit.residual < opts.fit_tol);
  std::vector<double> pmf = expfam_pmf(dom, fit.w);
  for (double m : pmf) CHECK(std::abs((m) - (0.25)) <= 1e-8);

  Rng rng(7);
  OracleOptions heavy = opts;
  heavy.lambda = 1e6;
  FitResult shrunk = expfam_fit(dom, random_pmf(rng, 4), heavy);
  CHECK(shrunk.converged);
  for (double v : shrunk.w) CHECK(std::abs(v) <= 1e-5);

  for (int t = 0; t < 5; ++t) {
    DiscreteDomain d2 = random_domain(100 + t, 6);
    std::vector<double> target = random_pmf(rng, 6);
    FitResult r = expfam_fit(d2, target, opts);
    CHECK(r.converged);
    CHECK(r.monotone);
    CHECK(r.residual <= opts.fit_tol);
    // Stationarity recomputed from scratch: grad direction pmf - t + lambda w.
    std::vector<double> diff = expfam_pmf(d2, r.w);
    for (int i = 0; i < 6; ++i) diff[i] += opts.lambda * r.w[i] - target[i];
    std::vector<double> gd = gram_times(d2, diff);
    double norm_sq = 0.0;
    for (int i = 0; i < 6; ++i) norm_sq += diff[i] * gd[i];
    CHECK(std::sqrt(std::max(norm_sq, 0.0)) <= 2.0 * opts.fit_tol);
  }
}

TEST_CASE("likelihood difference bound") {
  DiscreteDomain dom = random_domain(11, 8);
  Rng rng(13);
  std::vector<double> same = random_pmf(rng, 8);
  BoundCheck id = lemma1_check(dom, same, same);
  CHECK(id.fits_converged);
  CHECK(id.holds);
  CHECK(std::abs((id.lhs) - (0.0)) <= 1e-8);
  CHECK(std::abs((id.rhs) - (0.0)) <= 1e-10);

  for (int t = 0; t < 5; ++t) {
    std::vector<double> t1 = random_pmf(rng, 8);
    std::vector<double> t2 = random_pmf(rng, 8);
    BoundCheck fwd = lemma1_check(dom, t1, t2);
    CHECK(fwd.fits_converged);
    CHECK(fwd.holds);
    CHECK(fwd.lhs <= fwd.rhs + 1e-12);
    BoundCheck bwd = lemma1_check(dom, t2, t1);
    CHECK(bwd.holds);
    CHECK(std::abs((bwd.rhs) - (fwd.rhs)) <= 1e-12);
  }
}

TEST_CASE("grid response scan") {
  GameProfile homo = testutil::homogeneous_profile({1, 1});
  double c = homo.clients[0].cost;
  std::vector<double> x{0.0, 0.5};
  CHECK(grid_best_response(homo, c + 0.2, x, 0, 101) == 1.0);
  CHECK(grid_best_response(homo, c - 0.2, x, 0, 101) == 0.0);
  CHECK(grid_best_response(homo, c, x, 0, 101) == 0.0);

  GameProfile pr = testutil::random_profile(17, 3, 1);
  std::vector<double> y{0.4, 0.6, 0.8};
  double a = grid_best_response(pr, 0.5 * pr.clients[1].cost, y, 1, 501);
  double b = grid_best_response(pr, 0.5 * pr.clients[1].cost, y, 1, 501);
  CHECK(a == b);
  CHECK_THROWS_AS(grid_best_response(pr, 0.5, y, 1, 1), std::invalid_argument);
}

TEST_CASE("joint grid equilibrium") {
  GameProfile homo = testutil::homogeneous_profile({1, 1});
  double c = homo.clients[0].cost;
  std::vector<double> hi{c + 0.5, c + 0.5};
  GridNashResult top = grid_nash(homo, hi, 41);
  CHECK(top.x == std::vector<double>{1.0, 1.0});
  CHECK(std::abs((top.total_gain) - (0.0)) <= 1e-12);
  std::vector<double> lo{c - 0.5, c - 0.5};
  GridNashResult bottom = grid_nash(homo, lo, 41);
  CHECK(bottom.x == std::vector<double>{0.0, 0.0});

  GameProfile big = testutil::random_profile(19, 4, 1);
  std::vector<double> p4(4, 0.1);
  CHECK_THROWS_AS(grid_nash(big, p4, 11), std::invalid_argument);

  GameProfile pr = testutil::random_profile(23, 2, 1);
  std::vector<double> p{0.8 * pr.clients[0].cost, 0.9 * pr.clients[1].cost};
  GridNashResult g1 = grid_nash(pr, p, 61);
  GridNashResult g2 = grid_nash(pr, p, 61);
  CHECK(g1.x == g2.x);
  CHECK(g1.total_gain == g2.total_gain);

  // No sampled cell can improve on the reported deviation gain.
  Rng rng(29);
  for (int t = 0; t < 30; ++t) {
    std::vector<double> cell{std::round(rng.uniform() * 60.0) / 60.0,
                             std::round(rng.uniform() * 60.0) / 60.0};
    double gain = 0.0;
    for (int k = 0; k < 2; ++k) {
      double here = client_utility(pr, p[k], cell, k);
      double best = here;
      for (int i = 0; i <= 60; ++i) {
        std::vector<double> dev = cell;
        dev[k] = static_cast<double>(i) / 60.0;
        best = std::max(best, client_utility(pr, p[k], dev, k));
      }
      gain += best - here;
    }
    CHECK(g1.total_gain <= gain + 1e-12);
  }
}

TEST_CASE("payment grid search") {
  GameProfile homo = testutil::homogeneous_profile({1, 1});
  double c = homo.clients[0].cost;
  std::vector<double> caps{1.2 * c, 1.2 * c};
  GridPaymentResult flat = grid_payment_search(homo, caps, 13);
  CHECK(flat.p == std::vector<double>{0.0, 0.0});
  CHECK(std::abs((flat.server_utility) - (0.0)) <= 1e-12);

  GameProfile pr = testutil::random_profile(31, 2, 1);
  std::vector<double> cap2{1.2 * pr.clients[0].cost, 1.2 * pr.clients[1].cost};
  const int g = 21;
  GridPaymentResult best = grid_payment_search(pr, cap2, g);
  double spend = best.p[0] * best.x[0] + best.p[1] * best.x[1];
  CHECK(spend <= pr.budget + 1e-9);
  CHECK(std::abs((best.server_utility) - (server_utility(pr, best.p, best.x))) <= 1e-12);
  EquilibriumResult eq = nash_solve(pr, best.p);
  REQUIRE(eq.converged);
  for (int k = 0; k < 2; ++k) CHECK(std::abs(eq.x[k] - best.x[k]) <= 1e-8);

  Rng rng(37);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> cell(2);
    for (int k = 0; k < 2; ++k)
      cell[k] = cap2[k] * std::round(rng.uniform() * (g - 1)) / (g - 1);
    EquilibriumResult ce = nash_solve(pr, cell);
    if (!ce.converged) continue;
    double cs = cell[0] * ce.x[0] + cell[1] * ce.x[1];
    if (cs > pr.budget + 1e-9) continue;
    CHECK(server_utility(pr, cell, ce.x) <= best.server_utility + 1e-12);
  }
}

TEST_CASE("central differences") {
  auto cubic = [](double x) { return x * x * x; };
  double d1 = finite_difference(cubic, 0.7, 1e-5, 1);
  CHECK(std::abs(d1 - 3.0 * 0.49) / (3.0 * 0.49) <= 1e-6);
  double d2 = finite_difference(cubic, 0.7, 1e-4, 2);
  CHECK(std::abs(d2 - 6.0 * 0.7) / (6.0 * 0.7) <= 1e-6);
  CHECK_THROWS_AS(finite_difference(cubic, 0.0, 1e-5, 3), std::invalid_argument);
  CHECK_THROWS_AS(finite_difference(cubic, 0.0, 0.0, 1), std::invalid_argument);
}
