#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <omp.h>

#include "fedgame/oracles.hpp"
#include "fedgame/scenario.hpp"

namespace {

struct Timed {
  double seconds = 0.0;
};

template <typename F>
Timed time_best_of(int repeat, F&& f) {
  Timed t;
  t.seconds = 1e300;
  for (int r = 0; r < repeat; ++r) {
    double t0 = omp_get_wtime();
    f();
    t.seconds = std::min(t.seconds, omp_get_wtime() - t0);
  }
  return t;
}

void print_row(const char* name, double serial, double parallel, bool match) {
  std::printf("%-24s serial %8.4fs  parallel %8.4fs  speedup %5.2fx  %s\n", name, serial,
              parallel, parallel > 0.0 ? serial / parallel : 0.0,
              match ? "results identical" : "RESULTS DIFFER");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"timing harness for the parallel kernels"};
  std::uint64_t seed = 7;
  int repeat = 3;
  app.add_option("--seed", seed, "scenario seed");
  app.add_option("--repeat", repeat, "repetitions, best time kept");
  CLI11_PARSE(app, argc, argv);

  const int max_threads = omp_get_max_threads();
  std::printf("threads available: %d\n", max_threads);

  bool all_match = true;

  {
    fedgame::ScenarioConfig cfg;
    cfg.num_remaining = 8;
    cfg.num_removed = 2;
    cfg.num_classes = 6;
    cfg.points_per_class_cap = 40;
    cfg.feature_dim = 4;
    cfg.seed = seed;
    fedgame::Scenario sc = fedgame::generate_scenario(cfg);
    std::vector<fedgame::EmpiricalDistribution> dists;
    for (const auto& cl : sc.clients) dists.push_back(cl.dataset);

    fedgame::InnerProductTable ts, tp;
    Timed serial = time_best_of(repeat, [&] { ts = fedgame::build_table_serial(dists, sc.kernel); });
    Timed par = time_best_of(repeat, [&] { tp = fedgame::build_table(dists, sc.kernel); });
    bool match = ts.entries == tp.entries;
    all_match = all_match && match;
    print_row("build_table", serial.seconds, par.seconds, match);
  }

  {
    fedgame::ScenarioConfig cfg;
    cfg.num_remaining = 3;
    cfg.num_removed = 1;
    cfg.seed = seed;
    fedgame::Scenario sc = fedgame::generate_scenario(cfg);
    fedgame::GameProfile pr = fedgame::assemble_profile(sc);
    std::vector<double> p(3);
    for (int k = 0; k < 3; ++k) p[k] = 0.5 * pr.clients[k].cost;

    fedgame::GridNashResult r1, rn;
    omp_set_num_threads(1);
    Timed serial = time_best_of(repeat, [&] { r1 = fedgame::grid_nash(pr, p, 121); });
    omp_set_num_threads(max_threads);
    Timed par = time_best_of(repeat, [&] { rn = fedgame::grid_nash(pr, p, 121); });
    bool match = r1.x == rn.x && r1.total_gain == rn.total_gain;
    all_match = all_match && match;
    print_row("grid_nash", serial.seconds, par.seconds, match);
  }

  {
    fedgame::ScenarioConfig cfg;
    cfg.num_remaining = 2;
    cfg.num_removed = 1;
    cfg.budget = 2.0;
    cfg.seed = seed;
    fedgame::Scenario sc = fedgame::generate_scenario(cfg);
    fedgame::GameProfile pr = fedgame::assemble_profile(sc);
    std::vector<double> ones(2, 1.0);
    std::vector<double> caps(2);
    fedgame::OptOptions opts;
    for (int k = 0; k < 2; ++k)
      caps[k] = fedgame::budget_bisection(pr, k, fedgame::budget_share(pr, k), ones, opts);

    fedgame::GridPaymentResult r1, rn;
    omp_set_num_threads(1);
    Timed serial =
        time_best_of(repeat, [&] { r1 = fedgame::grid_payment_search(pr, caps, 15); });
    omp_set_num_threads(max_threads);
    Timed par = time_best_of(repeat, [&] { rn = fedgame::grid_payment_search(pr, caps, 15); });
    bool match = r1.p == rn.p && r1.x == rn.x && r1.server_utility == rn.server_utility;
    all_match = all_match && match;
    print_row("grid_payment_search", serial.seconds, par.seconds, match);
  }

  return all_match ? 0 : 1;
}
