#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedgame/errors.hpp"
#include "fedgame/report.hpp"

namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::string summary_line(const fedgame::RunReport& rep) {
  const auto& c = rep.canonical;
  std::string s = "mode=" + c["mode"].get<std::string>();
  s += rep.converged ? " converged=yes" : " converged=no";
  if (c.contains("result")) {
    const auto& r = c["result"];
    if (r.contains("server_utility"))
      s += " server_utility=" + std::to_string(r["server_utility"].get<double>());
    if (r.contains("spend")) s += " spend=" + std::to_string(r["spend"].get<double>());
    if (r.contains("rows"))
      s += " rows=" + std::to_string(r["rows"].size());
    if (r.contains("all_passed"))
      s += r["all_passed"].get<bool>() ? " all_passed=yes" : " all_passed=no";
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"solver and simulator for the unlearning participation game"};

  std::string mode, config_path, out_path, sweep_key;
  std::uint64_t seed_override = 0;
  double epsilon = 0.0, budget_override = 0.0;
  int grid_points = 0;
  bool quiet = false;
  std::vector<double> payment_override, sweep_values;

  app.add_option("--mode", mode, "nash | haipo | uniform | sweep | oracle-suite")
      ->required();
  app.add_option("--config", config_path, "scenario JSON file")->required();
  app.add_option("--out", out_path, "report path; omit for stdout");
  auto* opt_seed = app.add_option("--seed-override", seed_override, "replace config seed");
  auto* opt_eps = app.add_option("--epsilon", epsilon, "payment loop stopping threshold");
  auto* opt_budget =
      app.add_option("--budget-override", budget_override, "replace config budget");
  auto* opt_grid =
      app.add_option("--grid-points", grid_points, "oracle-suite cross-check resolution");
  app.add_flag("--quiet", quiet, "suppress the summary line");
  auto* opt_pay = app.add_option("--payment-override", payment_override,
                                 "nash mode: fixed payment per remaining client")
                      ->delimiter(',');
  app.add_option("--sweep-key", sweep_key, "sweep mode: numeric config field");
  app.add_option("--sweep-values", sweep_values, "sweep mode: field values")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    fedgame::RunRequest req;
    req.mode = mode;
    req.config = fedgame::load_config(config_path);
    if (opt_seed->count() > 0) req.config.seed = seed_override;
    if (opt_budget->count() > 0) req.config.budget = budget_override;
    if (opt_eps->count() > 0) req.options.epsilon = epsilon;
    if (opt_grid->count() > 0) req.grid_points = grid_points;
    if (opt_pay->count() > 0) req.payment_override = payment_override;
    req.sweep_key = sweep_key;
    req.sweep_values = sweep_values;

    fedgame::RunReport rep = fedgame::run(req);
    std::string text = fedgame::report_to_string(rep);
    if (out_path.empty()) {
      std::cout << text;
    } else {
      write_file(out_path, text);
      write_file(out_path + ".csv", rep.csv);
    }
    if (!quiet) std::cerr << summary_line(rep) << "\n";
    return rep.converged ? 0 : 3;
  } catch (const fedgame::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const fedgame::IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
