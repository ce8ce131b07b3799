#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fedgame {

// Deterministic random source. All randomness in the library flows through this
// class, seeded once per scenario; the engine is std::mt19937_64, whose output
// sequence is fixed by the C++ standard, and every variate transform below is
// implemented here (no std::*_distribution), so a given seed produces the same
// draws on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal();

  // Unit-scale gamma variate, Marsaglia-Tsang squeeze for shape >= 1 and the
  // power boost for shape < 1.
  double gamma(double shape);

  // Symmetric Dirichlet over n components with concentration conc.
  std::vector<double> dirichlet(double conc, int n);

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fedgame
