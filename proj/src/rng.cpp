#include "fedgame/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "fedgame/errors.hpp"

namespace fedgame {

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

double Rng::gamma(double shape) {
  if (!(shape > 0.0)) throw std::invalid_argument("gamma shape must be positive");
  if (shape < 1.0) {
    double u = 1.0 - uniform();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double z = normal();
    double v = 1.0 + c * z;
    if (v <= 0.0) continue;
    v = v * v * v;
    double u = 1.0 - uniform();
    if (std::log(u) < 0.5 * z * z + d - d * v + d * std::log(v)) return d * v;
  }
}

std::vector<double> Rng::dirichlet(double conc, int n) {
  if (n < 1) throw std::invalid_argument("dirichlet needs at least one component");
  std::vector<double> g(n);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    g[i] = gamma(conc);
    sum += g[i];
  }
  if (!(sum > 0.0)) throw IntegrityError("degenerate dirichlet draw");
  for (double& v : g) v /= sum;
  return g;
}

}  // namespace fedgame
