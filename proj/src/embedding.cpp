#include "fedgame/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>

#include <Eigen/Dense>

#include "fedgame/errors.hpp"

namespace fedgame {

EmpiricalDistribution EmpiricalDistribution::uniform(std::vector<SamplePoint> pts) {
  EmpiricalDistribution d;
  d.points = std::move(pts);
  if (!d.points.empty())
    d.weights.assign(d.points.size(), 1.0 / static_cast<double>(d.points.size()));
  return d;
}

std::size_t EmpiricalDistribution::dim() const {
  return points.empty() ? 0 : points.front().size();
}

void EmpiricalDistribution::validate() const {
  if (points.empty()) throw ConfigError("distribution has no points");
  if (weights.size() != points.size())
    throw ConfigError("distribution weight count does not match point count");
  const std::size_t d = points.front().size();
  if (d == 0) throw ConfigError("distribution points have zero dimension");
  double sum = 0.0;
  for (const auto& p : points) {
    if (p.size() != d) throw ConfigError("distribution points have mixed dimensions");
    for (double v : p)
      if (!std::isfinite(v)) throw ConfigError("distribution point is not finite");
  }
  for (double w : weights) {
    if (!(w >= 0.0)) throw ConfigError("distribution weight is negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("distribution weights do not sum to 1");
}

double kernel_eval(const KernelSpec& spec, const SamplePoint& a, const SamplePoint& b) {
  if (a.size() != b.size()) throw std::invalid_argument("kernel arguments have mixed dimensions");
  if (spec.family == KernelFamily::Linear) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  }
  if (!(spec.sigma > 0.0)) throw ConfigError("rbf bandwidth must be positive");
  double r2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    r2 += d * d;
  }
  return std::exp(-r2 / (2.0 * spec.sigma * spec.sigma));
}

double median_heuristic(const std::vector<SamplePoint>& points) {
  const std::size_t n = points.size();
  if (n < 2) throw ConfigError("median heuristic needs at least two points");
  std::vector<double> d2;
  d2.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < points[i].size(); ++t) {
        double d = points[i][t] - points[j][t];
        s += d * d;
      }
      d2.push_back(s);
    }
  }
  std::sort(d2.begin(), d2.end());
  const std::size_t m = d2.size();
  double med = (m % 2 == 1) ? d2[m / 2] : 0.5 * (d2[m / 2 - 1] + d2[m / 2]);
  if (med <= 0.0) {
    auto it = std::find_if(d2.begin(), d2.end(), [](double v) { return v > 0.0; });
    if (it == d2.end()) throw IntegrityError("median heuristic: all points identical");
    med = *it;
  }
  return std::sqrt(med);
}

double kme_inner(const EmpiricalDistribution& a, const EmpiricalDistribution& b,
                 const KernelSpec& spec) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < b.points.size(); ++j)
      row += b.weights[j] * kernel_eval(spec, a.points[i], b.points[j]);
    s += a.weights[i] * row;
  }
  return s;
}

double InnerProductTable::trace() const {
  double t = 0.0;
  for (int i = 0; i < bases; ++i) t += at(i, i);
  return t;
}

namespace {

std::vector<std::pair<int, int>> upper_pairs(int m) {
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(m) * (m + 1) / 2);
  for (int a = 0; a < m; ++a)
    for (int b = a; b < m; ++b) pairs.emplace_back(a, b);
  return pairs;
}

}  // namespace

InnerProductTable build_table_serial(const std::vector<EmpiricalDistribution>& dists,
                                     const KernelSpec& spec) {
  const int m = static_cast<int>(dists.size());
  InnerProductTable t;
  t.bases = m;
  t.entries.assign(static_cast<std::size_t>(m) * m, 0.0);
  for (const auto& [a, b] : upper_pairs(m)) {
    double v = kme_inner(dists[a], dists[b], spec);
    t.entries[static_cast<std::size_t>(a) * m + b] = v;
    t.entries[static_cast<std::size_t>(b) * m + a] = v;
  }
  return t;
}

InnerProductTable build_table(const std::vector<EmpiricalDistribution>& dists,
                              const KernelSpec& spec) {
  const int m = static_cast<int>(dists.size());
  InnerProductTable t;
  t.bases = m;
  t.entries.assign(static_cast<std::size_t>(m) * m, 0.0);
  const auto pairs = upper_pairs(m);
  const auto n_pairs = static_cast<std::ptrdiff_t>(pairs.size());
  // One entry per task; each inner double sum keeps its serial order, so the
  // table is bitwise identical to build_table_serial for any thread count.
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t idx = 0; idx < n_pairs; ++idx) {
    const auto [a, b] = pairs[static_cast<std::size_t>(idx)];
    double v = kme_inner(dists[a], dists[b], spec);
    t.entries[static_cast<std::size_t>(a) * m + b] = v;
    t.entries[static_cast<std::size_t>(b) * m + a] = v;
  }
  return t;
}

void validate_table(const InnerProductTable& t) {
  const int m = t.bases;
  if (m <= 0 || t.entries.size() != static_cast<std::size_t>(m) * m)
    throw IntegrityError("inner product table has inconsistent shape");
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b)
      if (t.at(a, b) != t.at(b, a)) throw IntegrityError("inner product table is not symmetric");
  Eigen::Map<const Eigen::MatrixXd> mat(t.entries.data(), m, m);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mat, Eigen::EigenvaluesOnly);
  const double min_eig = es.eigenvalues().minCoeff();
  if (min_eig < -1e-8 * t.trace())
    throw IntegrityError("inner product table is not positive semidefinite");
}

WeightedEmbedding unit_embedding(int bases, int index) {
  WeightedEmbedding e;
  e.coeffs.assign(static_cast<std::size_t>(bases), 0.0);
  e.coeffs[static_cast<std::size_t>(index)] = 1.0;
  return e;
}

double table_inner(const InnerProductTable& t, const WeightedEmbedding& a,
                   const WeightedEmbedding& b) {
  const int m = t.bases;
  double s = 0.0;
  for (int i = 0; i < m; ++i) {
    if (a.coeffs[i] == 0.0) continue;
    double row = 0.0;
    for (int j = 0; j < m; ++j) row += t.at(i, j) * b.coeffs[j];
    s += a.coeffs[i] * row;
  }
  return s;
}

double dist_sq(const InnerProductTable& t, const WeightedEmbedding& a,
               const WeightedEmbedding& b) {
  const int m = t.bases;
  WeightedEmbedding w;
  w.coeffs.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) w.coeffs[i] = a.coeffs[i] - b.coeffs[i];
  double q = table_inner(t, w, w);
  if (q < 0.0) {
    if (-q <= 1e-9 * std::max(t.trace(), 0.0)) return 0.0;
    throw IntegrityError("squared distance negative beyond round-off tolerance");
  }
  return q;
}

std::vector<double> mixture_coefficients(std::span<const double> x,
                                         std::span<const double> alpha) {
  if (x.size() != alpha.size() || x.empty())
    throw std::invalid_argument("mixture needs matching nonempty x and alpha");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += alpha[i] * x[i];
  std::vector<double> c(alpha.begin(), alpha.end());
  if (s <= 0.0) return c;  // empty mixture falls back to the full-participation weights
  for (std::size_t i = 0; i < x.size(); ++i) c[i] = alpha[i] * x[i] / s;
  return c;
}

}  // namespace fedgame
