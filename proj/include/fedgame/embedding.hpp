#pragma once

#include <span>
#include <vector>

namespace fedgame {

using SamplePoint = std::vector<double>;

// Finite weighted point set standing in for a client data distribution.
struct EmpiricalDistribution {
  std::vector<SamplePoint> points;
  std::vector<double> weights;  // nonnegative, sum to 1

  static EmpiricalDistribution uniform(std::vector<SamplePoint> pts);
  std::size_t dim() const;
  // Throws ConfigError on empty/ragged points, non-finite coordinates, or
  // weights that are negative or do not sum to 1 within 1e-12.
  void validate() const;
};

enum class KernelFamily { Rbf, Linear };

struct KernelSpec {
  KernelFamily family = KernelFamily::Rbf;
  double sigma = 1.0;  // Rbf bandwidth, ignored for Linear

  static KernelSpec rbf(double sigma) { return {KernelFamily::Rbf, sigma}; }
  static KernelSpec linear() { return {KernelFamily::Linear, 0.0}; }
};

double kernel_eval(const KernelSpec& spec, const SamplePoint& a, const SamplePoint& b);

// Bandwidth from the median pairwise squared distance (sigma^2 = median,
// returns sigma). Even pair counts take the midpoint of the two middle values.
// A zero median falls back to the smallest nonzero squared distance; all
// points identical is an IntegrityError.
double median_heuristic(const std::vector<SamplePoint>& points);

// Inner product of the two mean embeddings: a weighted double sum of kernel
// evaluations, accumulated in fixed row-major order (a outer, b inner).
double kme_inner(const EmpiricalDistribution& a, const EmpiricalDistribution& b,
                 const KernelSpec& spec);

// Symmetric table of mean-embedding inner products between base distributions.
// All downstream geometry is bilinear algebra over this table.
struct InnerProductTable {
  int bases = 0;
  std::vector<double> entries;  // bases x bases, row-major

  double at(int a, int b) const { return entries[static_cast<std::size_t>(a) * bases + b]; }
  double trace() const;
};

// Parallel builder (one table entry per task, upper triangle mirrored; the sum
// inside each entry keeps its fixed row-major order, so results are bit-stable
// across thread counts and identical to the serial builder).
InnerProductTable build_table(const std::vector<EmpiricalDistribution>& dists,
                              const KernelSpec& spec);
InnerProductTable build_table_serial(const std::vector<EmpiricalDistribution>& dists,
                                     const KernelSpec& spec);

// Symmetry must be exact (builder mirrors entries); smallest eigenvalue must be
// >= -1e-8 times the trace. Violations throw IntegrityError.
void validate_table(const InnerProductTable& t);

// Element of the span of the base embeddings, stored as coefficients.
struct WeightedEmbedding {
  std::vector<double> coeffs;
};

WeightedEmbedding unit_embedding(int bases, int index);

double table_inner(const InnerProductTable& t, const WeightedEmbedding& a,
                   const WeightedEmbedding& b);

// Squared RKHS distance via the table. Tiny negative round-off (magnitude up
// to 1e-9 times the trace) clamps to zero; anything more negative throws
// IntegrityError.
double dist_sq(const InnerProductTable& t, const WeightedEmbedding& a,
               const WeightedEmbedding& b);

// Participation-weighted mixture weights c_i = alpha_i x_i / sum_j alpha_j x_j.
// An all-zero x returns alpha itself, the limit convention that maps the empty
// mixture to the full-participation embedding.
std::vector<double> mixture_coefficients(std::span<const double> x,
                                         std::span<const double> alpha);

}  // namespace fedgame
