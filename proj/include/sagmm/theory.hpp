// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sagmm/graph.hpp"
#include "sagmm/matrix.hpp"

namespace sagmm::theory {

/// Logistic of the coordinate sum, evaluated without overflow.
double posterior_eta(std::span<const double> x) noexcept;

/// -y log(x + eps0) - (1 - y) log(1 - x + eps0).
double stable_bce(double x, int y, double eps0) noexcept;

/// ln(2k^2) - ln(2k(1 + eps0) - 1). Requires k >= 2 and eps0 > 0.
double bound_f(std::size_t k, double eps0);
/// -ln(eps0).
double bound_u(double eps0);

struct BoundValue {
  double raw = 0.0;    // (U - f) / (U - a)
  double value = 0.0;  // raw clamped to [0, 1]
  bool vacuous = false;
};
/// Throws InputError unless 0 < a < U. A raw value above 1 is clamped and a
/// warning is written to stderr.
BoundValue theorem_bound(std::size_t k, double eps0, double a);

struct Interval {
  double estimate = 0.0;
  double low = 0.0;
  double high = 0.0;
  [[nodiscard]] double half_width() const noexcept { return 0.5 * (high - low); }
};
/// Wilson score interval; z = 2.5758 is the two-sided 99% quantile.
Interval wilson(std::uint64_t successes, std::uint64_t trials, double z = 2.5758);

struct SketchSpec {
  std::size_t n = 0;
  std::size_t c = 0;
  std::uint64_t seed = 0;
  std::vector<std::uint32_t> h;  // [n] -> [c]
  std::vector<std::int8_t> s;    // [n] -> {-1, +1}
};
SketchSpec make_sketch(std::size_t n, std::size_t c, std::uint64_t seed);
/// CS(u)_i = sum over h(j) = i of s(j) u_j.
std::vector<double> count_sketch(std::span<const double> u, const SketchSpec& spec);

struct SketchRow {
  std::size_t dim = 0;
  std::size_t width = 0;
  std::size_t trials = 0;
  double truth = 0.0;  // <u, v>
  double mean = 0.0;   // mean of <CS(u), CS(v)> over sketch seeds
  double ci_half = 0.0;
  double rms_error = 0.0;
};
/// One fixed (u, v) pair per dim; every trial draws a fresh sketch.
std::vector<SketchRow> cs_inner_check(std::span<const std::size_t> dims, std::span<const std::size_t> widths,
                                      std::size_t trials, std::uint64_t seed = 0);

struct McConfig {
  std::size_t k = 2;
  double eps0 = 1e-3;
  double a = 0.3;
  std::uint64_t samples = 100000;
  std::size_t d = 8;   // feature dim
  std::size_t n = 64;  // nodes in the convolution graph
  std::size_t c = 16;  // sketch width
  std::uint64_t seed = 0;
  std::uint64_t chunk = 10000;
  unsigned threads = 0;  // 0 = hardware concurrency
};
struct McResult {
  Interval prob;
  std::uint64_t hits = 0;
  std::uint64_t samples = 0;
};
/// Fraction of sampled losses at or below a, with a 99% Wilson interval.
/// Chunks draw from their own seeds and are combined in order, so the
/// result does not depend on the thread count.
McResult monte_carlo_loss_prob(const McConfig& cfg);

struct BoundRow {
  std::size_t k = 0;
  double f = 0.0;
  BoundValue bound;
  McResult mc;
};
std::vector<BoundRow> bound_table(std::size_t k_min, std::size_t k_max, const McConfig& base);

struct GateScore {
  double alpha = 0.0;
  std::size_t skipped = 0;  // rows with |sum| < 1e-12
};
/// Sum over columns of the (population) variance of the row-normalized H.
/// Throws NumericalError when every row is degenerate.
GateScore variance_gate(const Matrix& h);

/// Star with one hub (node 0) and `leaves` leaves.
graph::Graph star(std::size_t leaves);

enum class CaseExpert { Gcn, Sage, Gin };
/// One randomly initialized expert applied to x: GCN and SAGE are a single
/// ReLU layer, GIN is a two-layer MLP over (1 + eps) x + A x.
Matrix case_expert_output(CaseExpert e, const graph::Graph& g, const Matrix& x, std::size_t width, std::uint64_t seed,
                          double gin_eps = 0.0);

struct CaseRow {
  std::uint64_t seed = 0;
  GateScore gcn, sage, gin;
};
std::vector<CaseRow> case_study(const graph::Graph& g, std::size_t seeds, std::size_t in_dim = 4, std::size_t width = 8);

}  // namespace sagmm::theory
