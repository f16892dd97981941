// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sagmm/errors.hpp"
#include "sagmm/theory.hpp"

using namespace sagmm;
using namespace sagmm::theory;
using sagmm::graph::Edge;
using sagmm::graph::Graph;

TEST(Eta, ZeroIsHalf) { EXPECT_DOUBLE_EQ(posterior_eta(std::vector<double>{0, 0, 0}), 0.5); }

TEST(Eta, LargeSums) {
  std::vector<double> x{25, 25};
  EXPECT_LT(1.0 - posterior_eta(x), 1e-20);
  std::vector<double> y{-400, -400};
  const double e = posterior_eta(y);
  EXPECT_TRUE(std::isfinite(e));
  EXPECT_GE(e, 0.0);
  EXPECT_LT(e, 1e-300);
}

TEST(Eta, Symmetry) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0, 5);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> x(6), mx(6);
    for (int i = 0; i < 6; ++i) mx[i] = -(x[i] = nd(rng));
    EXPECT_NEAR(posterior_eta(x) + posterior_eta(mx), 1.0, 1e-15);
  }
}

TEST(Bce, Examples) {
  EXPECT_NEAR(stable_bce(0.5, 1, 1e-15), std::log(2.0), 1e-12);
  EXPECT_NEAR(stable_bce(0.0, 1, 1e-3), 6.907755278982137, 1e-12);
  EXPECT_NEAR(stable_bce(1.0, 1, 1e-3), -std::log1p(1e-3), 1e-15);
  EXPECT_NEAR(stable_bce(1.0, 1, 1e-3), -0.0009995003330835, 1e-15);
}

TEST(Bce, Bounded) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ud(0, 1);
  for (double eps : {1e-6, 1e-3, 0.1}) {
    const double lo = -std::log(1 + eps), hi = -std::log(eps);
    for (int i = 0; i <= 1000; ++i) {
      const double x = i < 500 ? i / 499.0 : ud(rng);
      for (int y : {0, 1}) {
        const double l = stable_bce(x, y, eps);
        EXPECT_GE(l, lo - 1e-15);
        EXPECT_LE(l, hi + 1e-15);
      }
    }
  }
}

TEST(Bound, ClosedFormAtTwo) {
  // 30-digit reference evaluation.
  EXPECT_NEAR(bound_f(2, 1e-3), 0.979496807777947617, 1e-13);
  const auto b = theorem_bound(2, 1e-3, 0.3);
  EXPECT_NEAR(b.value, 0.897166771605588615, 1e-12);
  EXPECT_NEAR(b.value, 0.8972, 1e-4);
  EXPECT_FALSE(b.vacuous);
  EXPECT_NEAR(theorem_bound(8, 1e-3, 0.3).value, 0.721098332667172695, 1e-12);
}

TEST(Bound, StrictlyDecreasingInK) {
  for (double eps : {1e-4, 1e-3, 1e-2})
    for (double a : {0.1, 0.3, 1.0})
      for (std::size_t k = 2; k < 16; ++k) EXPECT_LT(theorem_bound(k + 1, eps, a).raw, theorem_bound(k, eps, a).raw);
}

TEST(Bound, VanishingEpsilonTendsToOne) {
  double prev = 0;
  for (double eps : {1e-10, 1e-50, 1e-300}) {
    const double b = theorem_bound(4, eps, 0.3).value;
    EXPECT_GT(b, prev);
    prev = b;
  }
  EXPECT_GT(prev, 0.995);
}

TEST(Bound, Errors) {
  EXPECT_THROW(theorem_bound(4, 1e-3, bound_u(1e-3)), InputError);
  EXPECT_THROW(theorem_bound(4, 1e-3, 0.0), InputError);
  EXPECT_THROW(bound_f(1, 1e-3), InputError);
  EXPECT_THROW(bound_f(3, 0.0), InputError);
}

TEST(Bound, VacuousIsClamped) {
  const auto b = theorem_bound(2, 1e-3, bound_u(1e-3) - 1e-9);
  EXPECT_TRUE(b.vacuous);
  EXPECT_GT(b.raw, 1.0);
  EXPECT_EQ(b.value, 1.0);
}

TEST(Wilson, Reference) {
  const auto w = wilson(81, 263, 1.96);
  EXPECT_NEAR(w.low, 0.255287613063669623, 1e-12);
  EXPECT_NEAR(w.high, 0.366210684053421565, 1e-12);
  EXPECT_NEAR(w.estimate, 81.0 / 263, 1e-15);
  const auto z = wilson(0, 10);
  EXPECT_EQ(z.low, 0.0);
  EXPECT_GT(z.high, 0.0);
  EXPECT_THROW(wilson(0, 0), InputError);
}

TEST(MonteCarlo, Deterministic) {
  McConfig c;
  c.k = 3;
  c.samples = 5000;
  c.chunk = 700;
  c.seed = 9;
  c.threads = 1;
  const auto a = monte_carlo_loss_prob(c);
  c.threads = 4;
  const auto b = monte_carlo_loss_prob(c);
  EXPECT_EQ(a.hits, b.hits);
  EXPECT_EQ(a.prob.estimate, b.prob.estimate);
  c.seed = 10;
  EXPECT_NE(monte_carlo_loss_prob(c).hits, a.hits);
}

TEST(MonteCarlo, BelowBound) {
  McConfig base;
  base.samples = 20000;
  for (const auto& r : bound_table(2, 8, base)) {
    EXPECT_LE(r.mc.prob.estimate, r.bound.value + r.mc.prob.half_width()) << "k=" << r.k;
    EXPECT_EQ(r.mc.samples, 20000U);
  }
}

TEST(MonteCarlo, VacuousRegime) {
  McConfig c;
  c.k = 2;
  c.samples = 4000;
  double prev = 0;
  for (double gap : {1.0, 1e-3, 1e-6}) {
    c.a = bound_u(c.eps0) - gap;
    const double p = monte_carlo_loss_prob(c).prob.estimate;
    EXPECT_GE(p, prev);
    prev = p;
  }
  EXPECT_GT(prev, 0.98);
  EXPECT_TRUE(theorem_bound(2, c.eps0, c.a).vacuous);
}

TEST(Sketch, UnitVectorWidthOne) {
  const auto sp = make_sketch(5, 1, 42);
  std::vector<double> e1{1, 0, 0, 0, 0};
  const auto cs = count_sketch(e1, sp);
  ASSERT_EQ(cs.size(), 1U);
  EXPECT_EQ(std::abs(cs[0]), 1.0);
  EXPECT_EQ(cs[0] * cs[0], 1.0);
}

TEST(Sketch, DefinitionAndDeterminism) {
  const auto a = make_sketch(50, 7, 5), b = make_sketch(50, 7, 5), c = make_sketch(50, 7, 6);
  EXPECT_EQ(a.h, b.h);
  EXPECT_EQ(a.s, b.s);
  EXPECT_TRUE(a.h != c.h || a.s != c.s);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  std::vector<double> u(50);
  for (auto& x : u) x = nd(rng);
  const auto cs = count_sketch(u, a);
  for (std::size_t i = 0; i < 7; ++i) {
    double ref = 0;
    for (std::size_t j = 0; j < 50; ++j)
      if (a.h[j] == i) ref += a.s[j] * u[j];
    EXPECT_NEAR(cs[i], ref, 1e-14);
  }
  EXPECT_THROW(count_sketch(std::vector<double>(3), a), InputError);
}

TEST(Sketch, UnbiasedAndWidthMonotone) {
  const std::vector<std::size_t> dims{100}, widths{8, 64};
  const auto rows = cs_inner_check(dims, widths, 10000, 0);
  ASSERT_EQ(rows.size(), 2U);
  for (const auto& r : rows) EXPECT_LE(std::abs(r.mean - r.truth), r.ci_half) << "width " << r.width;
  EXPECT_LT(rows[1].rms_error, rows[0].rms_error);
}

TEST(VarianceGate, HandOracle) {
  Matrix h{{1, 0}, {0, 1}};
  EXPECT_NEAR(variance_gate(h).alpha, 0.5, 1e-15);
  Matrix p{{1, 2, 3}, {2, 4, 6}, {0.5, 1, 1.5}};
  EXPECT_LE(variance_gate(p).alpha, 1e-15);
}

TEST(VarianceGate, ScaleInvariant) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> ud(0.1, 2);
  Matrix h(7, 4);
  for (std::size_t i = 0; i < 28; ++i) h.data()[i] = ud(rng);
  Matrix s = h;
  for (std::size_t i = 0; i < 28; ++i) s.data()[i] *= 3.7;
  EXPECT_NEAR(variance_gate(h).alpha, variance_gate(s).alpha, 1e-14);
}

TEST(VarianceGate, DegenerateRows) {
  Matrix h{{1, 0}, {0, 0}, {0, 1}, {1, -1}};
  const auto g = variance_gate(h);
  EXPECT_EQ(g.skipped, 2U);
  EXPECT_NEAR(g.alpha, 0.5, 1e-15);
  EXPECT_THROW(variance_gate(Matrix(3, 2, 0.0)), NumericalError);
}

TEST(CaseStudy, StarSeparatesGin) {
  const Graph s3 = star(3);
  EXPECT_EQ(s3.num_nodes(), 4U);
  const auto rows = case_study(s3, 100);
  int gin_pos = 0;
  for (const auto& r : rows) {
    EXPECT_LE(r.gcn.alpha, 1e-12);
    EXPECT_LE(r.sage.alpha, 1e-12);
    gin_pos += r.gin.alpha > 1e-6;
  }
  EXPECT_GE(gin_pos, 95);
}

TEST(CaseStudy, RegularGraphHidesGin) {
  // On a cycle every node sees the same input, so GIN rows coincide too.
  std::vector<Edge> e{{0, 1}, {1, 2}, {2, 3}, {3, 0}};
  const auto rows = case_study(Graph::from_edges(e, 4), 20);
  for (const auto& r : rows) EXPECT_LE(r.gin.alpha, 1e-12);
}
