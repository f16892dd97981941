// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "sagmm/autodiff.hpp"
#include "sagmm/checkpoint.hpp"
#include "sagmm/errors.hpp"
#include "sagmm/gradcheck.hpp"
#include "sagmm/optim.hpp"

using namespace sagmm;
using namespace sagmm::ad;

namespace {

Matrix randn(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Matrix m(r, c);
  for (double& v : m.values()) v = d(rng);
  return m;
}

// Loss = sum(op(x) .* R) for a fixed random R, so every output entry matters.
using UnaryOp = std::function<Var(Tape&, Var)>;

double check_op(const UnaryOp& op, std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                double scale = 1.0) {
  Parameter x("x", randn(rows, cols, rng, scale));
  Matrix out_shape;
  {
    Tape t;
    out_shape = op(t, t.param(x)).value();
  }
  Matrix r = randn(out_shape.rows(), out_shape.cols(), rng);
  LossBuilder loss = [&](Tape& t) { return sum_all(hadamard(op(t, t.param(x)), t.constant(r))); };
  std::array<Parameter*, 1> ps{&x};
  return grad_check(loss, ps, 1e-5).max_rel_error;
}

// Keeps divisors away from zero.
Matrix away_from_zero(Matrix m) {
  for (double& v : m.values()) v = v >= 0 ? v + 0.1 : v - 0.1;
  return m;
}

}  // namespace

TEST(Ops, SigmoidAndReluPoints) {
  Tape t;
  Var x = t.variable(Matrix{{0.0, -1.0, 2.0}});
  Var s = sigmoid(x);
  EXPECT_DOUBLE_EQ(s.value()(0, 0), 0.5);
  Var r = relu(x);
  t.backward(sum_all(add(s, r)));
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(r.value()(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(r.value()(0, 2), 2.0);
  const double s2 = 1.0 / (1.0 + std::exp(-2.0));
  EXPECT_NEAR(x.grad()(0, 2), s2 * (1 - s2) + 1.0, 1e-15);
  const double s1 = 1.0 / (1.0 + std::exp(1.0));
  EXPECT_NEAR(x.grad()(0, 1), s1 * (1 - s1), 1e-15);
}

TEST(Ops, MatmulShapes) {
  Tape t;
  Parameter a("a", Matrix(2, 3, 1.0)), b("b", Matrix(3, 1, 1.0));
  Var c = matmul(t.param(a), t.param(b));
  EXPECT_EQ(c.rows(), 2u);
  EXPECT_EQ(c.cols(), 1u);
  t.backward(sum_all(c));
  EXPECT_EQ(a.grad().rows(), 2u);
  EXPECT_EQ(a.grad().cols(), 3u);
  EXPECT_EQ(b.grad().rows(), 3u);
  EXPECT_EQ(b.grad().cols(), 1u);
  EXPECT_THROW(matmul(t.param(a), t.param(a)), InputError);
}

TEST(Ops, ShapeErrors) {
  Tape t;
  Var a = t.variable(Matrix(2, 3)), b = t.variable(Matrix(3, 2));
  EXPECT_THROW(add(a, b), InputError);
  EXPECT_THROW(hadamard(a, b), InputError);
  EXPECT_THROW(add_row(a, t.variable(Matrix(1, 2))), InputError);
  EXPECT_THROW(t.backward(a), InputError);
}

TEST(Ops, UsingTwiceSumsPaths) {
  Tape t;
  Parameter p("p", Matrix{{1.5, -2.0}});
  Var x = t.param(p);
  t.backward(sum_all(add(scale(x, 3.0), hadamard(x, x))));
  EXPECT_DOUBLE_EQ(p.grad()(0, 0), 3.0 + 2 * 1.5);
  EXPECT_DOUBLE_EQ(p.grad()(0, 1), 3.0 - 4.0);
}

TEST(Ops, RandomizedFiniteDifferences) {
  std::mt19937_64 rng(42);
  const Matrix w = randn(4, 2, rng);
  const Matrix rowv = randn(1, 4, rng);
  const Matrix colv = away_from_zero(randn(3, 1, rng));
  const Matrix other = randn(3, 4, rng);
  const std::vector<std::size_t> cols{2, 0, 2};
  const std::vector<std::size_t> rows{1, 1, 0, 2};
  const std::vector<std::size_t> member{0, 1, 0};
  std::vector<std::pair<const char*, UnaryOp>> ops{
      {"matmul_left", [&](Tape& t, Var x) { return matmul(x, t.constant(w)); }},
      {"matmul_right", [&](Tape& t, Var x) { return matmul(t.constant(w.transposed()), transpose(x)); }},
      {"add", [&](Tape& t, Var x) { return add(x, t.constant(other)); }},
      {"sub", [&](Tape& t, Var x) { return sub(t.constant(other), x); }},
      {"hadamard_self", [](Tape&, Var x) { return hadamard(x, x); }},
      {"add_row", [&](Tape& t, Var x) { return add_row(x, t.constant(rowv)); }},
      {"sub_row", [&](Tape& t, Var x) { return sub_row(x, t.constant(rowv)); }},
      {"mul_row", [&](Tape& t, Var x) { return mul_row(x, t.constant(rowv)); }},
      {"mul_row_param", [&](Tape& t, Var x) { return mul_row(t.constant(other), gather_rows(x, std::vector<std::size_t>{0})); }},
      {"mul_col", [&](Tape& t, Var x) { return mul_col(x, t.constant(colv)); }},
      {"mul_col_param", [&](Tape& t, Var x) { return mul_col(t.constant(other), gather_cols(x, std::vector<std::size_t>{1})); }},
      {"div_col", [&](Tape& t, Var x) { return div_col(x, t.constant(colv)); }},
      {"div_col_param", [&](Tape& t, Var x) { return div_col(t.constant(other), add_scalar(hadamard(gather_cols(x, std::vector<std::size_t>{1}), gather_cols(x, std::vector<std::size_t>{1})), 0.5)); }},
      {"scale", [](Tape&, Var x) { return scale(x, -0.7); }},
      {"scale_by", [](Tape&, Var x) { return scale_by(x, sum_all(x)); }},
      {"concat", [&](Tape& t, Var x) { std::array<Var, 3> p{x, t.constant(other), x}; return concat_cols(p); }},
      {"gather_cols", [&](Tape&, Var x) { return gather_cols(x, cols); }},
      {"gather_rows", [&](Tape&, Var x) { return gather_rows(x, std::span(rows.data(), 3)); }},
      {"sigmoid", [](Tape&, Var x) { return sigmoid(x); }},
      {"elu", [](Tape&, Var x) { return elu(x); }},
      {"leaky", [](Tape&, Var x) { return leaky_relu(x, 0.2); }},
      {"relu", [](Tape&, Var x) { return relu(x); }},
      {"reciprocal", [](Tape&, Var x) { return reciprocal(add_scalar(hadamard(x, x), 0.5)); }},
      {"softplus", [](Tape&, Var x) { return softplus(scale(x, 3.0)); }},
      {"softmax", [](Tape&, Var x) { return row_softmax(x); }},
      {"col_sum", [](Tape&, Var x) { return col_sum(x); }},
      {"row_sum", [](Tape&, Var x) { return row_sum(x); }},
      {"frobenius", [](Tape&, Var x) { return frobenius_norm(x); }},
      {"mean_pool", [&](Tape&, Var x) { return mean_pool_rows(x, member, 2); }},
      {"normalize_cols", [](Tape&, Var x) { return normalize_cols(x, 1e-12); }},
      {"cv_squared", [](Tape&, Var x) { return cv_squared(add_scalar(col_sum(hadamard(x, x)), 0.1)); }},
  };
  for (auto& [name, op] : ops) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      std::mt19937_64 local(rng());
      worst = std::max(worst, check_op(op, 3, 4, local));
    }
    EXPECT_LT(worst, 1e-6) << name;
  }
}

TEST(Ops, SparseAndAttentionGradients) {
  std::mt19937_64 rng(5);
  const std::vector<graph::Edge> e{{0, 1}, {1, 2}, {2, 0}, {2, 3}, {3, 3}};
  graph::Graph g = graph::Graph::from_edges(e, 4);
  graph::SparseMatrix s = graph::gcn_normalized_adjacency(g);
  Parameter h("h", randn(4, 3, rng)), f("f", randn(4, 1, rng)), d("d", randn(4, 1, rng));
  Matrix r = randn(4, 3, rng);
  LossBuilder loss = [&](Tape& t) {
    Var a = graph_attention(s, t.param(h), t.param(f), t.param(d), 0.2);
    return sum_all(hadamard(add(a, spmm(s, t.param(h))), t.constant(r)));
  };
  std::array<Parameter*, 3> ps{&h, &f, &d};
  EXPECT_LT(grad_check(loss, ps).max_rel_error, 1e-6);

  Tape t;
  std::vector<double> alpha;
  graph_attention(s, t.constant(h.value()), t.constant(f.value()), t.constant(d.value()), 0.2, &alpha);
  auto rp = s.row_ptr();
  for (std::size_t u = 0; u < 4; ++u) {
    double sum = 0.0;
    for (auto k = rp[u]; k < rp[u + 1]; ++k) sum += alpha[static_cast<std::size_t>(k)];
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Ops, LossGradients) {
  std::mt19937_64 rng(8);
  Parameter z("z", randn(5, 3, rng));
  const std::vector<int> labels{2, 0, 1};
  const std::vector<std::size_t> rows{4, 0, 2};
  Matrix targets = randn(3, 3, rng);
  Matrix bits(3, 3);
  for (double& v : bits.values()) v = rng() % 2;
  const std::vector<std::pair<std::size_t, std::size_t>> pairs{{0, 1}, {2, 2}, {4, 3}};
  LossBuilder loss = [&](Tape& t) {
    Var x = t.param(z);
    Var l = add(cross_entropy(x, labels, rows), bce_with_logits(x, bits, rows));
    l = add(l, mse(x, targets, rows));
    return add(l, sum_all(pair_dot(x, pairs)));
  };
  std::array<Parameter*, 1> ps{&z};
  EXPECT_LT(grad_check(loss, ps).max_rel_error, 1e-6);
}

TEST(Ops, CrossEntropyValue) {
  Tape t;
  Var z = t.variable(Matrix{{0.0, 0.0}});
  const std::vector<int> y{1};
  const std::vector<std::size_t> r{0};
  EXPECT_NEAR(cross_entropy(z, y, r).item(), std::log(2.0), 1e-15);
}

TEST(StraightThrough, ForwardAndIdentityBackward) {
  Tape t;
  Var x = t.variable(Matrix{{0.3, 0.0, 0.0}});
  Var m = sign_straight_through(x);
  EXPECT_EQ(m.value(), (Matrix{{1, 0, 0}}));
  Matrix g{{0.5, -2.0, 7.0}};
  t.backward(sum_all(hadamard(m, t.constant(g))));
  EXPECT_EQ(x.grad(), g);
}

TEST(StraightThrough, ExactModeBlocksGradient) {
  Tape t;
  Var x = t.variable(Matrix{{0.3, -1.0}});
  Var m = sign_straight_through(x, MaskGradient::Exact);
  t.backward(sum_all(add(m, x)));
  EXPECT_EQ(x.grad(), (Matrix{{1, 1}}));
}

TEST(Dropout, ZeroRateIsIdentity) {
  std::mt19937_64 rng(1);
  Tape t;
  Var x = t.variable(Matrix(3, 3, 2.0));
  EXPECT_EQ(dropout(x, 0.0, rng).id(), x.id());
  Var y = dropout(x, 0.5, rng);
  for (double v : y.value().values()) EXPECT_TRUE(v == 0.0 || v == 4.0);
}

TEST(GradCheck, QuadraticExact) {
  auto f = [](std::span<const double> th) {
    double s = 0;
    for (double v : th) s += 0.5 * v * v;
    return s;
  };
  auto g = [](std::span<const double> th) { return std::vector<double>(th.begin(), th.end()); };
  EXPECT_LT(grad_check(f, g, {0.3, -1.2, 4.0}), 1e-9);
}

TEST(GradCheck, SigmoidChain) {
  std::mt19937_64 rng(3);
  Parameter w("w", randn(3, 3, rng));
  Matrix x = randn(4, 3, rng);
  LossBuilder loss = [&](Tape& t) { return sum_all(sigmoid(matmul(sigmoid(matmul(t.constant(x), t.param(w))), t.param(w)))); };
  std::array<Parameter*, 1> ps{&w};
  EXPECT_LT(grad_check(loss, ps).max_rel_error, 1e-6);
}

TEST(Determinism, BitIdenticalRuns) {
  auto run = [] {
    std::mt19937_64 rng(11);
    Parameter w("w", randn(4, 4, rng));
    Matrix x = randn(6, 4, rng);
    Tape t;
    Var out = row_softmax(elu(matmul(t.constant(x), t.param(w))));
    t.backward(frobenius_norm(out));
    return std::pair{out.value(), w.grad()};
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ZeroGradientNoMove) {
  Parameter p("p", Matrix{{1.0, -2.0}});
  p.accumulate_grad(Matrix(1, 2));
  Adam opt({.lr = 0.1});
  Parameter* ps[] = {&p};
  opt.step(ps);
  EXPECT_EQ(p.value(), (Matrix{{1.0, -2.0}}));
}

TEST(Adam, FirstStepMagnitude) {
  Parameter p("p", Matrix{{0.0}});
  p.accumulate_grad(Matrix{{1.0}});
  Adam opt({.lr = 1e-3});
  Parameter* ps[] = {&p};
  opt.step(ps);
  // m_hat = 1, v_hat = 1 → step = lr / (1 + eps)
  EXPECT_NEAR(p.value()(0, 0), -1e-3 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(opt.slots().at("p").step, 1);
}

TEST(Adam, ConstantGradientDescends) {
  Parameter p("p", Matrix{{5.0}});
  Adam opt({.lr = 0.05});
  Parameter* ps[] = {&p};
  for (int i = 0; i < 50; ++i) {
    p.zero_grad();
    p.accumulate_grad(Matrix{{-3.0}});
    opt.step(ps);
  }
  EXPECT_GT(p.value()(0, 0), 5.0);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  Parameter p("expert3.w0", Matrix{{1.0}});
  p.accumulate_grad(Matrix{{std::nan("")}});
  Adam opt;
  Parameter* ps[] = {&p};
  try {
    opt.step(ps);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("expert3.w0"), std::string::npos);
  }
}

TEST(Adam, MinimizesQuadratic) {
  std::mt19937_64 rng(2);
  Parameter p("p", randn(2, 2, rng));
  Adam opt({.lr = 0.05});
  Parameter* ps[] = {&p};
  for (int i = 0; i < 500; ++i) {
    p.zero_grad();
    Tape t;
    t.backward(sum_all(hadamard(t.param(p), t.param(p))));
    opt.step(ps);
  }
  for (double v : p.value().values()) EXPECT_NEAR(v, 0.0, 1e-2);
}

TEST(Checkpoint, RoundTripAndCorruption) {
  const auto dir = std::filesystem::temp_directory_path() / "sagmm_ckpt_test";
  std::filesystem::create_directories(dir);
  Checkpoint c;
  c.config_json = R"({"epochs": 3})";
  c.params["a.w"] = Matrix{{1, 2}, {3, 4}};
  c.params["b"] = Matrix(1, 3, -0.5);
  AdamSlot s;
  s.m = Matrix{{0.1}};
  s.v = Matrix{{0.2}};
  s.step = 9;
  c.optimizer["a.w"] = s;
  c.alive = {1, 0, 1};
  c.importance = {0.5, 0.0, 1.0};
  c.eta = 0.25;
  c.epoch = 17;
  save_checkpoint(c, dir / "x.ckpt");
  EXPECT_FALSE(std::filesystem::exists(dir / "x.ckpt.tmp"));
  Checkpoint r = load_checkpoint(dir / "x.ckpt");
  EXPECT_EQ(r.config_json, c.config_json);
  EXPECT_EQ(r.params, c.params);
  EXPECT_EQ(r.optimizer.at("a.w").step, 9);
  EXPECT_EQ(r.optimizer.at("a.w").v, s.v);
  EXPECT_EQ(r.alive, c.alive);
  EXPECT_EQ(r.importance, c.importance);
  EXPECT_EQ(r.eta, 0.25);
  EXPECT_EQ(r.epoch, 17);

  std::filesystem::resize_file(dir / "x.ckpt", 40);
  EXPECT_THROW(load_checkpoint(dir / "x.ckpt"), DataError);
  EXPECT_THROW(load_checkpoint(dir / "nope.ckpt"), DataError);
}
