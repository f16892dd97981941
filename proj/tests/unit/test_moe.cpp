// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sagmm/errors.hpp"
#include "sagmm/gradcheck.hpp"
#include "sagmm/moe.hpp"

using namespace sagmm;
using namespace sagmm::moe;
using ad::Tape;
using ad::Var;

namespace {

Matrix randn(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Matrix m(r, c);
  for (double& v : m.values()) v = d(rng);
  return m;
}

graph::Graph ring(std::size_t n) {
  std::vector<graph::Edge> e;
  for (std::size_t u = 0; u < n; ++u) e.push_back({static_cast<graph::NodeId>(u), static_cast<graph::NodeId>((u + 1) % n)});
  e.push_back({0, static_cast<graph::NodeId>(n / 2)});
  return graph::Graph::from_edges(e, n);
}

ModelConfig small_config(std::vector<experts::ExpertKind> kinds, gate::GatingMode mode) {
  ModelConfig cfg;
  cfg.pool.kinds = std::move(kinds);
  cfg.pool.base.hidden = 4;
  cfg.pool.base.layers = 1;
  cfg.gate.mode = mode;
  cfg.in_dim = 3;
  cfg.ctx_dim = 5;
  cfg.proj_dim = 4;
  cfg.out_dim = 2;
  return cfg;
}

}  // namespace

TEST(Aggregate, SingleExpertIdentity) {
  std::mt19937_64 rng(1);
  Tape t;
  Matrix p = randn(5, 3, rng);
  std::vector<Var> proj{t.constant(p)};
  EXPECT_EQ(aggregate(proj, t.constant(Matrix(5, 1, 1.0)), 3).value(), p);
}

TEST(Aggregate, ConvexAndSparse) {
  Tape t;
  Matrix a{{1, 2}}, b{{3, 6}}, c{{10, 20}};
  std::vector<Var> two{t.constant(a), t.constant(b)};
  EXPECT_EQ(aggregate(two, t.constant(Matrix{{0.5, 0.5}}), 2).value(), (Matrix{{2, 4}}));
  std::vector<Var> three{t.constant(a), Var{}, t.constant(c)};
  Matrix y = aggregate(three, t.constant(Matrix{{0.8, 0.0, 0.6}}), 2).value();
  EXPECT_NEAR(y(0, 0), 0.8 * 1 + 0.6 * 10, 1e-15);
  EXPECT_NEAR(y(0, 1), 0.8 * 2 + 0.6 * 20, 1e-15);
}

TEST(Contribution, Examples) {
  const std::vector<double> zero{0.0, 0.0};
  EXPECT_EQ(contribution_score(zero, Matrix{{1, 2}, {3, 4}}), 0.0);
  const std::vector<double> one{1.0};
  EXPECT_DOUBLE_EQ(contribution_score(one, Matrix{{3, 4}}), 5.0);
  const std::vector<double> equal{0.5, 0.5};
  EXPECT_DOUBLE_EQ(contribution_score(equal, Matrix{{1, -2}, {-1, 2}}), 0.0);
}

TEST(AuxLosses, Optimum) {
  Tape t;
  const std::vector<bool> alive(2, true);
  AuxLosses a = aux_losses(t.constant(Matrix{{1, 0}, {0, 1}}), alive);
  EXPECT_NEAR(a.importance.item(), 0.0, 1e-15);
  EXPECT_NEAR(a.diversity.item(), 0.0, 1e-15);
}

TEST(AuxLosses, OneHotLoadIsNMinusOne) {
  Tape t;
  for (std::size_t N : {2u, 3u, 5u, 8u}) {
    Matrix g(4, N);
    for (std::size_t u = 0; u < 4; ++u) g(u, 0) = 0.7;
    const std::vector<bool> alive(N, true);
    EXPECT_NEAR(aux_losses(t.constant(g), alive).importance.item(), static_cast<double>(N - 1), 1e-9);
  }
}

TEST(AuxLosses, IdenticalColumns) {
  Tape t;
  const std::vector<bool> alive(2, true);
  AuxLosses a = aux_losses(t.constant(Matrix{{0.3, 0.3}, {0.9, 0.9}}), alive);
  EXPECT_NEAR(a.diversity.item(), std::sqrt(2.0), 1e-9);
}

TEST(AuxLosses, SingleAliveIsZeroAndPrunedIgnored) {
  Tape t;
  const std::vector<bool> one{false, true};
  AuxLosses a = aux_losses(t.constant(Matrix{{0.3, 0.3}, {0.9, 0.1}}), one);
  EXPECT_EQ(a.importance.item(), 0.0);
  EXPECT_EQ(a.diversity.item(), 0.0);
  const std::vector<bool> most{true, false, true};
  AuxLosses b = aux_losses(t.constant(Matrix{{1, 5, 0}, {0, 5, 1}}), most);
  EXPECT_NEAR(b.importance.item(), 0.0, 1e-12);
}

TEST(AuxLosses, NonNegativeAndDifferentiable) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Matrix g0(6, 4);
  for (double& v : g0.values()) v = u(rng);
  ad::Parameter g("g", g0);
  const std::vector<bool> alive{true, true, false, true};
  ad::LossBuilder loss = [&](Tape& t) {
    AuxLosses a = aux_losses(t.param(g), alive);
    EXPECT_GE(a.importance.item(), 0.0);
    EXPECT_GE(a.diversity.item(), 0.0);
    return ad::add(a.importance, a.diversity);
  };
  ad::Parameter* ps[] = {&g};
  EXPECT_LT(ad::grad_check(loss, ps).max_rel_error, 1e-6);
}

TEST(Importance, UpdateRule) {
  const std::vector<bool> alive{true};
  const std::vector<double> two{2.0};
  ImportanceTracker half(1, 0.5, 0.5);
  half.update(two, alive);
  EXPECT_DOUBLE_EQ(half.scores()[0], 1.0);
  ImportanceTracker none(1, 0.0, 0.5);
  none.update(two, alive);
  EXPECT_DOUBLE_EQ(none.scores()[0], 0.0);
  ImportanceTracker full(1, 1.0, 0.5);
  full.update(two, alive);
  EXPECT_DOUBLE_EQ(full.scores()[0], 2.0);
  EXPECT_THROW(ImportanceTracker(1, 1.5, 0.5), ConfigError);
}

TEST(Importance, PrunedEntriesFrozen) {
  ImportanceTracker t(2, 0.5, 0.5);
  const std::vector<double> g{4.0, 4.0};
  t.update(g, {true, false});
  EXPECT_EQ(t.scores()[1], 0.0);
  EXPECT_EQ(t.scores()[0], 2.0);
}

TEST(Importance, EmaStaysInsideHull) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> a(0, 1), g(0.2, 0.9);
  for (int trial = 0; trial < 100; ++trial) {
    ImportanceTracker t(3, a(rng), 0.5);
    const std::vector<double> init{0.5, 0.1, 1.4};
    t.set_scores(init);
    const std::vector<bool> alive(3, true);
    for (int step = 0; step < 30; ++step) {
      const std::vector<double> gamma{g(rng), g(rng), g(rng)};
      t.update(gamma, alive);
      for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_GE(t.scores()[j], std::min(init[j], 0.2) - 1e-15);
        EXPECT_LE(t.scores()[j], std::max(init[j], 0.9) + 1e-15);
      }
    }
  }
}

TEST(Importance, PruneCandidates) {
  ImportanceTracker t(3, 0.5, 0.3);
  t.set_scores({0.9, 0.05, 0.8});
  const std::vector<bool> alive(3, true);
  EXPECT_EQ(t.prune_candidates(alive), std::vector<std::size_t>{1});
  t.set_eta(1.1);
  EXPECT_EQ(t.prune_candidates(alive), (std::vector<std::size_t>{1, 2}));
  t.set_scores({0.0, 0.0, 0.0});
  EXPECT_EQ(t.prune_candidates(alive), (std::vector<std::size_t>{1, 2}));
}

TEST(Model, SparseActivationSkipsUnselectedExperts) {
  using experts::ExpertKind;
  MoeModel m(small_config({ExpertKind::GCN, ExpertKind::SGC, ExpertKind::GraphSAGE}, gate::GatingMode::TopAny), 1);
  m.router().find("gate.w_g")->value().fill(0.0);
  m.router().find("gate.b_g")->value() = Matrix{{10, -10, 10}};
  graph::Graph g = ring(6);
  experts::Propagation prop(g);
  std::mt19937_64 rng(2);
  Matrix x = randn(6, 3, rng), ctx = randn(6, 5, rng);
  Tape t;
  ForwardResult r = m.forward(t, prop, x, ctx, false, nullptr);
  EXPECT_EQ(r.active, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(m.pool()[1].evaluations(), 0u);
  EXPECT_EQ(m.pool()[0].evaluations(), 1u);
  EXPECT_TRUE(r.expert_values[1].empty());
}

TEST(Model, PrunedExpertsLeaveTrainableSet) {
  using experts::ExpertKind;
  MoeModel m(small_config({ExpertKind::GCN, ExpertKind::SGC}, gate::GatingMode::Taag), 1);
  const std::size_t before = m.trainable().size();
  m.pool().set_alive(1, false);
  EXPECT_EQ(m.trainable().size(), before - m.expert_block(1).size());
  m.freeze_experts(true);
  for (ad::Parameter* p : m.trainable()) EXPECT_EQ(p->name().find("expert"), std::string::npos);
}

TEST(Model, StateRoundTrip) {
  using experts::ExpertKind;
  MoeModel a(small_config({ExpertKind::GCN, ExpertKind::GIN}, gate::GatingMode::Taag), 1);
  MoeModel b(small_config({ExpertKind::GCN, ExpertKind::GIN}, gate::GatingMode::Taag), 2);
  b.load_state(a.state());
  EXPECT_EQ(a.state(), b.state());
  auto s = a.state();
  s.erase("head.w");
  EXPECT_THROW(b.load_state(s), DataError);
}

TEST(Model, FullGradientCheck) {
  using experts::ExpertKind;
  ModelConfig cfg = small_config({ExpertKind::GCN, ExpertKind::GAT, ExpertKind::GIN}, gate::GatingMode::Taag);
  cfg.gate.mask_gradient = ad::MaskGradient::Exact;
  cfg.pool.base.bias_init_std = 0.1;
  MoeModel m(cfg, 4);
  graph::Graph g = ring(8);
  experts::Propagation prop(g);
  std::mt19937_64 rng(6);
  Matrix x = randn(8, 3, rng), ctx = randn(8, 5, rng);
  const std::vector<int> labels{0, 1, 1, 0, 1, 0, 0, 1};
  const std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5, 6, 7};
  ad::LossBuilder loss = [&](Tape& t) {
    ForwardResult r = m.forward(t, prop, x, ctx, false, nullptr);
    AuxLosses aux = aux_losses(r.gate.gates, m.alive_mask());
    Var l = ad::cross_entropy(m.head(t, r.mixed), labels, rows);
    return ad::add(l, ad::add(ad::scale(aux.importance, 0.1), ad::scale(aux.diversity, 0.05)));
  };
  auto ps = m.trainable();
  auto rep = ad::grad_check(loss, ps);
  EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst.parameter << "[" << rep.worst.index << "]";
}

TEST(Prune, ThresholdAndRollback) {
  using experts::ExpertKind;
  MoeModel m(small_config({ExpertKind::GCN, ExpertKind::SGC, ExpertKind::GIN}, gate::GatingMode::Taag), 1);
  PruneController pc(3, 0.5, 0.3, 2, 0.005);
  pc.tracker().set_scores({0.9, 0.05, 0.8});
  const Matrix w_before = m.expert_block(1)[0]->value();

  EXPECT_FALSE(pc.on_epoch_end(1, 0.80, m));  // not a prune epoch
  EXPECT_TRUE(pc.on_epoch_end(2, 0.80, m));
  EXPECT_FALSE(m.pool().alive(1));
  EXPECT_EQ(m.pool().alive_count(), 2u);
  EXPECT_EQ(pc.pruned_at(1), 2u);

  m.expert_block(1)[0]->value().fill(123.0);  // anything that happens while pruned is undone
  EXPECT_TRUE(pc.on_epoch_end(3, 0.70, m));   // drop of 0.10 > delta
  EXPECT_TRUE(m.pool().alive(1));
  EXPECT_EQ(m.expert_block(1)[0]->value(), w_before);
  EXPECT_DOUBLE_EQ(pc.tracker().eta(), 0.15);
  EXPECT_EQ(pc.rollbacks(), 1u);
  EXPECT_FALSE(pc.pruned_at(1).has_value());
  EXPECT_EQ(pc.history().back().action, PruneAction::Restored);
}

TEST(Prune, SmallDropKeepsPrune) {
  using experts::ExpertKind;
  MoeModel m(small_config({ExpertKind::GCN, ExpertKind::SGC}, gate::GatingMode::Taag), 1);
  PruneController pc(2, 0.5, 0.5, 1, 0.005);
  pc.tracker().set_scores({1.0, 0.1});
  pc.on_epoch_end(1, 0.80, m);
  EXPECT_FALSE(m.pool().alive(1));
  pc.on_epoch_end(2, 0.797, m);
  EXPECT_FALSE(m.pool().alive(1));
  EXPECT_EQ(pc.rollbacks(), 0u);
}

TEST(Prune, AllBelowKeepsArgmax) {
  using experts::ExpertKind;
  MoeModel m(small_config({ExpertKind::GCN, ExpertKind::SGC, ExpertKind::GIN}, gate::GatingMode::Taag), 1);
  PruneController pc(3, 0.5, 1.0, 1, 0.005);
  pc.tracker().set_scores({0.2, 0.3, 0.1});
  pc.on_epoch_end(1, 0.5, m);
  EXPECT_EQ(m.pool().alive_indices(), std::vector<std::size_t>{1});
}
