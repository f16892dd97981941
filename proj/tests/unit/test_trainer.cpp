// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "sagmm/errors.hpp"
#include "sagmm/trainer.hpp"

using namespace sagmm;
using data::Split;

namespace {

TrainConfig small(const std::string& extra = "") {
  return parse_config(R"({"epochs": 30, "hidden": 8, "proj_dim": 8, "pe_dim": 4,
    "data": {"sbm": {"sizes": [40, 40], "p_in": 0.2, "p_out": 0.02, "feature_dim": 4, "seed": 1}})" +
                      extra + "}");
}

std::map<std::string, Matrix> block_state(const moe::MoeModel& m, std::size_t j) {
  std::map<std::string, Matrix> out;
  for (const ad::Parameter* p : m.pool()[j].parameters()) out[p->name()] = p->value();
  return out;
}

}  // namespace

TEST(Train, SingleExpertLossDecreases) {
  TrainConfig c = small(R"(, "epochs": 50, "experts": ["gcn"], "pruning": false)");
  const auto ds = train::make_dataset(c);
  const auto r = train::train(ds, c);
  ASSERT_EQ(r.log.size(), 50u);
  EXPECT_LT(r.log.back().train_loss, 0.7 * r.log.front().train_loss);
  EXPECT_GT(r.best_val, 0.8);
}

TEST(Train, SeedDeterminism) {
  TrainConfig c = small(R"(, "batch_size": 32, "dropout": 0.2, "epochs": 12, "prune_interval": 5)");
  const auto ds = train::make_dataset(c);
  const auto a = train::train(ds, c), b = train::train(ds, c);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].train_loss, b.log[i].train_loss);
    EXPECT_EQ(a.log[i].val_metric, b.log[i].val_metric);
    EXPECT_EQ(a.log[i].mean_k_u, b.log[i].mean_k_u);
  }
  EXPECT_EQ(a.best.params, b.best.params);
  c.seed = 9;
  const auto d = train::train(ds, c);
  EXPECT_NE(a.log.back().train_loss, d.log.back().train_loss);
}

TEST(Train, NoPruneWhenIntervalExceedsEpochs) {
  TrainConfig c = small(R"(, "epochs": 10, "prune_interval": 11, "eta": 1.0)");
  const auto ds = train::make_dataset(c);
  const auto r = train::train(ds, c);
  EXPECT_TRUE(r.prunes.empty());
  for (const auto& l : r.log) EXPECT_EQ(l.alive_experts, 8u);
}

TEST(Train, AlphaOneImportanceIsLastBatchGamma) {
  TrainConfig c = small(R"(, "epochs": 3, "alpha": 1.0, "pruning": false, "batch_size": 20)");
  const auto ds = train::make_dataset(c);
  std::vector<double> last;
  train::TrainOptions o;
  o.on_step = [&](const train::StepInfo& s) { last = s.gamma; };
  const auto r = train::train(ds, c, o);
  ASSERT_EQ(r.importance.size(), last.size());
  for (std::size_t j = 0; j < last.size(); ++j) EXPECT_EQ(r.importance[j], last[j]);
}

TEST(Train, OnlyActiveExpertsChange) {
  // top-k with k = 1 and small batches leaves some alive experts unselected
  TrainConfig c = small(R"(, "epochs": 4, "gating_mode": "noisy_topk", "topk_k": 1, "batch_size": 6, "pruning": false)");
  const auto ds = train::make_dataset(c);
  std::vector<std::map<std::string, Matrix>> prev;
  std::size_t idle_checks = 0;
  train::TrainOptions o;
  o.on_step = [&](const train::StepInfo& s) {
    const std::size_t N = s.model.pool().initial_count();
    if (!prev.empty())
      for (std::size_t j = 0; j < N; ++j) {
        if (std::find(s.active.begin(), s.active.end(), j) != s.active.end()) continue;
        EXPECT_EQ(block_state(s.model, j), prev[j]) << "expert " << j << " moved while inactive";
        ++idle_checks;
      }
    prev.clear();
    for (std::size_t j = 0; j < N; ++j) prev.push_back(block_state(s.model, j));
  };
  train::train(ds, c, o);
  EXPECT_GT(idle_checks, 0u);
}

TEST(Train, PrunedExpertsStayFrozen) {
  TrainConfig c = small(R"(, "epochs": 12, "prune_interval": 4, "eta": 0.99, "prune_delta": 1.0)");
  const auto ds = train::make_dataset(c);
  std::map<std::size_t, std::map<std::string, Matrix>> frozen;
  std::size_t last_alive = 8;
  train::TrainOptions o;
  o.on_step = [&](const train::StepInfo& s) {
    const auto& pool = s.model.pool();
    EXPECT_LE(pool.alive_count(), last_alive);  // monotone without rollbacks
    last_alive = pool.alive_count();
    for (std::size_t j = 0; j < pool.initial_count(); ++j) {
      if (pool.alive(j)) continue;
      EXPECT_EQ(std::find(s.active.begin(), s.active.end(), j), s.active.end());
      auto [it, inserted] = frozen.try_emplace(j, block_state(s.model, j));
      if (!inserted) EXPECT_EQ(block_state(s.model, j), it->second);
    }
  };
  const auto r = train::train(ds, c, o);
  EXPECT_EQ(r.rollbacks, 0u);
  EXPECT_FALSE(frozen.empty());
}

TEST(Train, BestCheckpointRule) {
  TrainConfig c = small(R"(, "epochs": 25)");
  const auto ds = train::make_dataset(c);
  const auto r = train::train(ds, c);
  double best = -1;
  std::size_t arg = 0;
  for (const auto& l : r.log)
    if (l.val_metric > best) {
      best = l.val_metric;
      arg = l.epoch;
    }
  EXPECT_EQ(r.best_epoch, arg);
  EXPECT_EQ(r.best_val, best);
  EXPECT_EQ(r.test_at_best, r.log[arg - 1].test_metric);
  EXPECT_EQ(train::evaluate(ds, r.best, Split::Test).value, r.test_at_best);
  EXPECT_EQ(train::evaluate(ds, r.best, Split::Valid).value, r.best_val);
}

TEST(Train, FallbackKeepsEveryNodeRouted) {
  TrainConfig c = small(R"(, "epochs": 10, "gate_init": "randn", "batch_size": 16)");
  const auto ds = train::make_dataset(c);
  std::size_t steps = 0;
  train::TrainOptions o;
  o.on_step = [&](const train::StepInfo& s) {
    EXPECT_GE(s.min_k, 1u);
    ++steps;
  };
  const auto r = train::train(ds, c, o);
  EXPECT_EQ(steps, r.steps);
  EXPECT_GE(r.min_k, 1u);
  EXPECT_EQ(r.k_histogram.count(0), 0u);
}

TEST(Train, NonFiniteLossAbortsWithDiagnostics) {
  TrainConfig c = small(R"(, "lr": 1e6, "epochs": 50)");
  const auto ds = train::make_dataset(c);
  try {
    train::train(ds, c);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("epoch"), std::string::npos) << m;
    EXPECT_NE(m.find("gamma per expert"), std::string::npos) << m;
    EXPECT_NE(m.find("gate stats"), std::string::npos) << m;
  }
}

TEST(Train, NoSignalGivesPriorAccuracy) {
  TrainConfig c = parse_config(R"({"epochs": 20, "hidden": 8, "proj_dim": 8, "pe_dim": 4, "experts": ["gcn"],
    "data": {"sbm": {"sizes": [150, 450], "p_in": 0.05, "p_out": 0.05, "signal": 0.0, "seed": 2}}})");
  const auto ds = train::make_dataset(c);
  const auto r = train::train(ds, c);
  const auto& test = ds.split(Split::Test);
  double prior = 0;
  for (std::size_t u : test) prior += ds.labels[u] == 1 ? 1 : 0;
  prior /= static_cast<double>(test.size());
  EXPECT_NEAR(r.test_at_best, prior, 0.08);
}

TEST(Train, AllTasksRun) {
  for (const char* extra : {R"({"task": "graph_cls", "data": {"source": "toy_graph"}})",
                            R"({"task": "graph_reg", "data": {"source": "toy_graph"}, "batch_size": 16})",
                            R"({"task": "link_pred", "data": {"source": "sbm_link", "sbm": {"sizes": [60, 60]}}, "hits_k": 10})"}) {
    TrainConfig c = parse_config(extra, {{"epochs", "15"}, {"hidden", "8"}, {"proj_dim", "8"}, {"pe_dim", "3"}});
    const auto ds = train::make_dataset(c);
    const auto r = train::train(ds, c);
    EXPECT_EQ(r.log.size(), 15u) << extra;
    EXPECT_TRUE(std::isfinite(r.test_at_best)) << extra;
    EXPECT_NO_THROW(train::evaluate(ds, r.best, Split::Test)) << extra;
  }
}

TEST(Train, GraphRegressionLearnsDensity) {
  TrainConfig c = parse_config(R"({"task": "graph_reg", "epochs": 100, "data": {"source": "toy_graph"}, "hidden": 16,
                                   "proj_dim": 16, "pe_dim": 3, "experts": ["gin"], "lr": 0.05})");
  const auto ds = train::make_dataset(c);
  const auto r = train::train(ds, c);
  double mean = 0;
  for (std::size_t g : ds.split(Split::Test)) mean += ds.targets(g, 0);
  mean /= static_cast<double>(ds.split(Split::Test).size());
  double base = 0;
  for (std::size_t g : ds.split(Split::Test)) base += (ds.targets(g, 0) - mean) * (ds.targets(g, 0) - mean);
  base = std::sqrt(base / static_cast<double>(ds.split(Split::Test).size()));
  EXPECT_LT(r.test_at_best, base);  // better than predicting the mean
}

TEST(Train, PeModeFreezesExperts) {
  TrainConfig c = small(R"(, "epochs": 10, "pe_mode": true, "pe_fraction": 0.5, "pe_epochs": 5)");
  const auto ds = train::make_dataset(c);
  const auto r = train::train(ds, c);
  ASSERT_FALSE(r.pretrained.empty());
  for (const auto& [name, v] : r.pretrained) EXPECT_EQ(r.best.params.at(name), v) << name;
}

TEST(Train, RouterFractionSubsetsRouterStage) {
  TrainConfig c = small(R"(, "epochs": 6, "pe_mode": true, "pe_epochs": 3, "experts": ["gcn", "sage"])");
  const auto ds = train::make_dataset(c);
  const auto full = train::train(ds, c);
  c.router_fraction = 0.5;
  const auto half = train::train(ds, c);
  for (const auto& [name, v] : half.pretrained) EXPECT_EQ(full.pretrained.at(name), v) << name;
  for (const auto& [name, v] : half.pretrained) EXPECT_EQ(half.best.params.at(name), v) << name;
  EXPECT_NE(full.log.front().train_loss, half.log.front().train_loss);
}

TEST(Train, PeModeLoadsExpertCheckpoint) {
  TrainConfig c = small(R"(, "epochs": 4, "experts": ["gcn", "sage"])");
  const auto ds = train::make_dataset(c);
  const auto base = train::train(ds, c);
  const auto path = std::filesystem::temp_directory_path() / "sagmm_pe_experts.ckpt";
  save_checkpoint(base.best, path);
  TrainConfig pe = c;
  pe.pe_mode = true;
  pe.expert_checkpoint = path.string();
  const auto r = train::train(ds, pe);
  for (const auto& [name, v] : r.pretrained) EXPECT_EQ(base.best.params.at(name), v) << name;
  Checkpoint partial = base.best;
  for (auto it = partial.params.begin(); it != partial.params.end();)
    it = it->first.rfind("expert1_", 0) == 0 ? partial.params.erase(it) : std::next(it);
  save_checkpoint(partial, path);
  try {
    train::train(ds, pe);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("expert1_sage"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}

TEST(Train, FrozenEverythingKeepsLossConstant) {
  TrainConfig c = small(R"(, "epochs": 3, "experts": ["gcn", "sgc"], "pruning": false)");
  const auto ds = train::make_dataset(c);
  const auto base = train::train(ds, c);
  // evaluation twice from the same checkpoint is a pure function
  EXPECT_EQ(train::evaluate(ds, base.best, Split::Test).value, train::evaluate(ds, base.best, Split::Test).value);
}

TEST(Evaluate, EmptySplitAndMismatch) {
  TrainConfig c = small(R"(, "epochs": 2)");
  auto ds = train::make_dataset(c);
  const auto r = train::train(ds, c);
  auto empty = ds;
  empty.splits[2].clear();
  EXPECT_THROW(train::evaluate(empty, r.best, Split::Test), InputError);
  TrainConfig wide = c;
  wide.data.sbm.feature_dim = 6;
  const auto other = train::make_dataset(wide);
  EXPECT_THROW(train::evaluate(other, r.best, Split::Test), DataError);
}
