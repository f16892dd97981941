// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [criterion numbers...]   (default: all)
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../common/oracles.hpp"
#include "sagmm/errors.hpp"
#include "sagmm/gate.hpp"
#include "sagmm/gradcheck.hpp"
#include "sagmm/moe.hpp"
#include "sagmm/theory.hpp"
#include "sagmm/trainer.hpp"

using namespace sagmm;
using ad::Tape;
using ad::Var;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt("%.4f", x);
  return s;
}

// ---- fallback bookkeeping shared by every training run (criterion 9)

struct KWatch {
  std::size_t steps = 0;
  std::size_t violations = 0;
  std::size_t runs = 0;
  std::size_t min_seen = std::numeric_limits<std::size_t>::max();
} kwatch;

train::TrainResult run(const data::Dataset& ds, const TrainConfig& cfg, const Matrix& pe) {
  train::TrainOptions o;
  o.pe = &pe;
  o.on_step = [](const train::StepInfo& s) {
    ++kwatch.steps;
    kwatch.min_seen = std::min(kwatch.min_seen, s.min_k);
    if (s.min_k < 1) ++kwatch.violations;
  };
  auto r = train::train(ds, cfg, o);
  ++kwatch.runs;
  return r;
}


TrainConfig seeded(const std::string& json, std::uint64_t seed,
                   std::vector<std::pair<std::string, std::string>> extra = {}) {
  extra.emplace_back("seed", std::to_string(seed));
  extra.emplace_back("data.sbm.seed", std::to_string(seed));
  return parse_config(json, extra);
}

// ---- 1

Outcome gradient_fidelity() {
  using experts::ExpertKind;
  std::mt19937_64 rng(11);
  std::vector<graph::Edge> edges;
  std::bernoulli_distribution coin(0.35);
  for (graph::NodeId u = 0; u < 8; ++u)
    for (graph::NodeId v = u + 1; v < 8; ++v)
      if (coin(rng)) edges.push_back({u, v});
  const graph::Graph g = graph::Graph::from_edges(edges, 8);

  moe::ModelConfig cfg;
  cfg.pool.kinds = {ExpertKind::GCN, ExpertKind::GAT, ExpertKind::GIN};
  cfg.pool.base.hidden = 4;
  cfg.pool.base.layers = 2;
  cfg.pool.base.bias_init_std = 0.1;
  cfg.gate.mode = gate::GatingMode::Taag;
  cfg.gate.mask_gradient = ad::MaskGradient::Exact;  // surrogate checked below
  cfg.in_dim = 3;
  cfg.ctx_dim = 3 + 4;
  cfg.proj_dim = 4;
  cfg.out_dim = 2;
  moe::MoeModel m(cfg, 5);
  experts::Propagation prop(g);
  const Matrix x = oracle::randn(8, 3, rng);
  const Matrix ctx = graph::context_features(g, x, 4);
  const std::vector<int> labels{0, 1, 1, 0, 1, 0, 0, 1};
  const std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5, 6, 7};
  std::size_t min_k = 99;
  ad::LossBuilder loss = [&](Tape& t) {
    moe::ForwardResult r = m.forward(t, prop, x, ctx, false, nullptr);
    for (auto k : r.gate.k) min_k = std::min(min_k, k);
    moe::AuxLosses aux = moe::aux_losses(r.gate.gates, m.alive_mask());
    Var l = ad::cross_entropy(m.head(t, r.mixed), labels, rows);
    return ad::add(l, ad::add(ad::scale(aux.importance, 0.1), ad::scale(aux.diversity, 0.05)));
  };
  auto ps = m.trainable();
  const auto rep = ad::grad_check(loss, ps, 1e-5);
  kwatch.min_seen = std::min(kwatch.min_seen, min_k);
  if (min_k < 1) ++kwatch.violations;

  // Straight-through surrogate on the hand-derived 2x2 case.
  Tape t;
  Var zp = t.variable(Matrix{{0.8, 0.3}, {0.2, 0.4}});
  Var th = t.variable(Matrix(1, 2, 0.5));
  const gate::MaskResult mk = gate::threshold_mask(zp, th, std::vector<bool>(2, true));
  t.backward(ad::sum_all(ad::hadamard(ad::hadamard(zp, mk.mask), t.constant(Matrix{{1, 2}, {3, 4}}))));
  const double st_err = std::max(max_abs_diff(zp.grad(), Matrix{{1.8, 0}, {0, 4}}),
                                 max_abs_diff(th.grad(), Matrix{{-0.8, 0}}));
  const bool pass = rep.max_rel_error < 1e-4 && st_err < 1e-12 && rep.checked > 0;
  return {pass, fmt("max rel err %.3g over %zu coords (worst %s[%zu]), tol 1e-4; straight-through 2x2 err %.1g",
                    rep.max_rel_error, rep.checked, rep.worst.parameter.c_str(), rep.worst.index, st_err)};
}

// ---- 2

Outcome sga_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> sz(2, 64), nexp(2, 8);
  std::uniform_real_distribution<double> ub(0, 1);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = sz(rng), d = 6, N = nexp(rng);
    const Matrix x = oracle::randn(n, d, rng), wq = oracle::randn(d, N, rng), wk = oracle::randn(d, N, rng),
                 wv = oracle::randn(d, N, rng), wr = oracle::randn(d, N, rng);
    std::vector<bool> alive(N, true);
    if (trial % 4 == 1) alive[N - 1] = false;
    const double beta = ub(rng);
    Tape t;
    Var z = gate::sga_scores(t, t.constant(x), t.constant(wq), t.constant(wk), t.constant(wv), t.constant(wr),
                             t.constant(Matrix{{beta}}), alive);
    worst = std::max(worst, max_abs_diff(z.value(), oracle::dense_sga(x, wq, wk, wv, wr, beta, alive)));
  }
  return {worst <= 1e-10, fmt("max abs diff %.3g over 50 trials (n <= 64), tol 1e-10", worst)};
}

// ---- 3

Outcome theorem_validity() {
  theory::McConfig base;
  base.eps0 = 1e-3;
  base.a = 0.3;
  base.samples = 100000;
  const auto rows = theory::bound_table(2, 8, base);
  bool pass = true;
  std::string detail;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const bool ok = r.mc.prob.estimate <= r.bound.value + r.mc.prob.half_width();
    const bool mono = i == 0 || r.bound.raw < rows[i - 1].bound.raw;
    pass = pass && ok && mono;
    detail += fmt("k=%zu mc %.4f<=%.4f%s; ", r.k, r.mc.prob.estimate, r.bound.value, ok && mono ? "" : " (!)");
  }
  return {pass, detail + "bound strictly decreasing in k, 1e5 samples, Wilson 99%"};
}

// ---- 4

Outcome case_study() {
  const auto rows = theory::case_study(theory::star(3), 100);
  std::size_t gin = 0;
  double gcn_max = 0, sage_max = 0;
  for (const auto& r : rows) {
    gcn_max = std::max(gcn_max, r.gcn.alpha);
    sage_max = std::max(sage_max, r.sage.alpha);
    gin += r.gin.alpha > 1e-6;
  }
  return {gcn_max <= 1e-12 && sage_max <= 1e-12 && gin >= 95,
          fmt("max alpha GCN %.2g, SAGE %.2g (tol 1e-12); GIN > 1e-6 in %zu/100 seeds (need 95)", gcn_max, sage_max,
              gin)};
}

// ---- 5

const char* kPruneJson = R"({"epochs": 100, "prune_interval": 20,
  "experts": ["gcn", "jknet", "cheb", "mixhop", "sgc", "gin", "sage", "noise"],
  "data": {"sbm": {"sizes": [500, 500], "p_in": 0.02, "p_out": 0.004}}})";

Outcome pruning_behavior() {
  std::size_t pruned_in_time = 0;
  std::vector<double> noisy, clean;
  std::string per_seed;
  for (std::uint64_t s = 0; s < 5; ++s) {
    TrainConfig c = seeded(kPruneJson, s);
    const auto ds = train::make_dataset(c);
    const Matrix pe = train::positional_encodings(ds, c.pe_dim);
    const auto r = run(ds, c, pe);
    const auto& pe7 = r.pruned_epoch.at(7);
    const bool ok = pe7.has_value() && *pe7 <= 2 * c.prune_interval;
    pruned_in_time += ok;
    noisy.push_back(r.test_at_best);
    TrainConfig cc = c;
    cc.experts.pop_back();
    clean.push_back(run(ds, cc, pe).test_at_best);
    per_seed += fmt("s%llu:%s ", static_cast<unsigned long long>(s), pe7 ? std::to_string(*pe7).c_str() : "-");
  }
  const double gap = std::abs(mean(noisy) - mean(clean));
  return {pruned_in_time >= 4 && gap <= 0.01,
          fmt("noise pruned by epoch 40 in %zu/5 seeds [%s]; test %.4f vs clean 7-expert %.4f (|diff| %.4f, tol 0.01)",
              pruned_in_time, per_seed.c_str(), mean(noisy), mean(clean), gap)};
}

// ---- 6, 7

const char* kMixedJson = R"({"epochs": 100,
  "experts": ["gcn", "jknet", "cheb", "mixhop", "gat", "sgc", "gin", "sage"],
  "data": {"sbm": {"sizes": [500, 500, 500, 500], "p_in": 0.02, "p_out": 0.001, "mixed": true, "signal": 1.5}}})";

struct MixedResults {
  bool done = false;
  std::vector<double> sagmm, wo_diverse, topk;
  std::map<std::string, std::vector<double>> singles;
} mixed;

void run_mixed() {
  if (mixed.done) return;
  const std::vector<std::string> kinds{"gcn", "jknet", "cheb", "mixhop", "gat", "sgc", "gin", "sage"};
  for (std::uint64_t s = 0; s < 5; ++s) {
    const TrainConfig c = seeded(kMixedJson, s);
    const auto ds = train::make_dataset(c);
    const Matrix pe = train::positional_encodings(ds, c.pe_dim);
    mixed.sagmm.push_back(run(ds, c, pe).test_at_best);
    mixed.wo_diverse.push_back(run(ds, seeded(kMixedJson, s, {{"diverse", "false"}}), pe).test_at_best);
    mixed.topk.push_back(run(ds, seeded(kMixedJson, s, {{"gating_mode", "noisy_topk"}}), pe).test_at_best);
    for (const auto& k : kinds)
      mixed.singles[k].push_back(
          run(ds, seeded(kMixedJson, s, {{"experts", k}, {"gating_mode", "none"}, {"pruning", "false"}}), pe)
              .test_at_best);
  }
  mixed.done = true;
}

Outcome ablation_direction() {
  run_mixed();
  const double s = mean(mixed.sagmm), wd = mean(mixed.wo_diverse), tk = mean(mixed.topk);
  return {s - wd >= 0.005 && s - tk >= 0.005,
          fmt("SAGMM %.4f [%s]; w/o diverse %.4f (gap %.4f); top-k %.4f (gap %.4f); need gaps >= 0.005", s,
              join(mixed.sagmm).c_str(), wd, s - wd, tk, s - tk)};
}

Outcome ensemble_vs_singles() {
  run_mixed();
  std::string best;
  double best_v = -1;
  std::string all;
  for (const auto& [k, v] : mixed.singles) {
    all += fmt("%s %.4f, ", k.c_str(), mean(v));
    if (mean(v) > best_v) best_v = mean(v), best = k;
  }
  const double s = mean(mixed.sagmm);
  return {s >= best_v - 0.01,
          fmt("SAGMM %.4f vs best single %s %.4f (need >= best - 0.01); singles: %s", s, best.c_str(), best_v,
              all.substr(0, all.size() - 2).c_str())};
}

// ---- 8

Outcome pe_freeze() {
  const char* json = R"({"epochs": 100, "data": {"sbm": {}}})";
  bool identical = true;
  std::size_t blocks = 0;
  std::vector<double> e2e, r50, r70;
  const auto ckpt_path = std::filesystem::temp_directory_path() / "sagmm_acceptance_experts.ckpt";
  for (std::uint64_t s = 0; s < 3; ++s) {
    const TrainConfig c = seeded(json, s);
    const auto ds = train::make_dataset(c);
    const Matrix pe = train::positional_encodings(ds, c.pe_dim);
    e2e.push_back(run(ds, c, pe).test_at_best);
    for (double frac : {0.5, 0.7}) {
      const TrainConfig p = seeded(json, s, {{"pe_mode", "true"}, {"pe_fraction", "0.5"},
                                             {"router_fraction", std::to_string(frac)}});
      const auto r = run(ds, p, pe);
      for (const auto& [name, v] : r.pretrained) {
        identical = identical && r.best.params.at(name) == v;
        ++blocks;
      }
      (frac == 0.5 ? r50 : r70).push_back(r.test_at_best);
      if (frac == 0.5 && s == 0) {
        // Same contract through an expert checkpoint on disk.
        Checkpoint experts_only;
        experts_only.config_json = to_json(p);
        experts_only.params = r.pretrained;
        save_checkpoint(experts_only, ckpt_path);
        TrainConfig q = p;
        q.expert_checkpoint = ckpt_path.string();
        const auto rq = run(ds, q, pe);
        const Checkpoint disk = load_checkpoint(ckpt_path);
        for (const auto& [name, v] : disk.params) {
          identical = identical && rq.best.params.at(name) == v;
          ++blocks;
        }
      }
    }
  }
  std::filesystem::remove(ckpt_path);
  const double base = mean(e2e), a = mean(r50) / base, b = mean(r70) / base;
  return {identical && blocks > 0 && a >= 0.95 && b >= 0.95,
          fmt("%zu expert blocks %s; router 50%%: %.4f (%.3f of end-to-end %.4f), 70%%: %.4f (%.3f); need >= 0.95",
              blocks, identical ? "bit-identical" : "CHANGED", mean(r50), a, base, mean(r70), b)};
}

// ---- 9

Outcome fallback_totality() {
  return {kwatch.violations == 0 && kwatch.steps > 0,
          fmt("%zu violations over %zu logged steps in %zu runs; min k_u seen %zu", kwatch.violations, kwatch.steps,
              kwatch.runs, kwatch.min_seen)};
}

// ---- 10

Outcome sketch_stats() {
  const std::vector<std::size_t> dims{100}, widths{8, 64};
  const auto rows = theory::cs_inner_check(dims, widths, 10000, 7);
  bool pass = rows[1].rms_error < rows[0].rms_error;
  std::string d;
  for (const auto& r : rows) {
    const bool in = std::abs(r.mean - r.truth) <= r.ci_half;
    pass = pass && in;
    d += fmt("c=%zu mean %.4f vs <u,v> %.4f (99%% CI +-%.4f%s), rms %.4f; ", r.width, r.mean, r.truth, r.ci_half,
             in ? "" : " MISS", r.rms_error);
  }
  return {pass, d + "10^4 seeds"};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> fn;
  };
  const std::vector<Criterion> all{{1, "gradient fidelity", gradient_fidelity},
                                   {2, "SGA oracle equivalence", sga_oracle},
                                   {3, "bound validity (Monte Carlo)", theorem_validity},
                                   {4, "case study variance gate", case_study},
                                   {5, "pruning removes the noise expert", pruning_behavior},
                                   {6, "directional ablation", ablation_direction},
                                   {7, "ensemble vs single experts", ensemble_vs_singles},
                                   {8, "frozen-expert mode", pe_freeze},
                                   {9, "fallback totality", fallback_totality},
                                   {10, "count-sketch statistics", sketch_stats}};
  std::set<int> want;
  for (int i = 1; i < argc; ++i) want.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : all) {
    if (!want.empty() && !want.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %2d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
