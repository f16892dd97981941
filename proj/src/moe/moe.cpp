// SPDX-License-Identifier: Apache-2.0
#include "sagmm/moe.hpp"

#include <algorithm>
#include <cmath>

#include "sagmm/errors.hpp"

namespace sagmm::moe {

using ad::Parameter;
using ad::Tape;
using ad::Var;

namespace {

Matrix glorot(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix w(in, out);
  for (double& v : w.values()) v = u(rng);
  return w;
}

gate::GateConfig complete(gate::GateConfig g, const ModelConfig& cfg) {
  g.num_experts = cfg.pool.kinds.size();
  g.ctx_dim = cfg.ctx_dim;
  g.raw_dim = cfg.in_dim;
  return g;
}

}  // namespace

AuxLosses aux_losses(Var gates, const std::vector<bool>& alive, double eps) {
  Tape& t = gates.tape();
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < alive.size(); ++j)
    if (alive[j]) cols.push_back(j);
  if (gates.cols() != alive.size()) throw InputError("aux_losses: alive mask width mismatch");
  if (cols.size() <= 1) return {t.constant(Matrix(1, 1)), t.constant(Matrix(1, 1))};
  Var g = ad::gather_cols(gates, cols);
  Var imp = ad::cv_squared(ad::col_sum(g), eps);
  Var gn = ad::normalize_cols(g, eps);
  Var overlap = ad::matmul(ad::transpose(gn), gn);
  Matrix off(cols.size(), cols.size(), 1.0);
  for (std::size_t j = 0; j < cols.size(); ++j) off(j, j) = 0.0;
  Var div = ad::frobenius_norm(ad::hadamard(overlap, t.constant(std::move(off))));
  return {imp, div};
}

Var aggregate(const std::vector<Var>& projected, Var gates, std::size_t width) {
  if (projected.size() != gates.cols()) throw InputError("aggregate: one slot per expert column expected");
  Var mixed;
  for (std::size_t j = 0; j < projected.size(); ++j) {
    if (!projected[j].valid()) continue;
    if (projected[j].rows() != gates.rows() || projected[j].cols() != width)
      throw InputError("aggregate: expert output " + projected[j].value().shape_string() + " does not fit");
    const std::vector<std::size_t> col{j};
    Var term = ad::mul_col(projected[j], ad::gather_cols(gates, col));
    mixed = mixed.valid() ? ad::add(mixed, term) : term;
  }
  return mixed.valid() ? mixed : gates.tape().constant(Matrix(gates.rows(), width));
}

double contribution_score(std::span<const double> gate_column, const Matrix& h) {
  if (gate_column.size() != h.rows()) throw InputError("contribution_score: gate column length mismatch");
  if (h.rows() == 0) return 0.0;
  std::vector<double> acc(h.cols(), 0.0);
  for (std::size_t u = 0; u < h.rows(); ++u)
    for (std::size_t j = 0; j < h.cols(); ++j) acc[j] += gate_column[u] * h(u, j);
  double s = 0.0;
  for (double v : acc) s += v * v;
  return std::sqrt(s) / static_cast<double>(h.rows());
}

PruneSignal parse_prune_signal(std::string_view s) {
  if (s == "raw_gates") return PruneSignal::RawGates;
  if (s == "thresholded_gates") return PruneSignal::ThresholdedGates;
  throw ConfigError("unknown prune_type '" + std::string(s) + "'");
}

MoeModel::MoeModel(ModelConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      pool_(cfg_.pool, cfg_.in_dim, seed),
      gate_(complete(cfg_.gate, cfg_), seed ^ 0x6a09e667f3bcc908ULL) {
  if (cfg_.proj_dim == 0 || cfg_.out_dim == 0) throw ConfigError("projection and output widths must be >= 1");
  std::mt19937_64 rng(seed ^ 0xbb67ae8584caa73bULL);
  for (std::size_t j = 0; j < pool_.initial_count(); ++j) {
    const std::string p = "proj" + std::to_string(j);
    proj_w_.push_back(std::make_unique<Parameter>(p + ".w", glorot(pool_[j].out_dim(), cfg_.proj_dim, rng)));
    proj_b_.push_back(std::make_unique<Parameter>(p + ".b", Matrix(1, cfg_.proj_dim)));
  }
  head_w_ = std::make_unique<Parameter>("head.w", glorot(cfg_.proj_dim, cfg_.out_dim, rng));
  head_b_ = std::make_unique<Parameter>("head.b", Matrix(1, cfg_.out_dim));
}

std::vector<bool> MoeModel::alive_mask() const {
  std::vector<bool> a(pool_.initial_count());
  for (std::size_t j = 0; j < a.size(); ++j) a[j] = pool_.alive(j);
  return a;
}

ForwardResult MoeModel::forward(Tape& tape, const experts::Propagation& prop, const Matrix& x, const Matrix& ctx,
                                bool training, std::mt19937_64* rng) {
  const std::vector<bool> alive = alive_mask();
  Var xv = tape.constant(x);
  Var cv = tape.constant(ctx);
  ForwardResult out;
  out.gate = gate_.forward(tape, cv, xv, alive, training, rng);
  const std::size_t n = x.rows();
  const std::size_t N = pool_.initial_count();
  out.expert_values.resize(N);

  // Active set: alive experts picked by at least one node of the batch.
  {
    const Matrix& g = out.gate.gates.value();
    for (std::size_t j = 0; j < N; ++j) {
      if (!alive[j]) continue;
      bool used = false;
      for (std::size_t u = 0; u < n && !used; ++u) used = g(u, j) != 0.0;
      if (used) out.active.push_back(j);
    }
  }

  experts::ForwardContext fctx{cfg_.dropout, training, rng};
  Var xin = training && cfg_.dropout > 0.0 && rng != nullptr ? ad::dropout(xv, cfg_.dropout, *rng) : xv;
  std::vector<Var> projected(N);
  for (std::size_t j : out.active) {
    Var h = pool_[j].forward(tape, prop, xin, fctx);
    out.expert_values[j] = h.value();
    projected[j] = ad::elu(ad::add_row(ad::matmul(h, tape.param(*proj_w_[j])), tape.param(*proj_b_[j])));
  }
  out.mixed = aggregate(projected, out.gate.gates, cfg_.proj_dim);
  return out;
}

Var MoeModel::head(Tape& tape, Var mixed) {
  return ad::add_row(ad::matmul(mixed, tape.param(*head_w_)), tape.param(*head_b_));
}

std::vector<Parameter*> MoeModel::expert_block(std::size_t j) {
  std::vector<Parameter*> out = pool_[j].parameters();
  out.push_back(proj_w_.at(j).get());
  out.push_back(proj_b_.at(j).get());
  return out;
}

std::vector<Parameter*> MoeModel::trainable() {
  std::vector<Parameter*> out;
  if (!router_frozen_)
    for (Parameter* p : gate_.parameters()) out.push_back(p);
  for (std::size_t j = 0; j < pool_.initial_count(); ++j) {
    if (!pool_.alive(j)) continue;
    if (!experts_frozen_)
      for (Parameter* p : pool_[j].parameters()) out.push_back(p);
    out.push_back(proj_w_[j].get());
    out.push_back(proj_b_[j].get());
  }
  if (!head_frozen_) {
    out.push_back(head_w_.get());
    out.push_back(head_b_.get());
  }
  return out;
}

std::vector<Parameter*> MoeModel::all_parameters() {
  std::vector<Parameter*> out = gate_.parameters();
  for (std::size_t j = 0; j < pool_.initial_count(); ++j)
    for (Parameter* p : expert_block(j)) out.push_back(p);
  out.push_back(head_w_.get());
  out.push_back(head_b_.get());
  return out;
}

std::map<std::string, Matrix> MoeModel::state() {
  std::map<std::string, Matrix> s;
  for (Parameter* p : all_parameters()) s.emplace(p->name(), p->value());
  return s;
}

void MoeModel::load_state(const std::map<std::string, Matrix>& state) {
  for (Parameter* p : all_parameters()) {
    auto it = state.find(p->name());
    if (it == state.end()) throw DataError("checkpoint lacks parameter '" + p->name() + "'");
    if (!it->second.same_shape(p->value()))
      throw DataError("checkpoint parameter '" + p->name() + "' has shape " + it->second.shape_string() +
                      ", model expects " + p->value().shape_string());
    p->value() = it->second;
  }
}

ImportanceTracker::ImportanceTracker(std::size_t n_experts, double alpha, double eta)
    : importance_(n_experts, 0.0), alpha_(alpha), eta_(eta) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in [0, 1]");
}

void ImportanceTracker::update(std::span<const double> gamma, const std::vector<bool>& alive) {
  if (gamma.size() != importance_.size() || alive.size() != importance_.size())
    throw InputError("importance update: width mismatch");
  for (std::size_t j = 0; j < gamma.size(); ++j)
    if (alive[j]) importance_[j] = (1.0 - alpha_) * importance_[j] + alpha_ * gamma[j];
}

std::vector<double> ImportanceTracker::normalized(const std::vector<bool>& alive) const {
  double mx = 0.0;
  for (std::size_t j = 0; j < importance_.size(); ++j)
    if (alive[j]) mx = std::max(mx, importance_[j]);
  std::vector<double> out(importance_.size(), 0.0);
  if (mx <= 0.0) return out;
  for (std::size_t j = 0; j < importance_.size(); ++j)
    if (alive[j]) out[j] = importance_[j] / mx;
  return out;
}

std::vector<std::size_t> ImportanceTracker::prune_candidates(const std::vector<bool>& alive) const {
  const std::vector<double> v = normalized(alive);
  std::vector<std::size_t> drop;
  std::size_t n_alive = 0;
  std::size_t best = importance_.size();
  for (std::size_t j = 0; j < v.size(); ++j) {
    if (!alive[j]) continue;
    ++n_alive;
    if (best == importance_.size() || importance_[j] > importance_[best]) best = j;
    if (v[j] < eta_) drop.push_back(j);
  }
  if (drop.size() == n_alive) drop.erase(std::find(drop.begin(), drop.end(), best));
  return drop;
}

std::string_view action_name(PruneAction a) noexcept {
  switch (a) {
    case PruneAction::Kept: return "kept";
    case PruneAction::Pruned: return "pruned";
    case PruneAction::Restored: return "restored";
  }
  return "unknown";
}

PruneController::PruneController(std::size_t n_experts, double alpha, double eta, std::size_t interval, double delta)
    : tracker_(n_experts, alpha, eta), interval_(interval), delta_(delta) {
  if (interval == 0) throw ConfigError("prune_interval must be >= 1");
}

bool PruneController::on_epoch_end(std::size_t epoch, double val_metric, MoeModel& model) {
  bool changed = false;
  auto kind_of = [&](std::size_t j) { return std::string(experts::kind_name(model.pool()[j].spec().kind)); };
  if (pending_) {
    if (val_metric < pending_->metric - delta_) {
      // Restore parameters first, then flags.
      std::map<std::string, Matrix> full = model.state();
      for (auto& [k, v] : pending_->snapshot) full[k] = v;
      model.load_state(full);
      for (std::size_t j : pending_->experts) model.pool().set_alive(j, true);
      const std::vector<double> norm = tracker_.normalized(model.alive_mask());
      for (std::size_t j : pending_->experts)
        history_.push_back({epoch, j, kind_of(j), norm[j], PruneAction::Restored});
      tracker_.set_eta(tracker_.eta() * 0.5);
      ++rollbacks_;
      changed = true;
    }
    pending_.reset();
  }
  if (epoch % interval_ != 0) return changed;

  const std::vector<bool> alive = model.alive_mask();
  const std::vector<std::size_t> drop = tracker_.prune_candidates(alive);
  const std::vector<double> norm = tracker_.normalized(alive);
  Pending p{epoch, val_metric, drop, {}};
  for (std::size_t j : drop)
    for (Parameter* par : model.expert_block(j)) p.snapshot.emplace(par->name(), par->value());
  for (std::size_t j = 0; j < alive.size(); ++j) {
    if (!alive[j]) continue;
    const bool pruned = std::find(drop.begin(), drop.end(), j) != drop.end();
    history_.push_back({epoch, j, kind_of(j), norm[j], pruned ? PruneAction::Pruned : PruneAction::Kept});
  }
  for (std::size_t j : drop) model.pool().set_alive(j, false);
  if (!drop.empty()) {
    pending_ = std::move(p);
    changed = true;
  }
  return changed;
}

std::optional<std::size_t> PruneController::pruned_at(std::size_t expert) const {
  std::optional<std::size_t> at;
  for (const PruneRecord& r : history_) {
    if (r.expert != expert) continue;
    if (r.action == PruneAction::Pruned) at = r.epoch;
    if (r.action == PruneAction::Restored) at.reset();
  }
  return at;
}

}  // namespace sagmm::moe
