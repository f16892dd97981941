// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sagmm/autodiff.hpp"
#include "sagmm/experts.hpp"
#include "sagmm/gate.hpp"

namespace sagmm::moe {

/// Squared CV of the expert load and the off-diagonal Frobenius norm of
/// the column-normalized gate overlap, both over alive columns.
struct AuxLosses {
  ad::Var importance;
  ad::Var diversity;
};
AuxLosses aux_losses(ad::Var gates, const std::vector<bool>& alive, double eps = 1e-12);

/// sum_j G[:,j] .* projected[j] over the valid slots; slots of experts that
/// were not evaluated are left invalid.
ad::Var aggregate(const std::vector<ad::Var>& projected, ad::Var gates, std::size_t width);

/// ||sum_u g[u] h[u,:]||_2 / n for one expert.
double contribution_score(std::span<const double> gate_column, const Matrix& h);

enum class PruneSignal { RawGates, ThresholdedGates };
PruneSignal parse_prune_signal(std::string_view s);

struct ModelConfig {
  experts::PoolConfig pool;
  gate::GateConfig gate;  // num_experts, ctx_dim and raw_dim are filled in by the model
  std::size_t in_dim = 0;
  std::size_t ctx_dim = 0;
  std::size_t proj_dim = 32;
  std::size_t out_dim = 1;
  double dropout = 0.0;
};

struct ForwardResult {
  ad::Var mixed;  // n x proj_dim, sum_j G[:,j] * proj_j(H_j)
  gate::GateOutput gate;
  std::vector<std::size_t> active;   // experts evaluated this pass
  std::vector<Matrix> expert_values; // H_j for active experts, empty otherwise
};

/// Pool, router, per-expert projections and the task head.
class MoeModel {
 public:
  MoeModel(ModelConfig cfg, std::uint64_t seed);

  /// x: n x in_dim raw features; ctx: n x ctx_dim context features.
  ForwardResult forward(ad::Tape& tape, const experts::Propagation& prop, const Matrix& x, const Matrix& ctx,
                        bool training, std::mt19937_64* rng);
  /// Linear task head.
  ad::Var head(ad::Tape& tape, ad::Var mixed);

  experts::ExpertPool& pool() noexcept { return pool_; }
  const experts::ExpertPool& pool() const noexcept { return pool_; }
  gate::Gate& router() noexcept { return gate_; }
  [[nodiscard]] std::vector<bool> alive_mask() const;
  [[nodiscard]] const ModelConfig& config() const noexcept { return cfg_; }

  /// Parameters the optimizer may touch: router, projections, head, plus
  /// experts' own parameters when not frozen. Pruned experts are excluded.
  std::vector<ad::Parameter*> trainable();
  /// Every parameter including pruned and frozen ones.
  std::vector<ad::Parameter*> all_parameters();
  /// Expert j's own parameters plus its projection.
  std::vector<ad::Parameter*> expert_block(std::size_t j);

  void freeze_experts(bool frozen) noexcept { experts_frozen_ = frozen; }
  [[nodiscard]] bool experts_frozen() const noexcept { return experts_frozen_; }
  void freeze_router(bool frozen) noexcept { router_frozen_ = frozen; }
  void freeze_head(bool frozen) noexcept { head_frozen_ = frozen; }

  std::map<std::string, Matrix> state();
  /// Missing names raise DataError naming the parameter.
  void load_state(const std::map<std::string, Matrix>& state);

 private:
  ModelConfig cfg_;
  experts::ExpertPool pool_;
  gate::Gate gate_;
  std::vector<std::unique_ptr<ad::Parameter>> proj_w_, proj_b_;
  std::unique_ptr<ad::Parameter> head_w_, head_b_;
  bool experts_frozen_ = false;
  bool router_frozen_ = false;
  bool head_frozen_ = false;
};

/// Per-expert EMA of contribution scores.
class ImportanceTracker {
 public:
  ImportanceTracker(std::size_t n_experts, double alpha, double eta);

  /// I <- (1 - alpha) I + alpha gamma on alive entries; pruned entries stay frozen.
  void update(std::span<const double> gamma, const std::vector<bool>& alive);
  [[nodiscard]] const std::vector<double>& scores() const noexcept { return importance_; }
  void set_scores(std::vector<double> s) { importance_ = std::move(s); }
  /// Alive scores divided by the alive maximum (0 when the max is 0), pruned ones 0.
  [[nodiscard]] std::vector<double> normalized(const std::vector<bool>& alive) const;
  /// Alive experts with normalized score below eta. If that would be every
  /// alive expert, the highest-scoring one (lowest index on ties) is spared.
  [[nodiscard]] std::vector<std::size_t> prune_candidates(const std::vector<bool>& alive) const;

  [[nodiscard]] double alpha() const noexcept { return alpha_; }
  [[nodiscard]] double eta() const noexcept { return eta_; }
  void set_eta(double eta) noexcept { eta_ = eta; }

 private:
  std::vector<double> importance_;
  double alpha_;
  double eta_;
};

enum class PruneAction { Kept, Pruned, Restored };
std::string_view action_name(PruneAction a) noexcept;

struct PruneRecord {
  std::size_t epoch;
  std::size_t expert;
  std::string kind;
  double importance;
  PruneAction action;
};

/// Prune events with validation-guarded rollback: if the evaluation after a
/// prune falls more than delta below the metric seen at prune time, the
/// pruned experts come back with their pre-prune parameters and eta is halved.
class PruneController {
 public:
  PruneController(std::size_t n_experts, double alpha, double eta, std::size_t interval, double delta);

  ImportanceTracker& tracker() noexcept { return tracker_; }
  const ImportanceTracker& tracker() const noexcept { return tracker_; }
  [[nodiscard]] std::size_t interval() const noexcept { return interval_; }

  /// Call after each epoch's validation. Handles a pending rollback first,
  /// then prunes when epoch % interval == 0. Returns true if the alive set changed.
  bool on_epoch_end(std::size_t epoch, double val_metric, MoeModel& model);

  [[nodiscard]] const std::vector<PruneRecord>& history() const noexcept { return history_; }
  [[nodiscard]] std::size_t rollbacks() const noexcept { return rollbacks_; }
  /// Epochs at which each expert was pruned (and not restored), if any.
  [[nodiscard]] std::optional<std::size_t> pruned_at(std::size_t expert) const;

 private:
  struct Pending {
    std::size_t epoch;
    double metric;
    std::vector<std::size_t> experts;
    std::map<std::string, Matrix> snapshot;
  };

  ImportanceTracker tracker_;
  std::size_t interval_;
  double delta_;
  std::optional<Pending> pending_;
  std::vector<PruneRecord> history_;
  std::size_t rollbacks_ = 0;
};

}  // namespace sagmm::moe
