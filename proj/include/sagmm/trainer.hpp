// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sagmm/checkpoint.hpp"
#include "sagmm/config.hpp"
#include "sagmm/data.hpp"
#include "sagmm/moe.hpp"

namespace sagmm::train {

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
  double test_metric = 0.0;
  std::size_t alive_experts = 0;
  double mean_k_u = 0.0;
};

/// Seen after every optimizer step.
struct StepInfo {
  std::size_t epoch;
  std::size_t batch;
  double loss;
  const std::vector<std::size_t>& active;
  const std::vector<double>& gamma;  // contribution scores of this batch
  std::size_t min_k;
  double mean_k;
  const moe::MoeModel& model;
};

struct TrainOptions {
  std::function<void(const StepInfo&)> on_step;
  /// Per-epoch progress lines; null for silence.
  std::ostream* progress = nullptr;
  /// Precomputed positional encodings for this dataset (n x pe_dim).
  const Matrix* pe = nullptr;
};

struct TrainResult {
  Checkpoint best;  // highest validation score
  std::size_t best_epoch = 0;
  double best_val = 0.0;
  double test_at_best = 0.0;
  std::vector<EpochLog> log;
  std::vector<moe::PruneRecord> prunes;
  std::vector<std::optional<std::size_t>> pruned_epoch;  // per expert, final state
  std::size_t rollbacks = 0;
  std::vector<double> importance;  // after the last epoch
  std::map<std::size_t, std::size_t> k_histogram;  // k_u -> node count, all training steps
  std::size_t min_k = 0;
  std::size_t steps = 0;
  /// PE mode: the frozen expert parameters the router was trained against.
  std::map<std::string, Matrix> pretrained;
  std::vector<std::string> expert_names;
};

/// Builds the dataset described by the config.
data::Dataset make_dataset(const TrainConfig& cfg);
/// Laplacian encodings of the full graph, or per graph for graph-level tasks
/// (zero-padded when a graph has <= p nodes).
Matrix positional_encodings(const data::Dataset& ds, std::size_t p);
/// Context features: multihop mean || PE for node and link tasks, per-graph
/// feature mean || PE for graph tasks.
Matrix context_for(const data::Dataset& ds, const Matrix& pe);

moe::ModelConfig model_config(const TrainConfig& cfg, const data::Dataset& ds);

/// Runs the full training loop. Numerical blow-ups raise NumericalError with
/// a diagnostic dump.
TrainResult train(const data::Dataset& ds, const TrainConfig& cfg, const TrainOptions& opts = {});

struct EvalResult {
  metrics::Metric metric;
  double value;
  std::size_t items;
};
/// Restores the checkpoint and scores one split. Empty split raises InputError.
EvalResult evaluate(const data::Dataset& ds, const Checkpoint& ckpt, data::Split split, const Matrix* pe = nullptr);

/// Higher-is-better view of a metric value.
[[nodiscard]] inline double score(metrics::Metric m, double v) noexcept { return metrics::higher_is_better(m) ? v : -v; }

}  // namespace sagmm::train
