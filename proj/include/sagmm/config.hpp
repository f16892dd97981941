// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sagmm/data.hpp"
#include "sagmm/experts.hpp"
#include "sagmm/gate.hpp"
#include "sagmm/metrics.hpp"
#include "sagmm/moe.hpp"

namespace sagmm {

/// Where the training data comes from.
struct DataConfig {
  std::string source = "sbm";  // sbm, toy_graph, sbm_link, files
  data::SbmConfig sbm;
  data::GraphToyConfig toy;
  data::LinkSplitConfig link;
  data::DataFiles files;
};

/// Scale applied to expert outputs before contribution scores.
enum class GammaNormalization { None, Rms };

struct TrainConfig {
  data::TaskKind task = data::TaskKind::NodeClassification;
  std::size_t epochs = 100;
  std::size_t batch_size = 0;  // 0 trains on the whole graph per step
  double lr = 0.01;
  double weight_decay = 0.0;
  double dropout = 0.0;
  std::size_t hidden = 32;
  std::size_t layers = 2;
  std::size_t proj_dim = 32;
  std::uint64_t seed = 0;
  /// A training loss above this magnitude aborts like a non-finite one.
  double divergence_threshold = 1e10;

  gate::GatingMode gating_mode = gate::GatingMode::Taag;
  std::size_t topk_k = 2;
  gate::GateInit gate_init = gate::GateInit::Zeros;
  ad::MaskGradient mask_gradient = ad::MaskGradient::StraightThrough;
  std::size_t pe_dim = 8;

  std::vector<experts::ExpertKind> experts;  // empty selects the task default
  bool diverse = true;   // false replaces the pool with copies of GCN
  bool pruning = true;
  experts::ExpertSpec expert;  // shared expert settings; kind is ignored

  double alpha = 0.9;
  double eta = 0.5;
  std::size_t prune_interval = 20;
  double prune_delta = 0.005;
  moe::PruneSignal prune_type = moe::PruneSignal::RawGates;
  GammaNormalization gamma_normalization = GammaNormalization::Rms;
  double w_imp = 0.1;
  double w_div = 0.05;

  bool pe_mode = false;
  double pe_fraction = 0.5;
  double router_fraction = 1.0;  // share of training items seen by the router stage
  std::size_t pe_epochs = 0;  // 0 reuses epochs
  std::string expert_checkpoint;

  metrics::Metric metric = metrics::Metric::Accuracy;
  std::size_t hits_k = 20;

  DataConfig data;

  /// Final expert kinds after applying `diverse`.
  [[nodiscard]] std::vector<experts::ExpertKind> pool_kinds() const;
};

/// One documented key. The type is one of int, real, bool, string,
/// int_list, string_list.
struct ConfigKey {
  std::string name;  // dotted for nested keys, e.g. data.sbm.p_in
  std::string type;
  std::string default_json;
  std::string doc;
};
const std::vector<ConfigKey>& config_schema();

/// Parses JSON text, applies `overrides` (dotted key, raw value) on top and
/// validates. Unknown keys, wrong types and out-of-range values raise
/// ConfigError naming the key.
TrainConfig parse_config(std::string_view json_text,
                         const std::vector<std::pair<std::string, std::string>>& overrides = {});
TrainConfig load_config(const std::filesystem::path& path,
                        const std::vector<std::pair<std::string, std::string>>& overrides = {});
/// Full normalized JSON, every key present.
std::string to_json(const TrainConfig& cfg);

void validate(const TrainConfig& cfg);

}  // namespace sagmm
