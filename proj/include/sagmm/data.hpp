// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sagmm/experts.hpp"
#include "sagmm/graph.hpp"
#include "sagmm/matrix.hpp"

namespace sagmm::data {

using experts::TaskKind;
std::string_view task_name(TaskKind t) noexcept;
/// node_cls, graph_cls, graph_reg, link_pred.
TaskKind parse_task(std::string_view s);

enum class Split : std::size_t { Train = 0, Valid = 1, Test = 2 };
std::string_view split_name(Split s) noexcept;
Split parse_split(std::string_view s);

using EdgePair = std::pair<std::size_t, std::size_t>;

/// A graph (or a disjoint union of graphs for graph-level tasks) with
/// features, targets and a three-way split.
struct Dataset {
  TaskKind task = TaskKind::NodeClassification;
  graph::Graph graph;
  Matrix features;  // n x d

  // Class index per supervised item (node or graph); empty otherwise.
  std::vector<int> labels;
  std::size_t num_classes = 0;
  // Multi-label bits (items x c) or regression targets (items x 1).
  Matrix targets;

  // Graph-level tasks: membership of every node.
  std::vector<std::size_t> graph_id;
  std::size_t num_graphs = 0;

  // Supervised item ids per split: nodes, graphs or positive-edge indices.
  std::array<std::vector<std::size_t>, 3> splits;

  // Link prediction: supervised positives and evaluation negatives per split.
  std::array<std::vector<EdgePair>, 3> link_pos;
  std::array<std::vector<EdgePair>, 3> link_neg;

  [[nodiscard]] std::size_t num_nodes() const noexcept { return graph.num_nodes(); }
  [[nodiscard]] std::size_t feature_dim() const noexcept { return features.cols(); }
  [[nodiscard]] bool multilabel() const noexcept {
    return task == TaskKind::NodeClassification && labels.empty() && !targets.empty();
  }
  /// Supervised items in a split.
  [[nodiscard]] const std::vector<std::size_t>& split(Split s) const {
    return splits[static_cast<std::size_t>(s)];
  }
};

/// Throws DataError on overlapping splits, out-of-range ids or label/shape
/// inconsistencies.
void validate(const Dataset& ds);

struct SbmConfig {
  std::vector<std::size_t> sizes{100, 100};
  double p_in = 0.1;
  double p_out = 0.01;
  std::size_t feature_dim = 8;
  /// Norm of each class mean.
  double signal = 1.0;
  double noise = 1.0;
  /// Half of the blocks (the upper half) wire heterophilically: no
  /// within-block edges beyond p_out, and p_in / (B - 1) towards every other block.
  bool mixed = false;
  double train_fraction = 0.6;
  double valid_fraction = 0.2;
  std::uint64_t seed = 0;
};

/// Node-classification SBM; labels are block ids.
Dataset sbm_generate(const SbmConfig& cfg);
/// Which blocks of an SBM are heterophilic.
std::vector<bool> sbm_heterophilic_blocks(const SbmConfig& cfg);

struct GraphToyConfig {
  std::size_t num_graphs = 120;
  std::size_t min_nodes = 6;
  std::size_t max_nodes = 14;
  std::size_t feature_dim = 4;
  /// graph_reg targets are mean degrees, graph_cls labels are density classes.
  bool regression = false;
  double train_fraction = 0.6;
  double valid_fraction = 0.2;
  std::uint64_t seed = 0;
};
/// Small random graphs whose class or target is driven by edge density.
/// Feature 0 is constant 1, the rest are standard normal.
Dataset toy_graph_dataset(const GraphToyConfig& cfg);

struct LinkSplitConfig {
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
  std::size_t negatives_per_positive = 5;
  std::uint64_t seed = 0;
};
/// Holds out edges of g for validation and test. The message-passing graph
/// keeps only training edges; evaluation negatives are uniform non-edges.
Dataset make_link_dataset(const graph::Graph& g, Matrix features, const LinkSplitConfig& cfg);

struct DataFiles {
  std::filesystem::path edges;
  std::filesystem::path features;
  std::filesystem::path labels;
  std::filesystem::path splits;
  std::filesystem::path graph_ids;  // graph-level tasks only
};

/// Reads the documented formats. Every parse error names file and line.
///   features: CSV, header row, one row per node
///   labels:   CSV, header row; one column of class ids or real targets, or
///             several 0/1 columns for multi-label node tasks; one row per
///             node (node tasks) or per graph (graph tasks)
///   splits:   CSV, header row; one of train/valid/test/none per item,
///             or for link tasks rows "u,v,split,label" (label 0 rows are
///             evaluation negatives)
///   graph_ids: CSV, header row, graph index per node
Dataset load_dataset(const DataFiles& files, TaskKind task);

/// Writes a dataset in the formats above; used to round-trip generated data.
void save_dataset(const Dataset& ds, const DataFiles& files);

}  // namespace sagmm::data
