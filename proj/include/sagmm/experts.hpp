// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "sagmm/autodiff.hpp"
#include "sagmm/graph.hpp"

namespace sagmm::experts {

enum class ExpertKind { GCN, JKNet, ChebCNN, MixHop, GAT, SGC, GIN, GraphSAGE, Noise };

std::string_view kind_name(ExpertKind k) noexcept;
/// Accepts the names printed by kind_name, case-insensitive. Throws ConfigError.
ExpertKind parse_kind(std::string_view name);

enum class TaskKind { NodeClassification, GraphClassification, GraphRegression, LinkPrediction };

/// Default pool for a task, in canonical order.
std::vector<ExpertKind> default_kinds(TaskKind task);

enum class GcnNorm { Symmetric, Row };

struct ExpertSpec {
  ExpertKind kind = ExpertKind::GCN;
  std::size_t layers = 2;
  std::size_t hidden = 32;
  std::size_t cheb_order = 2;
  bool gin_learn_eps = true;
  std::vector<std::size_t> mixhop_powers{0, 1, 2};
  std::size_t sgc_steps = 2;
  double gat_slope = 0.2;
  GcnNorm gcn_norm = GcnNorm::Symmetric;
  /// ReLU after the last layer.
  bool output_activation = true;
  /// Stddev of Gaussian bias init; 0 gives zero biases.
  double bias_init_std = 0.0;
};

/// Sparse operators an expert may need, built once per (sub)graph.
struct Propagation {
  explicit Propagation(const graph::Graph& g);

  std::size_t num_nodes;
  graph::SparseMatrix adjacency;    // A
  graph::SparseMatrix row_norm;     // D^-1 A
  graph::SparseMatrix gcn_sym;      // D~^-1/2 (A+I) D~^-1/2, also the attention pattern
  graph::SparseMatrix gcn_row;      // D~^-1 (A+I)
  graph::SparseMatrix cheb;         // 2L/lambda_max - I with lambda_max = 2, i.e. -D^-1/2 A D^-1/2
};

struct ForwardContext {
  double dropout = 0.0;
  bool training = false;
  std::mt19937_64* rng = nullptr;
};

/// One complete GNN model. Owns its parameters.
class Expert {
 public:
  Expert(ExpertSpec spec, std::size_t in_dim, std::string name, std::uint64_t seed);

  [[nodiscard]] const ExpertSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] const std::string& name() const noexcept { return name_; }
  [[nodiscard]] std::size_t in_dim() const noexcept { return in_dim_; }
  [[nodiscard]] std::size_t out_dim() const noexcept { return spec_.hidden; }

  /// n x hidden embeddings.
  ad::Var forward(ad::Tape& tape, const Propagation& prop, ad::Var x, const ForwardContext& ctx);

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;

  /// Number of forward() calls so far.
  [[nodiscard]] std::size_t evaluations() const noexcept { return evaluations_; }
  void reset_evaluations() noexcept { evaluations_ = 0; }

  /// Attention weights of every GAT layer from the last forward, CSR order of gcn_sym.
  [[nodiscard]] const std::vector<std::vector<double>>& last_attention() const noexcept { return attention_; }

 private:
  ad::Parameter& add_param(const std::string& suffix, Matrix value);
  ad::Parameter& glorot(const std::string& suffix, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);
  ad::Parameter& bias(const std::string& suffix, std::size_t width, std::mt19937_64& rng);
  ad::Parameter& param(std::size_t idx) { return *params_[idx]; }

  ExpertSpec spec_;
  std::size_t in_dim_;
  std::string name_;
  std::vector<std::unique_ptr<ad::Parameter>> params_;
  std::mt19937_64 noise_rng_;
  std::size_t evaluations_ = 0;
  std::vector<std::vector<double>> attention_;
};

/// Throws ConfigError when a kind-specific setting is missing or meaningless.
void validate_spec(const ExpertSpec& spec);

struct PoolConfig {
  std::vector<ExpertKind> kinds;
  bool allow_duplicates = false;
  ExpertSpec base;  // layers, hidden and kind-specific settings shared by all entries
};

/// Ordered experts plus alive flags. Order never changes.
class ExpertPool {
 public:
  ExpertPool() = default;
  ExpertPool(const PoolConfig& cfg, std::size_t in_dim, std::uint64_t seed);

  [[nodiscard]] std::size_t initial_count() const noexcept { return experts_.size(); }
  [[nodiscard]] std::size_t alive_count() const noexcept;
  [[nodiscard]] bool alive(std::size_t i) const { return alive_.at(i); }
  /// Throws InputError if the change would leave no alive expert.
  void set_alive(std::size_t i, bool value);
  [[nodiscard]] std::vector<std::size_t> alive_indices() const;

  Expert& operator[](std::size_t i) { return *experts_.at(i); }
  const Expert& operator[](std::size_t i) const { return *experts_.at(i); }

 private:
  std::vector<std::unique_ptr<Expert>> experts_;
  std::vector<bool> alive_;
};

/// Plain callable form used by the equivariance check.
using GraphFunction = std::function<Matrix(const graph::Graph&, const Matrix&)>;

/// Evaluates f on a random graph and on a relabeled copy; passes when the
/// outputs agree under the same relabeling within tol.
bool equivariance_check(const GraphFunction& f, std::size_t n, std::size_t in_dim, std::uint64_t seed,
                        double tol = 1e-9);
bool equivariance_check(const ExpertSpec& spec, std::uint64_t seed, double tol = 1e-9);

}  // namespace sagmm::experts
