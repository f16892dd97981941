// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "sagmm/matrix.hpp"

namespace sagmm::graph {

using NodeId = std::int32_t;

struct Edge {
  NodeId u;
  NodeId v;
};

/// Immutable undirected graph in CSR form. Both orientations of every edge are
/// stored, rows are sorted and duplicate-free, self-loops appear once.
class Graph {
 public:
  Graph() = default;

  /// Deduplicates and symmetrizes the list. Throws InputError on n == 0 or an
  /// endpoint outside [0, n).
  static Graph from_edges(std::span<const Edge> edges, std::size_t n);

  [[nodiscard]] std::size_t num_nodes() const noexcept { return degrees_.size(); }
  /// Number of stored (directed) CSR entries.
  [[nodiscard]] std::size_t num_entries() const noexcept { return col_idx_.size(); }
  [[nodiscard]] std::size_t degree(NodeId u) const { return degrees_.at(static_cast<std::size_t>(u)); }
  [[nodiscard]] std::span<const std::size_t> degrees() const noexcept { return degrees_; }
  [[nodiscard]] std::span<const NodeId> neighbors(NodeId u) const;
  [[nodiscard]] bool has_edge(NodeId u, NodeId v) const;
  [[nodiscard]] bool has_self_loop(NodeId u) const { return has_edge(u, u); }

  [[nodiscard]] std::span<const std::int64_t> row_ptr() const noexcept { return row_ptr_; }
  [[nodiscard]] std::span<const NodeId> col_idx() const noexcept { return col_idx_; }

  /// Undirected edge list with u <= v.
  [[nodiscard]] std::vector<Edge> edge_list() const;

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  std::vector<std::int64_t> row_ptr_{0};
  std::vector<NodeId> col_idx_;
  std::vector<std::size_t> degrees_;
};

/// Real-valued sparse matrix in CSR form. Keeps a CSR copy of its transpose so
/// that products with S^T (needed by reverse-mode backward) stay sparse.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::int64_t> row_ptr,
               std::vector<NodeId> col_idx, std::vector<double> values);

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t nnz() const noexcept { return values_.size(); }
  [[nodiscard]] std::span<const std::int64_t> row_ptr() const noexcept { return row_ptr_; }
  [[nodiscard]] std::span<const NodeId> col_idx() const noexcept { return col_idx_; }
  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }

  /// S * B.
  [[nodiscard]] Matrix multiply(const Matrix& b) const;
  /// S^T * B.
  [[nodiscard]] Matrix multiply_transposed(const Matrix& b) const;
  [[nodiscard]] Matrix to_dense() const;
  [[nodiscard]] SparseMatrix transpose() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::int64_t> row_ptr_{0};
  std::vector<NodeId> col_idx_;
  std::vector<double> values_;
  // CSR of the transpose, built once at construction.
  std::vector<std::int64_t> t_row_ptr_{0};
  std::vector<NodeId> t_col_idx_;
  std::vector<double> t_values_;
};

/// A with the same sparsity pattern as the graph, unit weights.
SparseMatrix adjacency(const Graph& g);
/// D^-1 A; isolated nodes give all-zero rows.
SparseMatrix row_normalized_adjacency(const Graph& g);
/// D^-1/2 A D^-1/2 with degree-0 entries of D^-1/2 set to 0.
SparseMatrix sym_normalized_adjacency(const Graph& g);
/// GCN propagation D~^-1/2 (A + I) D~^-1/2 where the diagonal of A + I is
/// clamped to 1 when the input already carries a self-loop.
SparseMatrix gcn_normalized_adjacency(const Graph& g);
/// Row-normalized A + I (same self-loop clamp as above).
SparseMatrix row_normalized_with_self_loops(const Graph& g);

struct Multihop {
  Matrix hop1;  // (D^-1 A) X
  Matrix hop2;  // (D^-1 A)^2 X
};
Multihop multihop_features(const Graph& g, const Matrix& x);

/// Upper bound on n for dense Laplacian work.
inline constexpr std::size_t kMaxDenseNodes = 20000;

/// I - D^-1/2 A D^-1/2. An isolated node contributes an identity row.
Matrix sym_norm_laplacian(const Graph& g);

/// Eigenvectors for the p smallest eigenvalues of the normalized Laplacian,
/// as an n x p matrix. Each column's first entry with |value| > 1e-10 is
/// positive; columns with equal eigenvalues are ordered lexicographically.
/// Requires 1 <= p < n.
Matrix laplacian_pe(const Graph& g, std::size_t p);
/// Same, also returning the eigenvalues.
std::pair<Matrix, std::vector<double>> laplacian_eigenpairs(const Graph& g, std::size_t p);

/// X' = (X + X1 + X2)/3 || PE, with PE computed from g.
Matrix context_features(const Graph& g, const Matrix& x, std::size_t p);
/// Same, with precomputed positional encodings (rows aligned with x).
Matrix context_features_with_pe(const Graph& g, const Matrix& x, const Matrix& pe);

struct Subgraph {
  Graph graph;
  std::vector<NodeId> nodes;       // new index -> old index
  std::vector<NodeId> old_to_new;  // old index -> new index or -1
};
/// Throws InputError for duplicates or out-of-range ids.
Subgraph induced_subgraph(const Graph& g, std::span<const NodeId> nodes);

/// Reads "u<TAB>v" lines (0-based, '#' comments). When n == 0 the node
/// count is max index + 1.
Graph read_edge_list(const std::filesystem::path& path, std::size_t n = 0);
void write_edge_list(const std::filesystem::path& path, const Graph& g);

/// Applies a node permutation: node u of g becomes perm[u].
Graph permute(const Graph& g, std::span<const NodeId> perm);

}  // namespace sagmm::graph
