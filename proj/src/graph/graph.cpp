// SPDX-License-Identifier: Apache-2.0
#include "sagmm/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "sagmm/errors.hpp"
#include "sagmm/kernels/kernels.hpp"

namespace sagmm::graph {

Graph Graph::from_edges(std::span<const Edge> edges, std::size_t n) {
  if (n == 0) throw InputError("graph must have at least one node");
  if (n > static_cast<std::size_t>(std::numeric_limits<NodeId>::max()))
    throw InputError("node count exceeds index range");
  std::vector<std::vector<NodeId>> adj(n);
  for (const Edge& e : edges) {
    if (e.u < 0 || e.v < 0 || static_cast<std::size_t>(e.u) >= n ||
        static_cast<std::size_t>(e.v) >= n) {
      throw InputError("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                       ") out of range for n=" + std::to_string(n));
    }
    adj[static_cast<std::size_t>(e.u)].push_back(e.v);
    if (e.u != e.v) adj[static_cast<std::size_t>(e.v)].push_back(e.u);
  }
  Graph g;
  g.row_ptr_.assign(1, 0);
  g.degrees_.resize(n);
  for (std::size_t u = 0; u < n; ++u) {
    auto& row = adj[u];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    g.col_idx_.insert(g.col_idx_.end(), row.begin(), row.end());
    g.row_ptr_.push_back(static_cast<std::int64_t>(g.col_idx_.size()));
    g.degrees_[u] = row.size();
  }
  return g;
}

std::span<const NodeId> Graph::neighbors(NodeId u) const {
  const auto uu = static_cast<std::size_t>(u);
  if (uu >= num_nodes()) throw InputError("node " + std::to_string(u) + " out of range");
  return {col_idx_.data() + row_ptr_[uu], static_cast<std::size_t>(row_ptr_[uu + 1] - row_ptr_[uu])};
}

bool Graph::has_edge(NodeId u, NodeId v) const {
  const auto row = neighbors(u);
  return std::binary_search(row.begin(), row.end(), v);
}

std::vector<Edge> Graph::edge_list() const {
  std::vector<Edge> out;
  for (std::size_t u = 0; u < num_nodes(); ++u)
    for (NodeId v : neighbors(static_cast<NodeId>(u)))
      if (static_cast<NodeId>(u) <= v) out.push_back({static_cast<NodeId>(u), v});
  return out;
}

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::int64_t> row_ptr,
                           std::vector<NodeId> col_idx, std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      row_ptr_(std::move(row_ptr)),
      col_idx_(std::move(col_idx)),
      values_(std::move(values)) {
  if (row_ptr_.size() != rows_ + 1 || col_idx_.size() != values_.size() ||
      static_cast<std::size_t>(row_ptr_.back()) != values_.size())
    throw InputError("inconsistent CSR arrays");
  std::vector<std::int64_t> counts(cols_ + 1, 0);
  for (NodeId c : col_idx_) {
    if (c < 0 || static_cast<std::size_t>(c) >= cols_) throw InputError("CSR column out of range");
    ++counts[static_cast<std::size_t>(c) + 1];
  }
  for (std::size_t c = 0; c < cols_; ++c) counts[c + 1] += counts[c];
  t_row_ptr_ = counts;
  t_col_idx_.resize(values_.size());
  t_values_.resize(values_.size());
  std::vector<std::int64_t> cursor(counts.begin(), counts.end() - 1);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::int64_t e = row_ptr_[r]; e < row_ptr_[r + 1]; ++e) {
      const auto c = static_cast<std::size_t>(col_idx_[static_cast<std::size_t>(e)]);
      const auto slot = static_cast<std::size_t>(cursor[c]++);
      t_col_idx_[slot] = static_cast<NodeId>(r);
      t_values_[slot] = values_[static_cast<std::size_t>(e)];
    }
  }
}

Matrix SparseMatrix::multiply(const Matrix& b) const {
  if (b.rows() != cols_)
    throw InputError("sparse product shape mismatch: " + std::to_string(rows_) + "x" +
                     std::to_string(cols_) + " * " + b.shape_string());
  Matrix c(rows_, b.cols());
  kernels::active().spmm(rows_, row_ptr_.data(), col_idx_.data(), values_.data(), b.cols(),
                         b.data(), c.data());
  return c;
}

Matrix SparseMatrix::multiply_transposed(const Matrix& b) const {
  if (b.rows() != rows_) throw InputError("sparse transposed product shape mismatch");
  Matrix c(cols_, b.cols());
  kernels::active().spmm(cols_, t_row_ptr_.data(), t_col_idx_.data(), t_values_.data(), b.cols(),
                         b.data(), c.data());
  return c;
}

Matrix SparseMatrix::to_dense() const {
  Matrix d(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::int64_t e = row_ptr_[r]; e < row_ptr_[r + 1]; ++e)
      d(r, static_cast<std::size_t>(col_idx_[static_cast<std::size_t>(e)])) +=
          values_[static_cast<std::size_t>(e)];
  return d;
}

SparseMatrix SparseMatrix::transpose() const {
  return SparseMatrix(cols_, rows_, t_row_ptr_, t_col_idx_, t_values_);
}

namespace {

// Builds a CSR operator over the graph pattern (optionally with a forced
// unit diagonal) with entry values weight(u, v).
template <typename Weight>
SparseMatrix weighted_pattern(const Graph& g, bool with_self_loops, Weight weight) {
  const std::size_t n = g.num_nodes();
  std::vector<std::int64_t> row_ptr{0};
  std::vector<NodeId> cols;
  std::vector<double> vals;
  cols.reserve(g.num_entries() + (with_self_loops ? n : 0));
  vals.reserve(cols.capacity());
  for (std::size_t u = 0; u < n; ++u) {
    const auto uu = static_cast<NodeId>(u);
    bool placed_self = !with_self_loops;
    for (NodeId v : g.neighbors(uu)) {
      if (!placed_self && v >= uu) {
        if (v != uu) {
          cols.push_back(uu);
          vals.push_back(weight(uu, uu));
        }
        placed_self = true;
      }
      cols.push_back(v);
      vals.push_back(weight(uu, v));
    }
    if (!placed_self) {
      cols.push_back(uu);
      vals.push_back(weight(uu, uu));
    }
    row_ptr.push_back(static_cast<std::int64_t>(cols.size()));
  }
  return SparseMatrix(n, n, std::move(row_ptr), std::move(cols), std::move(vals));
}

std::vector<double> self_loop_degrees(const Graph& g) {
  std::vector<double> d(g.num_nodes());
  for (std::size_t u = 0; u < g.num_nodes(); ++u)
    d[u] = static_cast<double>(g.degree(static_cast<NodeId>(u))) +
           (g.has_self_loop(static_cast<NodeId>(u)) ? 0.0 : 1.0);
  return d;
}

double inv_or_zero(double x) { return x > 0.0 ? 1.0 / x : 0.0; }

}  // namespace

SparseMatrix adjacency(const Graph& g) {
  return weighted_pattern(g, false, [](NodeId, NodeId) { return 1.0; });
}

SparseMatrix row_normalized_adjacency(const Graph& g) {
  return weighted_pattern(g, false, [&](NodeId u, NodeId) {
    return inv_or_zero(static_cast<double>(g.degree(u)));
  });
}

SparseMatrix sym_normalized_adjacency(const Graph& g) {
  std::vector<double> s(g.num_nodes());
  for (std::size_t u = 0; u < s.size(); ++u)
    s[u] = inv_or_zero(std::sqrt(static_cast<double>(g.degree(static_cast<NodeId>(u)))));
  return weighted_pattern(g, false, [&](NodeId u, NodeId v) {
    return s[static_cast<std::size_t>(u)] * s[static_cast<std::size_t>(v)];
  });
}

SparseMatrix gcn_normalized_adjacency(const Graph& g) {
  const auto d = self_loop_degrees(g);
  return weighted_pattern(g, true, [&](NodeId u, NodeId v) {
    return 1.0 / std::sqrt(d[static_cast<std::size_t>(u)] * d[static_cast<std::size_t>(v)]);
  });
}

SparseMatrix row_normalized_with_self_loops(const Graph& g) {
  const auto d = self_loop_degrees(g);
  return weighted_pattern(g, true,
                          [&](NodeId u, NodeId) { return 1.0 / d[static_cast<std::size_t>(u)]; });
}

Multihop multihop_features(const Graph& g, const Matrix& x) {
  if (x.rows() != g.num_nodes())
    throw InputError("feature rows (" + std::to_string(x.rows()) + ") != node count (" +
                     std::to_string(g.num_nodes()) + ")");
  const SparseMatrix p = row_normalized_adjacency(g);
  Multihop out;
  out.hop1 = p.multiply(x);
  out.hop2 = p.multiply(out.hop1);
  return out;
}

Matrix sym_norm_laplacian(const Graph& g) {
  const std::size_t n = g.num_nodes();
  if (n > kMaxDenseNodes)
    throw InputError("dense Laplacian limited to " + std::to_string(kMaxDenseNodes) + " nodes");
  Matrix l = sym_normalized_adjacency(g).to_dense();
  for (double& v : l.values()) v = -v;
  for (std::size_t i = 0; i < n; ++i) l(i, i) += 1.0;
  return l;
}

Matrix context_features_with_pe(const Graph& g, const Matrix& x, const Matrix& pe) {
  if (pe.rows() != x.rows()) throw InputError("positional encodings misaligned with features");
  const Multihop hops = multihop_features(g, x);
  const std::size_t d = x.cols();
  const std::size_t p = pe.cols();
  Matrix out(x.rows(), d + p);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c)
      out(r, c) = (x(r, c) + hops.hop1(r, c) + hops.hop2(r, c)) / 3.0;
    for (std::size_t c = 0; c < p; ++c) out(r, d + c) = pe(r, c);
  }
  return out;
}

Matrix context_features(const Graph& g, const Matrix& x, std::size_t p) {
  if (p == 0) throw InputError("positional encoding dimension must be at least 1");
  return context_features_with_pe(g, x, laplacian_pe(g, p));
}

Subgraph induced_subgraph(const Graph& g, std::span<const NodeId> nodes) {
  Subgraph sg;
  sg.old_to_new.assign(g.num_nodes(), -1);
  sg.nodes.assign(nodes.begin(), nodes.end());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const NodeId u = nodes[i];
    if (u < 0 || static_cast<std::size_t>(u) >= g.num_nodes())
      throw InputError("subgraph node " + std::to_string(u) + " out of range");
    if (sg.old_to_new[static_cast<std::size_t>(u)] != -1)
      throw InputError("duplicate node " + std::to_string(u) + " in subgraph list");
    sg.old_to_new[static_cast<std::size_t>(u)] = static_cast<NodeId>(i);
  }
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (NodeId v : g.neighbors(nodes[i])) {
      const NodeId nv = sg.old_to_new[static_cast<std::size_t>(v)];
      if (nv >= static_cast<NodeId>(i)) edges.push_back({static_cast<NodeId>(i), nv});
    }
  }
  sg.graph = Graph::from_edges(edges, nodes.size());
  return sg;
}

Graph read_edge_list(const std::filesystem::path& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edge list " + path.string());
  std::vector<Edge> edges;
  std::string line;
  std::size_t lineno = 0;
  NodeId max_id = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    long long u = 0;
    long long v = 0;
    bool ok = tab != std::string::npos;
    if (ok) {
      std::size_t pu = 0;
      std::size_t pv = 0;
      try {
        u = std::stoll(line.substr(0, tab), &pu);
        v = std::stoll(line.substr(tab + 1), &pv);
      } catch (const std::exception&) {
        ok = false;
      }
      ok = ok && pu == tab && tab + 1 + pv == line.size() && u >= 0 && v >= 0 &&
           u <= std::numeric_limits<NodeId>::max() && v <= std::numeric_limits<NodeId>::max();
    }
    if (!ok)
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected \"u<TAB>v\" with non-negative integers");
    edges.push_back({static_cast<NodeId>(u), static_cast<NodeId>(v)});
    max_id = std::max({max_id, static_cast<NodeId>(u), static_cast<NodeId>(v)});
  }
  if (n == 0) n = static_cast<std::size_t>(max_id + 1);
  if (max_id >= 0 && static_cast<std::size_t>(max_id) >= n)
    throw DataError(path.string() + ": edges reference " + std::to_string(max_id + 1) + " nodes (max index " +
                    std::to_string(max_id) + ") but n=" + std::to_string(n));
  return Graph::from_edges(edges, n);
}

void write_edge_list(const std::filesystem::path& path, const Graph& g) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write edge list " + path.string());
  out << "# undirected edge list, n=" << g.num_nodes() << "\n";
  for (const Edge& e : g.edge_list()) out << e.u << '\t' << e.v << '\n';
}

Graph permute(const Graph& g, std::span<const NodeId> perm) {
  if (perm.size() != g.num_nodes()) throw InputError("permutation size mismatch");
  std::vector<Edge> edges;
  for (const Edge& e : g.edge_list())
    edges.push_back({perm[static_cast<std::size_t>(e.u)], perm[static_cast<std::size_t>(e.v)]});
  return Graph::from_edges(edges, g.num_nodes());
}

}  // namespace sagmm::graph
