// SPDX-License-Identifier: Apache-2.0
#pragma once

// Tape-based reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every operation as a node holding its forward value and a
// backward closure. backward() replays the nodes in reverse creation order,
// which is a valid topological order since each node only references earlier
// ones. Gradients are summed across multiple uses of a value. Leaves bound to
// a Parameter deposit their gradient into Parameter::grad.

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sagmm/graph.hpp"
#include "sagmm/matrix.hpp"

namespace sagmm::ad {

/// Named learnable matrix living outside any tape.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Matrix value);

  [[nodiscard]] const std::string& name() const noexcept { return name_; }
  [[nodiscard]] Matrix& value() noexcept { return value_; }
  [[nodiscard]] const Matrix& value() const noexcept { return value_; }
  /// Empty until a backward pass touched this parameter.
  [[nodiscard]] Matrix& grad() noexcept { return grad_; }
  [[nodiscard]] const Matrix& grad() const noexcept { return grad_; }
  [[nodiscard]] bool has_grad() const noexcept { return !grad_.empty(); }
  void zero_grad() noexcept { grad_ = Matrix(); }
  void accumulate_grad(const Matrix& g);

 private:
  std::string name_;
  Matrix value_;
  Matrix grad_;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  [[nodiscard]] const Matrix& value() const;
  [[nodiscard]] const Matrix& grad() const;
  [[nodiscard]] std::size_t rows() const { return value().rows(); }
  [[nodiscard]] std::size_t cols() const { return value().cols(); }
  [[nodiscard]] bool valid() const noexcept { return tape_ != nullptr; }
  [[nodiscard]] Tape& tape() const { return *tape_; }
  [[nodiscard]] std::size_t id() const noexcept { return id_; }
  /// Scalar value of a 1x1 node.
  [[nodiscard]] double item() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf that receives a gradient but is not tied to a Parameter.
  Var variable(Matrix value);
  /// Leaf bound to p; backward() adds into p.grad().
  Var param(Parameter& p);

  /// Seeds d(loss)/d(loss) = 1 and replays the tape. loss must be 1x1.
  void backward(Var loss);

  /// Appends a node. Nodes with no gradient-carrying parent drop their closure.
  Var push(Matrix value, std::span<const Var> parents, BackwardFn fn);

  [[nodiscard]] const Matrix& value(std::size_t id) const { return nodes_.at(id).value; }
  [[nodiscard]] const Matrix& grad(std::size_t id) const { return nodes_.at(id).grad; }
  /// Gradient buffer of node id, allocated as zeros on first access.
  Matrix& grad_buffer(std::size_t id);
  [[nodiscard]] bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }
  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
};

// ---- core ops ---------------------------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
/// a + row, row is 1 x cols(a), broadcast over rows.
Var add_row(Var a, Var row);
Var sub_row(Var a, Var row);
/// a .* row (column scaling).
Var mul_row(Var a, Var row);
/// a .* col (row scaling), col is rows(a) x 1.
Var mul_col(Var a, Var col);
/// a ./ col.
Var div_col(Var a, Var col);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
/// a * s with s a 1x1 node.
Var scale_by(Var a, Var s);
Var concat_cols(std::span<const Var> parts);
Var gather_cols(Var a, std::span<const std::size_t> cols);
Var gather_rows(Var a, std::span<const std::size_t> rows);

Var sigmoid(Var a);
Var relu(Var a);
Var elu(Var a, double alpha = 1.0);
Var leaky_relu(Var a, double slope);
Var row_softmax(Var a);
/// Elementwise 1/a.
Var reciprocal(Var a);
/// log(1 + exp(a)).
Var softplus(Var a);

Var col_sum(Var a);   // 1 x cols
Var row_sum(Var a);   // rows x 1
Var sum_all(Var a);   // 1 x 1
Var frobenius_norm(Var a);
/// Segment mean: groups x cols, row g averages the rows r with membership[r] == g.
/// Empty groups give zero rows.
Var mean_pool_rows(Var a, std::span<const std::size_t> membership, std::size_t groups);
/// Columns scaled to unit Euclidean norm, a(:,j) / (||a(:,j)|| + eps).
Var normalize_cols(Var a, double eps);
/// Squared coefficient of variation of a row vector (population variance).
Var cv_squared(Var row, double eps = 1e-12);

/// S * a for a constant sparse operator S.
Var spmm(const graph::SparseMatrix& s, Var a);

/// Inverted dropout; identity when rate == 0.
Var dropout(Var a, double rate, std::mt19937_64& rng);

/// Backward rule of the binarization below.
enum class MaskGradient {
  StraightThrough,  // pass the upstream gradient through unchanged
  Exact,            // true derivative of a step function: zero
};
/// Forward 1 where a > 0, else 0.
Var sign_straight_through(Var a, MaskGradient mode = MaskGradient::StraightThrough);

/// Single-head graph attention over the pattern of s (values ignored):
/// e_uv = leaky(src[u] + dst[v]), alpha = softmax over row u, out_u = sum_v alpha_uv h_v.
/// src and dst are n x 1. When attention_out is non-null it receives alpha in
/// CSR order of s.
Var graph_attention(const graph::SparseMatrix& s, Var h, Var src, Var dst, double slope,
                    std::vector<double>* attention_out = nullptr);

/// Per-pair dot products of rows, m x 1.
Var pair_dot(Var emb, std::span<const std::pair<std::size_t, std::size_t>> pairs);

// ---- losses (all return 1x1 means over the selected rows) -----------------

Var cross_entropy(Var logits, std::span<const int> labels, std::span<const std::size_t> rows);
Var bce_with_logits(Var logits, const Matrix& targets, std::span<const std::size_t> rows);
Var mse(Var pred, const Matrix& targets, std::span<const std::size_t> rows);

}  // namespace sagmm::ad
