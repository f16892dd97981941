// SPDX-License-Identifier: Apache-2.0
// Laplacian positional encodings via a dense symmetric eigensolver.
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "sagmm/errors.hpp"
#include "sagmm/graph.hpp"

namespace sagmm::graph {
namespace {

constexpr double kSignTol = 1e-10;
constexpr double kTieTol = 1e-9;

}  // namespace

std::pair<Matrix, std::vector<double>> laplacian_eigenpairs(const Graph& g, std::size_t p) {
  const std::size_t n = g.num_nodes();
  if (p == 0 || p >= n)
    throw InputError("positional encoding dimension p=" + std::to_string(p) +
                     " must satisfy 1 <= p < n=" + std::to_string(n));
  const Matrix lap = sym_norm_laplacian(g);
  Eigen::MatrixXd dense(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c)
      dense(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = lap(r, c);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense);
  if (solver.info() != Eigen::Success) throw NumericalError("Laplacian eigensolver failed");
  const auto& evals = solver.eigenvalues();
  const auto& evecs = solver.eigenvectors();

  struct Pair {
    double value;
    std::vector<double> vec;
  };
  // Pull in every eigenpair tied with the p-th one so tie ordering is well defined.
  std::size_t take = p;
  while (take < n && std::abs(evals(static_cast<Eigen::Index>(take)) -
                              evals(static_cast<Eigen::Index>(p - 1))) <= kTieTol)
    ++take;
  std::vector<Pair> pairs(take);
  for (std::size_t j = 0; j < take; ++j) {
    pairs[j].value = evals(static_cast<Eigen::Index>(j));
    pairs[j].vec.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      pairs[j].vec[i] = evecs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    auto first = std::find_if(pairs[j].vec.begin(), pairs[j].vec.end(),
                              [](double v) { return std::abs(v) > kSignTol; });
    if (first != pairs[j].vec.end() && *first < 0.0)
      for (double& v : pairs[j].vec) v = -v;
  }
  // Eigen returns ascending eigenvalues; only reorder within tie groups.
  std::size_t start = 0;
  while (start < take) {
    std::size_t end = start + 1;
    while (end < take && std::abs(pairs[end].value - pairs[start].value) <= kTieTol) ++end;
    std::sort(pairs.begin() + static_cast<std::ptrdiff_t>(start),
              pairs.begin() + static_cast<std::ptrdiff_t>(end),
              [](const Pair& a, const Pair& b) { return a.vec < b.vec; });
    start = end;
  }
  Matrix pe(n, p);
  std::vector<double> values(p);
  for (std::size_t j = 0; j < p; ++j) {
    values[j] = pairs[j].value;
    for (std::size_t i = 0; i < n; ++i) pe(i, j) = pairs[j].vec[i];
  }
  return {std::move(pe), std::move(values)};
}

Matrix laplacian_pe(const Graph& g, std::size_t p) { return laplacian_eigenpairs(g, p).first; }

}  // namespace sagmm::graph
