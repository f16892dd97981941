// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "sagmm/matrix.hpp"

namespace sagmm::oracle {

inline Matrix randn(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Matrix m(r, c);
  for (double& v : m.values()) v = d(rng);
  return m;
}

// Direct O(n^2) evaluation of the attention scores with explicit n x n weights.
inline Matrix dense_sga(const Matrix& x, const Matrix& wq, const Matrix& wk, const Matrix& wv, const Matrix& wr, double beta,
                 const std::vector<bool>& alive) {
  const std::size_t n = x.rows(), N0 = wq.cols();
  double N = 0;
  for (bool a : alive) N += a ? 1 : 0;
  auto proj = [&](const Matrix& w) {
    Matrix p = matmul(x, w);
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t j = 0; j < N0; ++j)
        if (!alive[j]) p(u, j) = 0.0;
    return p;
  };
  Matrix q = proj(wq), k = proj(wk), v = proj(wv);
  auto fro = [](const Matrix& m) {
    double s = 0;
    for (double e : m.values()) s += e * e;
    return std::sqrt(s);
  };
  const double nq = fro(q) + 1e-12, nk = fro(k) + 1e-12;
  Matrix s(n, n);  // s[u][w] = <qn_u, kn_w>
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t w = 0; w < n; ++w) {
      double d = 0;
      for (std::size_t j = 0; j < N0; ++j) d += q(u, j) / nq * k(w, j) / nk;
      s(u, w) = d;
    }
  Matrix r = matmul(x, wr);
  Matrix z(n, N0);
  for (std::size_t u = 0; u < n; ++u) {
    double dg = 1.0;
    for (std::size_t w = 0; w < n; ++w) dg += s(u, w) / N;
    for (std::size_t j = 0; j < N0; ++j) {
      double acc = v(u, j);
      for (std::size_t w = 0; w < n; ++w) acc += s(u, w) * v(w, j) / N;
      z(u, j) = beta * acc / dg + (1 - beta) * r(u, j);
    }
  }
  return z;
}

}  // namespace sagmm::oracle
