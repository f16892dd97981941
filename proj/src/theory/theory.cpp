// SPDX-License-Identifier: Apache-2.0
#include "sagmm/theory.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <random>
#include <thread>

#include "sagmm/errors.hpp"

namespace sagmm::theory {
namespace {

using graph::Edge;
using graph::NodeId;

std::uint64_t splitmix(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double logistic(double t) noexcept {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

void check_eps(double eps0) {
  if (!(eps0 > 0.0) || !std::isfinite(eps0)) throw InputError("eps0 must be positive and finite");
}

// Sym-normalized adjacency of an Erdos-Renyi graph plus a ring, dense.
Matrix convolution(std::size_t n, std::mt19937_64& rng) {
  std::vector<Edge> edges;
  std::bernoulli_distribution coin(0.1);
  for (std::size_t i = 0; i < n; ++i) {
    edges.push_back({static_cast<NodeId>(i), static_cast<NodeId>((i + 1) % n)});
    for (std::size_t j = i + 1; j < n; ++j)
      if (coin(rng)) edges.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j)});
  }
  return graph::sym_normalized_adjacency(graph::Graph::from_edges(edges, n)).to_dense();
}

std::uint64_t mc_chunk(const McConfig& cfg, std::uint64_t index, std::uint64_t count) {
  std::mt19937_64 rng(splitmix(cfg.seed ^ splitmix(index + 1)));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution label(0.5);
  const std::size_t n = cfg.n, d = cfg.d, c = cfg.c;
  const Matrix conv = convolution(n, rng);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::uniform_int_distribution<std::uint32_t> bucket(0, static_cast<std::uint32_t>(c - 1));

  std::vector<double> x(n * d), row_cs(c), col_cs(c), a1(d), y(d);
  std::vector<std::uint32_t> h(n);
  std::vector<double> s(n);
  std::uint64_t hits = 0;
  for (std::uint64_t t = 0; t < count; ++t) {
    const std::size_t u = pick(rng);
    for (auto& v : x) v = normal(rng);
    for (std::size_t j = 0; j < n; ++j) {
      h[j] = bucket(rng);
      s[j] = (rng() & 1U) ? 1.0 : -1.0;
    }
    // First-order approximation: (C X)(u, :) estimated by sketched inner products.
    std::fill(row_cs.begin(), row_cs.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) row_cs[h[j]] += s[j] * conv(u, j);
    for (std::size_t col = 0; col < d; ++col) {
      std::fill(col_cs.begin(), col_cs.end(), 0.0);
      for (std::size_t j = 0; j < n; ++j) col_cs[h[j]] += s[j] * x[j * d + col];
      double dot = 0.0;
      for (std::size_t b = 0; b < c; ++b) dot += row_cs[b] * col_cs[b];
      a1[col] = dot;
    }
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t e = 0; e < cfg.k; ++e)
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t col = 0; col < d; ++col) y[col] += a1[r] * normal(rng);
    const double eta = posterior_eta(y) / static_cast<double>(cfg.k);
    const int lbl = label(rng) ? 1 : 0;
    if (stable_bce(eta, lbl, cfg.eps0) <= cfg.a) ++hits;
  }
  return hits;
}

}  // namespace

double posterior_eta(std::span<const double> x) noexcept {
  double t = 0.0;
  for (double v : x) t += v;
  return logistic(t);
}

double stable_bce(double x, int y, double eps0) noexcept {
  return y ? -std::log(x + eps0) : -std::log(1.0 - x + eps0);
}

double bound_u(double eps0) {
  check_eps(eps0);
  return -std::log(eps0);
}

double bound_f(std::size_t k, double eps0) {
  if (k < 2) throw InputError("k must be at least 2, got " + std::to_string(k));
  check_eps(eps0);
  const double kk = static_cast<double>(k);
  return std::log(2.0 * kk * kk) - std::log(2.0 * kk * (1.0 + eps0) - 1.0);
}

BoundValue theorem_bound(std::size_t k, double eps0, double a) {
  const double u = bound_u(eps0);
  if (!(a > 0.0) || !(a < u))
    throw InputError("loss level a must lie in (0, U) with U = " + std::to_string(u) + ", got " + std::to_string(a));
  BoundValue b;
  b.raw = (u - bound_f(k, eps0)) / (u - a);
  b.value = std::clamp(b.raw, 0.0, 1.0);
  if (b.raw > 1.0) {
    b.vacuous = true;
    std::fprintf(stderr, "warning: bound %.6g > 1 at k=%zu is vacuous; clamped to 1\n", b.raw, k);
  }
  return b;
}

Interval wilson(std::uint64_t successes, std::uint64_t trials, double z) {
  if (trials == 0) throw InputError("wilson interval needs at least one trial");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * n)) / (1 + z2 / n);
  const double half = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n);
  return {p, std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

SketchSpec make_sketch(std::size_t n, std::size_t c, std::uint64_t seed) {
  if (c == 0) throw InputError("sketch width must be positive");
  SketchSpec sp{n, c, seed, std::vector<std::uint32_t>(n), std::vector<std::int8_t>(n)};
  std::mt19937_64 rng(splitmix(seed));
  std::uniform_int_distribution<std::uint32_t> bucket(0, static_cast<std::uint32_t>(c - 1));
  for (std::size_t j = 0; j < n; ++j) {
    sp.h[j] = bucket(rng);
    sp.s[j] = (rng() & 1U) ? 1 : -1;
  }
  return sp;
}

std::vector<double> count_sketch(std::span<const double> u, const SketchSpec& spec) {
  if (u.size() != spec.n || spec.h.size() != spec.n || spec.s.size() != spec.n)
    throw InputError("sketch built for length " + std::to_string(spec.n) + ", vector has " +
                     std::to_string(u.size()));
  std::vector<double> out(spec.c, 0.0);
  for (std::size_t j = 0; j < u.size(); ++j) out[spec.h[j]] += spec.s[j] * u[j];
  return out;
}

std::vector<SketchRow> cs_inner_check(std::span<const std::size_t> dims, std::span<const std::size_t> widths,
                                      std::size_t trials, std::uint64_t seed) {
  if (trials < 2) throw InputError("sketch check needs at least 2 trials");
  std::vector<SketchRow> rows;
  for (std::size_t dim : dims) {
    if (dim == 0) throw InputError("sketch dims must be positive");
    std::mt19937_64 rng(splitmix(seed ^ (0x51ed27ULL * dim)));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> u(dim), v(dim);
    for (auto& x : u) x = normal(rng);
    // v correlated with u so the true inner product is far from zero.
    for (std::size_t j = 0; j < dim; ++j) v[j] = 0.5 * u[j] + normal(rng);
    double truth = 0.0;
    for (std::size_t j = 0; j < dim; ++j) truth += u[j] * v[j];
    for (std::size_t width : widths) {
      double sum = 0.0, sq = 0.0, err2 = 0.0;
      for (std::size_t t = 0; t < trials; ++t) {
        const auto sp = make_sketch(dim, width, splitmix(seed + 1000003ULL * width + t));
        const auto cu = count_sketch(u, sp), cv = count_sketch(v, sp);
        double est = 0.0;
        for (std::size_t b = 0; b < width; ++b) est += cu[b] * cv[b];
        sum += est;
        sq += est * est;
        err2 += (est - truth) * (est - truth);
      }
      const double nt = static_cast<double>(trials);
      const double mean = sum / nt;
      const double var = std::max(0.0, (sq - nt * mean * mean) / (nt - 1));
      rows.push_back({dim, width, trials, truth, mean, 2.5758 * std::sqrt(var / nt), std::sqrt(err2 / nt)});
    }
  }
  return rows;
}

McResult monte_carlo_loss_prob(const McConfig& cfg) {
  if (cfg.k < 1) throw InputError("k must be positive");
  check_eps(cfg.eps0);
  if (cfg.samples == 0 || cfg.chunk == 0 || cfg.d == 0 || cfg.n < 3 || cfg.c == 0)
    throw InputError("monte carlo sizes must be positive (n >= 3)");
  const std::uint64_t chunks = (cfg.samples + cfg.chunk - 1) / cfg.chunk;
  std::vector<std::uint64_t> hits(chunks, 0);
  std::atomic<std::uint64_t> next{0};
  auto worker = [&] {
    for (std::uint64_t i; (i = next++) < chunks;) {
      const std::uint64_t count = std::min(cfg.chunk, cfg.samples - i * cfg.chunk);
      hits[i] = mc_chunk(cfg, i, count);
    }
  };
  unsigned threads = cfg.threads ? cfg.threads : std::max(1U, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, chunks));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  McResult r;
  for (auto h : hits) r.hits += h;
  r.samples = cfg.samples;
  r.prob = wilson(r.hits, r.samples);
  return r;
}

std::vector<BoundRow> bound_table(std::size_t k_min, std::size_t k_max, const McConfig& base) {
  if (k_min < 2 || k_max < k_min) throw InputError("k range must satisfy 2 <= k_min <= k_max");
  std::vector<BoundRow> rows;
  for (std::size_t k = k_min; k <= k_max; ++k) {
    McConfig c = base;
    c.k = k;
    c.seed = splitmix(base.seed + k);
    rows.push_back({k, bound_f(k, base.eps0), theorem_bound(k, base.eps0, base.a), monte_carlo_loss_prob(c)});
  }
  return rows;
}

GateScore variance_gate(const Matrix& h) {
  GateScore g;
  const std::size_t d = h.cols();
  std::vector<double> mean(d, 0.0), sq(d, 0.0);
  std::size_t used = 0;
  for (std::size_t r = 0; r < h.rows(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < d; ++c) sum += h(r, c);
    if (!(std::abs(sum) >= 1e-12)) {
      ++g.skipped;
      continue;
    }
    ++used;
    for (std::size_t c = 0; c < d; ++c) mean[c] += h(r, c) / sum;
  }
  if (used == 0) throw NumericalError("variance gate undefined: every row sum is below 1e-12");
  for (auto& m : mean) m /= static_cast<double>(used);
  for (std::size_t r = 0; r < h.rows(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < d; ++c) sum += h(r, c);
    if (!(std::abs(sum) >= 1e-12)) continue;
    for (std::size_t c = 0; c < d; ++c) {
      const double dev = h(r, c) / sum - mean[c];
      sq[c] += dev * dev;
    }
  }
  for (double s : sq) g.alpha += s / static_cast<double>(used);
  return g;
}

graph::Graph star(std::size_t leaves) {
  if (leaves == 0) throw InputError("star needs at least one leaf");
  std::vector<graph::Edge> e;
  for (std::size_t i = 1; i <= leaves; ++i) e.push_back({0, static_cast<graph::NodeId>(i)});
  return graph::Graph::from_edges(e, leaves + 1);
}

namespace {

Matrix gaussian(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(r, c);
  for (std::size_t i = 0; i < r * c; ++i) m.data()[i] = normal(rng);
  return m;
}

Matrix affine_relu(const Matrix& x, const Matrix& w, const Matrix& b, bool relu) {
  Matrix y = matmul(x, w);
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) {
      y(r, c) += b(0, c);
      if (relu) y(r, c) = std::max(0.0, y(r, c));
    }
  return y;
}

}  // namespace

Matrix case_expert_output(CaseExpert e, const graph::Graph& g, const Matrix& x, std::size_t width, std::uint64_t seed,
                          double gin_eps) {
  if (x.rows() != g.num_nodes()) throw InputError("feature rows must match the graph");
  std::mt19937_64 rng(splitmix(seed ^ (static_cast<std::uint64_t>(e) + 1) * 0x2545f4914f6cdd1dULL));
  const std::size_t f = x.cols();
  switch (e) {
    case CaseExpert::Gcn: {
      const Matrix w = gaussian(f, width, rng), b = gaussian(1, width, rng);
      return affine_relu(graph::row_normalized_with_self_loops(g).multiply(x), w, b, true);
    }
    case CaseExpert::Sage: {
      const Matrix ws = gaussian(f, width, rng), wn = gaussian(f, width, rng), b = gaussian(1, width, rng);
      Matrix y = matmul(x, ws);
      const Matrix nb = matmul(graph::row_normalized_adjacency(g).multiply(x), wn);
      for (std::size_t i = 0; i < y.rows() * y.cols(); ++i) y.data()[i] += nb.data()[i];
      return affine_relu(y, Matrix::identity(width), b, true);
    }
    case CaseExpert::Gin: {
      Matrix agg = graph::adjacency(g).multiply(x);
      for (std::size_t i = 0; i < agg.rows() * agg.cols(); ++i) agg.data()[i] += (1.0 + gin_eps) * x.data()[i];
      const Matrix w1 = gaussian(f, width, rng), b1 = gaussian(1, width, rng);
      const Matrix w2 = gaussian(width, width, rng), b2 = gaussian(1, width, rng);
      return affine_relu(affine_relu(agg, w1, b1, true), w2, b2, false);
    }
  }
  throw InputError("unknown case-study expert");
}

std::vector<CaseRow> case_study(const graph::Graph& g, std::size_t seeds, std::size_t in_dim, std::size_t width) {
  const Matrix ones(g.num_nodes(), in_dim, 1.0);
  std::vector<CaseRow> rows;
  for (std::size_t s = 0; s < seeds; ++s) {
    auto score = [&](CaseExpert e) {
      try {
        return variance_gate(case_expert_output(e, g, ones, width, s));
      } catch (const NumericalError&) {
        return GateScore{0.0, g.num_nodes()};
      }
    };
    rows.push_back({s, score(CaseExpert::Gcn), score(CaseExpert::Sage), score(CaseExpert::Gin)});
  }
  return rows;
}

}  // namespace sagmm::theory
