// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <numeric>
#include <set>

#include "sagmm/errors.hpp"
#include "sagmm/experts.hpp"

namespace sagmm::experts {

ExpertPool::ExpertPool(const PoolConfig& cfg, std::size_t in_dim, std::uint64_t seed) {
  if (cfg.kinds.empty()) throw ConfigError("expert pool must contain at least one expert");
  if (!cfg.allow_duplicates) {
    std::set<ExpertKind> seen;
    for (ExpertKind k : cfg.kinds)
      if (!seen.insert(k).second)
        throw ConfigError("duplicate expert kind '" + std::string(kind_name(k)) +
                          "' (set allow_duplicates to permit)");
  }
  for (std::size_t i = 0; i < cfg.kinds.size(); ++i) {
    ExpertSpec spec = cfg.base;
    spec.kind = cfg.kinds[i];
    std::seed_seq seq{seed, static_cast<std::uint64_t>(i), std::uint64_t{0x5a6d}};
    std::uint64_t s = 0;
    std::vector<std::uint32_t> words(2);
    seq.generate(words.begin(), words.end());
    s = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    experts_.push_back(std::make_unique<Expert>(
        spec, in_dim, "expert" + std::to_string(i) + "_" + std::string(kind_name(spec.kind)), s));
    alive_.push_back(true);
  }
}

std::size_t ExpertPool::alive_count() const noexcept {
  return static_cast<std::size_t>(std::count(alive_.begin(), alive_.end(), true));
}

void ExpertPool::set_alive(std::size_t i, bool value) {
  if (i >= alive_.size()) throw InputError("expert index out of range");
  if (!value && alive_[i] && alive_count() == 1) throw InputError("cannot remove the last alive expert");
  alive_[i] = value;
}

std::vector<std::size_t> ExpertPool::alive_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < alive_.size(); ++i)
    if (alive_[i]) out.push_back(i);
  return out;
}

bool equivariance_check(const GraphFunction& f, std::size_t n, std::size_t in_dim, std::uint64_t seed, double tol) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.35);
  std::vector<graph::Edge> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (coin(rng)) edges.push_back({static_cast<graph::NodeId>(u), static_cast<graph::NodeId>(v)});
  const graph::Graph g = graph::Graph::from_edges(edges, n);
  std::normal_distribution<double> nd;
  Matrix x(n, in_dim);
  for (double& v : x.values()) v = nd(rng);

  std::vector<graph::NodeId> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const graph::Graph pg = graph::permute(g, perm);
  Matrix px(n, in_dim);
  for (std::size_t u = 0; u < n; ++u)
    std::copy(x.row(u).begin(), x.row(u).end(), px.row(static_cast<std::size_t>(perm[u])).begin());

  const Matrix y = f(g, x);
  const Matrix py = f(pg, px);
  if (!y.same_shape(py)) return false;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t j = 0; j < y.cols(); ++j)
      if (std::abs(y(u, j) - py(static_cast<std::size_t>(perm[u]), j)) > tol) return false;
  return true;
}

bool equivariance_check(const ExpertSpec& spec, std::uint64_t seed, double tol) {
  const std::size_t in_dim = 3;
  auto expert = std::make_shared<Expert>(spec, in_dim, "probe", seed);
  GraphFunction f = [expert](const graph::Graph& g, const Matrix& x) {
    Propagation prop(g);
    ad::Tape t;
    return expert->forward(t, prop, t.constant(x), {}).value();
  };
  return equivariance_check(f, 6, in_dim, seed + 1, tol);
}

}  // namespace sagmm::experts
