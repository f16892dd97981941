// SPDX-License-Identifier: Apache-2.0
#include "sagmm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "sagmm/errors.hpp"

namespace sagmm::metrics {

std::string_view metric_name(Metric m) noexcept {
  switch (m) {
    case Metric::Accuracy: return "accuracy";
    case Metric::RocAuc: return "rocauc";
    case Metric::Rmse: return "rmse";
    case Metric::Hits: return "hits";
  }
  return "?";
}

Metric parse_metric(std::string_view s) {
  for (Metric m : {Metric::Accuracy, Metric::RocAuc, Metric::Rmse, Metric::Hits})
    if (metric_name(m) == s) return m;
  throw ConfigError("unknown metric '" + std::string(s) + "' (accuracy, rocauc, rmse, hits)");
}

double accuracy(const Matrix& logits, std::span<const int> labels, std::span<const std::size_t> rows) {
  if (rows.empty()) throw InputError("accuracy over an empty split");
  std::size_t hit = 0;
  for (std::size_t r : rows) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c)
      if (logits(r, c) > logits(r, best)) best = c;
    if (static_cast<int>(best) == labels[r]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(rows.size());
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InputError("roc_auc: score/label length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t t = i; t < j; ++t)
      if (labels[order[t]] == 1) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw InputError("roc_auc needs both classes");
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1) / 2) / (np * nn);
}

double roc_auc_columns(const Matrix& scores, const Matrix& targets, std::span<const std::size_t> rows) {
  if (rows.empty()) throw InputError("roc_auc over an empty split");
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < targets.cols(); ++c) {
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t r : rows) {
      s.push_back(scores(r, c));
      y.push_back(targets(r, c) > 0.5 ? 1 : 0);
    }
    const auto pos = std::count(y.begin(), y.end(), 1);
    if (pos == 0 || pos == static_cast<long>(y.size())) continue;
    sum += roc_auc(s, y);
    ++used;
  }
  if (used == 0) throw InputError("roc_auc: no column contains both classes");
  return sum / static_cast<double>(used);
}

double rmse(const Matrix& pred, const Matrix& targets, std::span<const std::size_t> rows) {
  if (rows.empty()) throw InputError("rmse over an empty split");
  double s = 0.0;
  for (std::size_t r : rows)
    for (std::size_t c = 0; c < targets.cols(); ++c) {
      const double d = pred(r, c) - targets(r, c);
      s += d * d;
    }
  return std::sqrt(s / static_cast<double>(rows.size() * targets.cols()));
}

double hits_at_k(std::span<const double> pos, std::span<const double> neg, std::size_t k) {
  if (pos.empty()) throw InputError("hits@k needs at least one positive");
  if (k == 0) throw InputError("hits@k needs k >= 1");
  if (neg.size() < k) return 1.0;
  std::vector<double> n(neg.begin(), neg.end());
  std::nth_element(n.begin(), n.begin() + static_cast<long>(k - 1), n.end(), std::greater<>());
  const double kth = n[k - 1];
  const auto hits = std::count_if(pos.begin(), pos.end(), [&](double s) { return s > kth; });
  return static_cast<double>(hits) / static_cast<double>(pos.size());
}

ad::Var graph_pool(ad::Var nodes, std::span<const std::size_t> membership, std::size_t graphs) {
  std::vector<std::size_t> count(graphs, 0);
  for (std::size_t g : membership) {
    if (g >= graphs) throw InputError("graph_pool: membership out of range");
    ++count[g];
  }
  for (std::size_t g = 0; g < graphs; ++g)
    if (count[g] == 0) std::fprintf(stderr, "warning: graph %zu has no nodes; pooled to zeros\n", g);
  return ad::mean_pool_rows(nodes, membership, graphs);
}

ad::Var link_decode(ad::Var emb, std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  return ad::pair_dot(emb, pairs);
}

}  // namespace sagmm::metrics
