// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "sagmm/autodiff.hpp"
#include "sagmm/matrix.hpp"

namespace sagmm::metrics {

enum class Metric { Accuracy, RocAuc, Rmse, Hits };
std::string_view metric_name(Metric m) noexcept;
Metric parse_metric(std::string_view s);
/// RMSE is the only metric where lower is better.
[[nodiscard]] inline bool higher_is_better(Metric m) noexcept { return m != Metric::Rmse; }

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
/// Throws InputError when rows is empty.
double accuracy(const Matrix& logits, std::span<const int> labels, std::span<const std::size_t> rows);

/// Area under the ROC curve (Mann-Whitney with average ranks for ties).
/// Throws InputError when either class is absent.
double roc_auc(std::span<const double> scores, std::span<const int> labels);
/// Mean ROC-AUC over the columns that contain both classes (multi-label).
double roc_auc_columns(const Matrix& scores, const Matrix& targets, std::span<const std::size_t> rows);

double rmse(const Matrix& pred, const Matrix& targets, std::span<const std::size_t> rows);

/// Fraction of positives scoring strictly above the k-th highest negative;
/// 1 when there are fewer than k negatives.
double hits_at_k(std::span<const double> pos, std::span<const double> neg, std::size_t k);

/// Mean of node embeddings per graph; empty graphs give zero rows and a
/// warning on stderr.
ad::Var graph_pool(ad::Var nodes, std::span<const std::size_t> membership, std::size_t graphs);

/// Dot-product edge scores.
ad::Var link_decode(ad::Var emb, std::span<const std::pair<std::size_t, std::size_t>> pairs);

}  // namespace sagmm::metrics
