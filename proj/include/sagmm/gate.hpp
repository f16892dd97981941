// SPDX-License-Identifier: Apache-2.0
#pragma once

// Per-node expert routing. The topology-aware gate scores experts with a
// linear global attention over context features, squashes the scores with a
// sigmoid and keeps every expert whose score clears its learnable threshold.
// Rows where nothing clears fall back to the single highest-scoring expert.

#include <memory>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "sagmm/autodiff.hpp"

namespace sagmm::gate {

enum class GatingMode { Taag, NoisyTopK, TopAny, None };
enum class GateInit { Zeros, Randn };

std::string_view mode_name(GatingMode m) noexcept;
GatingMode parse_mode(std::string_view s);

inline constexpr double kFrobeniusEps = 1e-12;
inline constexpr double kDegenerateDiag = 1e-9;

struct GateConfig {
  GatingMode mode = GatingMode::Taag;
  std::size_t ctx_dim = 0;   // columns of the context features (d + p)
  std::size_t raw_dim = 0;   // columns of the raw features (baseline gates)
  std::size_t num_experts = 0;
  std::size_t topk_k = 2;
  GateInit threshold_init = GateInit::Zeros;
  ad::MaskGradient mask_gradient = ad::MaskGradient::StraightThrough;
};

/// Result of thresholding sigmoid scores.
struct MaskResult {
  ad::Var mask;                 // n x N, entries 0/1
  std::vector<std::size_t> k;   // selected experts per row, after fallback
  std::vector<bool> fallback;   // row needed the fallback
};

/// M = sign(relu(Z' - T)) restricted to alive columns, plus the argmax fallback
/// (lowest index wins ties) on rows with no selection. t is 1 x N.
MaskResult threshold_mask(ad::Var zprime, ad::Var t, const std::vector<bool>& alive,
                          ad::MaskGradient mode = ad::MaskGradient::StraightThrough);

/// Softmax over the k largest selectable logits of each row, zero elsewhere.
ad::Var topk_softmax(ad::Var logits, std::size_t k, const std::vector<bool>& selectable);

struct GateOutput {
  ad::Var scores;   // Z (modes with a score), n x N
  ad::Var zprime;   // sigmoid(Z) or the dense softmax for top-k
  ad::Var gates;    // G, zero on unselected and pruned columns
  std::vector<std::size_t> k;
  std::vector<bool> fallback;
};

/// Linear global attention scores; pruned columns of Q, K, V are zeroed and
/// the 1/N factor uses the alive count. Throws NumericalError on a
/// degenerate normalizer row.
ad::Var sga_scores(ad::Tape& tape, ad::Var ctx, ad::Var wq, ad::Var wk, ad::Var wv, ad::Var wr, ad::Var beta,
                   const std::vector<bool>& alive);

class Gate {
 public:
  Gate(GateConfig cfg, std::uint64_t seed);

  /// ctx: n x ctx_dim context features; raw: n x raw_dim input features.
  GateOutput forward(ad::Tape& tape, ad::Var ctx, ad::Var raw, const std::vector<bool>& alive, bool training,
                     std::mt19937_64* rng);

  std::vector<ad::Parameter*> parameters();
  [[nodiscard]] const GateConfig& config() const noexcept { return cfg_; }
  /// Current thresholds sigmoid(T_init), or empty when the mode has none.
  [[nodiscard]] std::vector<double> thresholds() const;

  ad::Parameter* find(std::string_view name);

 private:
  ad::Parameter& add(std::string name, Matrix value);

  GateConfig cfg_;
  std::vector<std::unique_ptr<ad::Parameter>> params_;
};

}  // namespace sagmm::gate
