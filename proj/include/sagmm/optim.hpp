// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>

#include "sagmm/autodiff.hpp"

namespace sagmm::ad {

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled (AdamW-style) weight decay.
  double weight_decay = 0.0;
};

/// Moment estimates for one parameter.
struct AdamSlot {
  Matrix m;
  Matrix v;
  std::int64_t step = 0;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Updates every parameter in params that carries a gradient. Parameters
  /// without a gradient keep their value and their moments untouched.
  /// Throws NumericalError naming the first parameter with a non-finite gradient.
  void step(std::span<Parameter* const> params);

  [[nodiscard]] const AdamConfig& config() const noexcept { return cfg_; }
  void set_lr(double lr) noexcept { cfg_.lr = lr; }

  [[nodiscard]] const std::unordered_map<std::string, AdamSlot>& slots() const noexcept { return slots_; }
  std::unordered_map<std::string, AdamSlot>& slots() noexcept { return slots_; }

 private:
  AdamConfig cfg_;
  std::unordered_map<std::string, AdamSlot> slots_;
};

}  // namespace sagmm::ad
