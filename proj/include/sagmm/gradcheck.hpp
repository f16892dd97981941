// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sagmm/autodiff.hpp"

namespace sagmm::ad {

struct GradCheckEntry {
  std::string parameter;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  GradCheckEntry worst;
};

/// Builds the loss on the tape passed in. Must be deterministic.
using LossBuilder = std::function<Var(Tape&)>;

/// Central-difference check of every coordinate of every parameter.
/// Relative error is |a - n| / max(1, |a|).
GradCheckReport grad_check(const LossBuilder& loss, std::span<Parameter* const> params, double h = 1e-5);

/// Same check for a plain function of a flat vector.
double grad_check(const std::function<double(std::span<const double>)>& f,
                  const std::function<std::vector<double>(std::span<const double>)>& grad,
                  std::vector<double> theta, double h = 1e-5);

}  // namespace sagmm::ad
