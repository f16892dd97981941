// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "sagmm/errors.hpp"
#include "sagmm/optim.hpp"

namespace sagmm::ad {

void Adam::step(std::span<Parameter* const> params) {
  for (const Parameter* p : params)
    if (p->has_grad() && !p->grad().all_finite())
      throw NumericalError("non-finite gradient in parameter '" + p->name() + "'");

  for (Parameter* p : params) {
    if (!p->has_grad()) continue;
    AdamSlot& s = slots_[p->name()];
    if (s.m.empty()) {
      s.m = Matrix(p->value().rows(), p->value().cols());
      s.v = Matrix(p->value().rows(), p->value().cols());
    }
    if (!s.m.same_shape(p->value()))
      throw InputError("optimizer state shape mismatch for '" + p->name() + "'");
    ++s.step;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.step));
    auto w = p->value().values();
    const auto g = p->grad().values();
    auto m = s.m.values();
    auto v = s.v.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[i]);
    }
  }
}

}  // namespace sagmm::ad
