// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "sagmm/gradcheck.hpp"

namespace sagmm::ad {
namespace {

double evaluate(const LossBuilder& loss) {
  Tape t;
  return loss(t).item();
}

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& loss, std::span<Parameter* const> params, double h) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape t;
    t.backward(loss(t));
  }
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params)
    analytic.push_back(p->has_grad() ? p->grad() : Matrix(p->value().rows(), p->value().cols()));

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k]->value().values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + h;
      const double fp = evaluate(loss);
      w[i] = saved - h;
      const double fm = evaluate(loss);
      w[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[k].values()[i];
      const double e = rel_error(a, numeric);
      ++report.checked;
      if (e >= report.max_rel_error) {
        report.max_rel_error = e;
        report.worst = {params[k]->name(), i, a, numeric, e};
      }
    }
  }
  return report;
}

double grad_check(const std::function<double(std::span<const double>)>& f,
                  const std::function<std::vector<double>(std::span<const double>)>& grad,
                  std::vector<double> theta, double h) {
  const std::vector<double> g = grad(theta);
  double worst = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + h;
    const double fp = f(theta);
    theta[i] = saved - h;
    const double fm = f(theta);
    theta[i] = saved;
    worst = std::max(worst, rel_error(g[i], (fp - fm) / (2.0 * h)));
  }
  return worst;
}

}  // namespace sagmm::ad
