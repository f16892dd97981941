// SPDX-License-Identifier: Apache-2.0
#include "sagmm/gate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "sagmm/errors.hpp"

namespace sagmm::gate {

using ad::Tape;
using ad::Var;

namespace {

Matrix alive_row(const std::vector<bool>& alive) {
  Matrix r(1, alive.size());
  for (std::size_t j = 0; j < alive.size(); ++j) r(0, j) = alive[j] ? 1.0 : 0.0;
  return r;
}

std::size_t count_alive(const std::vector<bool>& alive) {
  return static_cast<std::size_t>(std::count(alive.begin(), alive.end(), true));
}

Matrix glorot(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix w(in, out);
  for (double& v : w.values()) v = u(rng);
  return w;
}

}  // namespace

std::string_view mode_name(GatingMode m) noexcept {
  switch (m) {
    case GatingMode::Taag: return "taag";
    case GatingMode::NoisyTopK: return "noisy_topk";
    case GatingMode::TopAny: return "top_any";
    case GatingMode::None: return "none";
  }
  return "unknown";
}

GatingMode parse_mode(std::string_view s) {
  for (GatingMode m : {GatingMode::Taag, GatingMode::NoisyTopK, GatingMode::TopAny, GatingMode::None})
    if (mode_name(m) == s) return m;
  throw ConfigError("unknown gating_mode '" + std::string(s) + "'");
}

MaskResult threshold_mask(Var zprime, Var t, const std::vector<bool>& alive, ad::MaskGradient mode) {
  const std::size_t n = zprime.rows();
  const std::size_t N = zprime.cols();
  if (t.rows() != 1 || t.cols() != N || alive.size() != N)
    throw InputError("threshold_mask: threshold/alive width does not match the scores");
  if (count_alive(alive) == 0) throw InputError("threshold_mask: no alive expert");
  Tape& tape = zprime.tape();

  Var m = ad::sign_straight_through(ad::relu(ad::sub_row(zprime, t)), mode);
  m = ad::mul_row(m, tape.constant(alive_row(alive)));

  MaskResult out;
  out.k.assign(n, 0);
  out.fallback.assign(n, false);
  Matrix extra(n, N);
  bool any_fallback = false;
  // Fetched after the pushes above, which may reallocate the tape.
  const Matrix& zp = zprime.value();
  const Matrix& mv = m.value();
  for (std::size_t u = 0; u < n; ++u) {
    std::size_t k = 0;
    for (std::size_t j = 0; j < N; ++j) k += mv(u, j) > 0.0 ? 1 : 0;
    if (k == 0) {
      std::size_t best = N;
      for (std::size_t j = 0; j < N; ++j)
        if (alive[j] && (best == N || zp(u, j) > zp(u, best))) best = j;
      extra(u, best) = 1.0;
      out.fallback[u] = true;
      any_fallback = true;
      k = 1;
    }
    out.k[u] = k;
  }
  out.mask = any_fallback ? ad::add(m, tape.constant(std::move(extra))) : m;
  return out;
}

Var topk_softmax(Var logits, std::size_t k, const std::vector<bool>& selectable) {
  const Matrix& z = logits.value();
  const std::size_t N = z.cols();
  if (selectable.size() != N) throw InputError("topk_softmax: selectable width mismatch");
  const std::size_t avail = count_alive(selectable);
  if (k == 0 || avail == 0) throw ConfigError("topk_softmax: k must be >= 1 with at least one selectable expert");
  k = std::min(k, avail);
  Matrix y(z.rows(), N);
  std::vector<std::size_t> order(N);
  for (std::size_t u = 0; u < z.rows(); ++u) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (selectable[a] != selectable[b]) return selectable[a];
      return z(u, a) > z(u, b);
    });
    const double m = z(u, order[0]);
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += (y(u, order[i]) = std::exp(z(u, order[i]) - m));
    for (std::size_t i = 0; i < k; ++i) y(u, order[i]) /= s;
  }
  const std::size_t il = logits.id();
  const std::array parents{logits};
  return logits.tape().push(std::move(y), parents, [il](Tape& t, std::size_t self) {
    // Softmax Jacobian on the support; unselected entries have y = 0 and get nothing.
    const Matrix& g = t.grad(self);
    const Matrix& Y = t.value(self);
    Matrix& gl = t.grad_buffer(il);
    for (std::size_t u = 0; u < g.rows(); ++u) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) dot += g(u, j) * Y(u, j);
      for (std::size_t j = 0; j < g.cols(); ++j) gl(u, j) += Y(u, j) * (g(u, j) - dot);
    }
  });
}

Var sga_scores(Tape& tape, Var ctx, Var wq, Var wk, Var wv, Var wr, Var beta, const std::vector<bool>& alive) {
  const std::size_t N = count_alive(alive);
  if (N == 0) throw InputError("sga_scores: no alive expert");
  if (wq.cols() != alive.size()) throw InputError("sga_scores: alive mask width mismatch");
  const Var live = tape.constant(alive_row(alive));
  const double inv_n = 1.0 / static_cast<double>(N);

  Var q = ad::mul_row(ad::matmul(ctx, wq), live);
  Var k = ad::mul_row(ad::matmul(ctx, wk), live);
  Var v = ad::mul_row(ad::matmul(ctx, wv), live);
  Var qn = ad::scale_by(q, ad::reciprocal(ad::add_scalar(ad::frobenius_norm(q), kFrobeniusEps)));
  Var kn = ad::scale_by(k, ad::reciprocal(ad::add_scalar(ad::frobenius_norm(k), kFrobeniusEps)));

  // D_g = 1 + (1/N) Qn (Kn^T 1), evaluated right-to-left so nothing is n x n.
  Var ksum = ad::transpose(ad::col_sum(kn));  // N x 1
  Var diag = ad::add_scalar(ad::scale(ad::matmul(qn, ksum), inv_n), 1.0);
  const Matrix& dv = diag.value();
  for (std::size_t u = 0; u < dv.rows(); ++u)
    if (!(std::abs(dv(u, 0)) >= kDegenerateDiag))
      throw NumericalError("attention normalizer degenerate at node " + std::to_string(u) + " (value " +
                           std::to_string(dv(u, 0)) + ")");

  Var kv = ad::matmul(ad::transpose(kn), v);  // N x N
  Var num = ad::add(v, ad::scale(ad::matmul(qn, kv), inv_n));
  Var attn = ad::div_col(num, diag);
  Var residual = ad::matmul(ctx, wr);
  Var one_minus = ad::add_scalar(ad::scale(beta, -1.0), 1.0);
  return ad::add(ad::scale_by(attn, beta), ad::scale_by(residual, one_minus));
}

Gate::Gate(GateConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg_.num_experts == 0) throw ConfigError("gate needs at least one expert");
  std::mt19937_64 rng(seed);
  const std::size_t N = cfg_.num_experts;
  auto threshold = [&] {
    Matrix t(1, N);
    if (cfg_.threshold_init == GateInit::Randn) {
      std::normal_distribution<double> nd;
      for (double& v : t.values()) v = nd(rng);
    }
    return t;
  };
  switch (cfg_.mode) {
    case GatingMode::Taag:
      if (cfg_.ctx_dim == 0) throw ConfigError("gate context dimension must be >= 1");
      add("gate.w_q", glorot(cfg_.ctx_dim, N, rng));
      add("gate.w_k", glorot(cfg_.ctx_dim, N, rng));
      add("gate.w_v", glorot(cfg_.ctx_dim, N, rng));
      add("gate.w_r", glorot(cfg_.ctx_dim, N, rng));
      add("gate.t_init", threshold());
      add("gate.beta_raw", Matrix(1, 1, 0.0));
      break;
    case GatingMode::NoisyTopK:
      if (cfg_.topk_k == 0 || cfg_.topk_k > N)
        throw ConfigError("topk_k must be in [1, " + std::to_string(N) + "], got " + std::to_string(cfg_.topk_k));
      add("gate.w_g", glorot(cfg_.raw_dim, N, rng));
      add("gate.w_noise", Matrix(cfg_.raw_dim, N));
      break;
    case GatingMode::TopAny:
      add("gate.w_g", glorot(cfg_.raw_dim, N, rng));
      add("gate.b_g", Matrix(1, N));
      add("gate.t_init", threshold());
      break;
    case GatingMode::None:
      break;
  }
}

ad::Parameter& Gate::add(std::string name, Matrix value) {
  params_.push_back(std::make_unique<ad::Parameter>(std::move(name), std::move(value)));
  return *params_.back();
}

ad::Parameter* Gate::find(std::string_view name) {
  for (auto& p : params_)
    if (p->name() == name) return p.get();
  return nullptr;
}

std::vector<ad::Parameter*> Gate::parameters() {
  std::vector<ad::Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<double> Gate::thresholds() const {
  for (const auto& p : params_)
    if (p->name() == "gate.t_init") {
      std::vector<double> t;
      for (double v : p->value().values()) t.push_back(1.0 / (1.0 + std::exp(-v)));
      return t;
    }
  return {};
}

GateOutput Gate::forward(Tape& tape, Var ctx, Var raw, const std::vector<bool>& alive, bool training,
                         std::mt19937_64* rng) {
  const std::size_t N = cfg_.num_experts;
  if (alive.size() != N) throw InputError("gate: alive mask has wrong width");
  const std::size_t n = ctx.valid() ? ctx.rows() : raw.rows();
  GateOutput out;
  switch (cfg_.mode) {
    case GatingMode::Taag: {
      Var beta = ad::sigmoid(tape.param(*find("gate.beta_raw")));
      out.scores = sga_scores(tape, ctx, tape.param(*find("gate.w_q")), tape.param(*find("gate.w_k")),
                              tape.param(*find("gate.w_v")), tape.param(*find("gate.w_r")), beta, alive);
      out.zprime = ad::sigmoid(out.scores);
      MaskResult m = threshold_mask(out.zprime, ad::sigmoid(tape.param(*find("gate.t_init"))), alive,
                                    cfg_.mask_gradient);
      out.gates = ad::hadamard(out.zprime, m.mask);
      out.k = std::move(m.k);
      out.fallback = std::move(m.fallback);
      return out;
    }
    case GatingMode::TopAny: {
      out.scores = ad::add_row(ad::matmul(raw, tape.param(*find("gate.w_g"))), tape.param(*find("gate.b_g")));
      out.zprime = ad::sigmoid(out.scores);
      MaskResult m = threshold_mask(out.zprime, ad::sigmoid(tape.param(*find("gate.t_init"))), alive,
                                    cfg_.mask_gradient);
      out.gates = ad::hadamard(out.zprime, m.mask);
      out.k = std::move(m.k);
      out.fallback = std::move(m.fallback);
      return out;
    }
    case GatingMode::NoisyTopK: {
      Var logits = ad::matmul(raw, tape.param(*find("gate.w_g")));
      if (training && rng != nullptr) {
        std::normal_distribution<double> nd;
        Matrix eps(n, N);
        for (double& v : eps.values()) v = nd(*rng);
        Var sd = ad::softplus(ad::matmul(raw, tape.param(*find("gate.w_noise"))));
        logits = ad::add(logits, ad::hadamard(sd, tape.constant(std::move(eps))));
      }
      out.scores = logits;
      out.gates = topk_softmax(logits, cfg_.topk_k, alive);
      out.zprime = out.gates;
      const std::size_t k = std::min(cfg_.topk_k, count_alive(alive));
      out.k.assign(n, k);
      out.fallback.assign(n, false);
      return out;
    }
    case GatingMode::None: {
      Matrix ones(n, N);
      for (std::size_t u = 0; u < n; ++u)
        for (std::size_t j = 0; j < N; ++j) ones(u, j) = alive[j] ? 1.0 : 0.0;
      out.gates = tape.constant(ones);
      out.zprime = out.gates;
      out.scores = out.gates;
      out.k.assign(n, count_alive(alive));
      out.fallback.assign(n, false);
      return out;
    }
  }
  throw ConfigError("unhandled gating mode");
}

}  // namespace sagmm::gate
