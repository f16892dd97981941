// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

#include "sagmm/errors.hpp"
#include "sagmm/experts.hpp"

namespace sagmm::experts {

using ad::Parameter;
using ad::Tape;
using ad::Var;

namespace {

constexpr std::array<std::pair<ExpertKind, std::string_view>, 9> kNames{{
    {ExpertKind::GCN, "gcn"},
    {ExpertKind::JKNet, "jknet"},
    {ExpertKind::ChebCNN, "cheb"},
    {ExpertKind::MixHop, "mixhop"},
    {ExpertKind::GAT, "gat"},
    {ExpertKind::SGC, "sgc"},
    {ExpertKind::GIN, "gin"},
    {ExpertKind::GraphSAGE, "sage"},
    {ExpertKind::Noise, "noise"},
}};

// Splits width into |parts| near-equal chunks, larger ones first.
std::vector<std::size_t> split_width(std::size_t width, std::size_t parts) {
  std::vector<std::size_t> out(parts, width / parts);
  for (std::size_t i = 0; i < width % parts; ++i) ++out[i];
  return out;
}

Var linear(Tape& t, Var x, Parameter& w, Parameter& b) { return ad::add_row(ad::matmul(x, t.param(w)), t.param(b)); }

}  // namespace

std::string_view kind_name(ExpertKind k) noexcept {
  for (auto [kind, name] : kNames)
    if (kind == k) return name;
  return "unknown";
}

ExpertKind parse_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "graphsage") lower = "sage";
  if (lower == "chebcnn" || lower == "graphcnn") lower = "cheb";
  for (auto [kind, n] : kNames)
    if (n == lower) return kind;
  throw ConfigError("unknown expert kind '" + std::string(name) + "'");
}

std::vector<ExpertKind> default_kinds(TaskKind task) {
  using K = ExpertKind;
  switch (task) {
    case TaskKind::NodeClassification:
      return {K::GCN, K::JKNet, K::ChebCNN, K::MixHop, K::GAT, K::SGC, K::GIN, K::GraphSAGE};
    case TaskKind::GraphClassification:
    case TaskKind::GraphRegression:
      return {K::GCN, K::GIN, K::GraphSAGE, K::GAT};
    case TaskKind::LinkPrediction:
      return {K::GraphSAGE, K::GCN, K::JKNet, K::SGC};
  }
  return {};
}

Propagation::Propagation(const graph::Graph& g)
    : num_nodes(g.num_nodes()),
      adjacency(graph::adjacency(g)),
      row_norm(graph::row_normalized_adjacency(g)),
      gcn_sym(graph::gcn_normalized_adjacency(g)),
      gcn_row(graph::row_normalized_with_self_loops(g)) {
  const graph::SparseMatrix s = graph::sym_normalized_adjacency(g);
  std::vector<double> neg(s.values().begin(), s.values().end());
  for (double& v : neg) v = -v;
  cheb = graph::SparseMatrix(s.rows(), s.cols(), {s.row_ptr().begin(), s.row_ptr().end()},
                             {s.col_idx().begin(), s.col_idx().end()}, std::move(neg));
}

void validate_spec(const ExpertSpec& spec) {
  if (spec.hidden == 0) throw ConfigError("expert hidden width must be >= 1");
  if (spec.layers == 0) throw ConfigError("expert layer count must be >= 1");
  switch (spec.kind) {
    case ExpertKind::ChebCNN:
      if (spec.cheb_order == 0) throw ConfigError("cheb_order must be >= 1");
      break;
    case ExpertKind::MixHop:
      if (spec.mixhop_powers.empty()) throw ConfigError("mixhop_powers must not be empty");
      if (spec.mixhop_powers.size() > spec.hidden)
        throw ConfigError("mixhop needs hidden >= number of powers");
      break;
    case ExpertKind::SGC:
      if (spec.sgc_steps == 0) throw ConfigError("sgc_steps must be >= 1");
      break;
    case ExpertKind::GAT:
      if (spec.gat_slope < 0.0) throw ConfigError("gat negative slope must be >= 0");
      break;
    default:
      break;
  }
}

Expert::Expert(ExpertSpec spec, std::size_t in_dim, std::string name, std::uint64_t seed)
    : spec_(std::move(spec)), in_dim_(in_dim), name_(std::move(name)), noise_rng_(seed ^ 0x9e3779b97f4a7c15ULL) {
  validate_spec(spec_);
  if (in_dim_ == 0) throw ConfigError("expert input dimension must be >= 1");
  std::mt19937_64 rng(seed);
  const std::size_t h = spec_.hidden;
  auto in_of = [&](std::size_t l) { return l == 0 ? in_dim_ : h; };
  switch (spec_.kind) {
    case ExpertKind::GCN:
      for (std::size_t l = 0; l < spec_.layers; ++l) {
        glorot("w" + std::to_string(l), in_of(l), h, rng);
        bias("b" + std::to_string(l), h, rng);
      }
      break;
    case ExpertKind::GraphSAGE:
      for (std::size_t l = 0; l < spec_.layers; ++l) {
        glorot("w" + std::to_string(l), 2 * in_of(l), h, rng);
        bias("b" + std::to_string(l), h, rng);
      }
      break;
    case ExpertKind::GAT:
      for (std::size_t l = 0; l < spec_.layers; ++l) {
        const std::string s = std::to_string(l);
        glorot("w" + s, in_of(l), h, rng);
        glorot("att_src" + s, h, 1, rng);
        glorot("att_dst" + s, h, 1, rng);
        bias("b" + s, h, rng);
      }
      break;
    case ExpertKind::GIN:
      for (std::size_t l = 0; l < spec_.layers; ++l) {
        const std::string s = std::to_string(l);
        add_param("eps" + s, Matrix(1, 1, 0.0));
        glorot("mlp_w1_" + s, in_of(l), h, rng);
        bias("mlp_b1_" + s, h, rng);
        glorot("mlp_w2_" + s, h, h, rng);
        bias("mlp_b2_" + s, h, rng);
      }
      break;
    case ExpertKind::SGC:
      glorot("w", in_dim_, h, rng);
      bias("b", h, rng);
      break;
    case ExpertKind::JKNet:
      for (std::size_t l = 0; l < spec_.layers; ++l) {
        glorot("w" + std::to_string(l), in_of(l), h, rng);
        bias("b" + std::to_string(l), h, rng);
      }
      glorot("jump_w", spec_.layers * h, h, rng);
      bias("jump_b", h, rng);
      break;
    case ExpertKind::ChebCNN:
      for (std::size_t l = 0; l < spec_.layers; ++l) {
        for (std::size_t k = 0; k <= spec_.cheb_order; ++k)
          glorot("w" + std::to_string(l) + "_t" + std::to_string(k), in_of(l), h, rng);
        bias("b" + std::to_string(l), h, rng);
      }
      break;
    case ExpertKind::MixHop: {
      const auto widths = split_width(h, spec_.mixhop_powers.size());
      for (std::size_t l = 0; l < spec_.layers; ++l) {
        for (std::size_t j = 0; j < widths.size(); ++j)
          glorot("w" + std::to_string(l) + "_p" + std::to_string(spec_.mixhop_powers[j]), in_of(l), widths[j], rng);
        bias("b" + std::to_string(l), h, rng);
      }
      break;
    }
    case ExpertKind::Noise:
      break;
  }
}

Parameter& Expert::add_param(const std::string& suffix, Matrix value) {
  params_.push_back(std::make_unique<Parameter>(name_ + "." + suffix, std::move(value)));
  return *params_.back();
}

Parameter& Expert::glorot(const std::string& suffix, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix w(fan_in, fan_out);
  for (double& v : w.values()) v = u(rng);
  return add_param(suffix, std::move(w));
}

Parameter& Expert::bias(const std::string& suffix, std::size_t width, std::mt19937_64& rng) {
  Matrix b(1, width);
  if (spec_.bias_init_std > 0.0) {
    std::normal_distribution<double> nd(0.0, spec_.bias_init_std);
    for (double& v : b.values()) v = nd(rng);
  }
  return add_param(suffix, std::move(b));
}

std::vector<Parameter*> Expert::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (spec_.kind == ExpertKind::GIN && !spec_.gin_learn_eps && p->name().find(".eps") != std::string::npos)
      continue;
    out.push_back(p.get());
  }
  return out;
}

std::vector<const Parameter*> Expert::parameters() const {
  std::vector<const Parameter*> out;
  for (Parameter* p : const_cast<Expert*>(this)->parameters()) out.push_back(p);
  return out;
}

Var Expert::forward(Tape& t, const Propagation& prop, Var x, const ForwardContext& ctx) {
  if (x.cols() != in_dim_)
    throw InputError(name_ + ": input has " + std::to_string(x.cols()) + " columns, expected " + std::to_string(in_dim_));
  if (x.rows() != prop.num_nodes) throw InputError(name_ + ": feature rows do not match the graph");
  ++evaluations_;
  attention_.clear();

  const std::size_t L = spec_.layers;
  std::size_t next = 0;
  auto take = [&]() -> Parameter& { return param(next++); };
  auto act = [&](Var v, std::size_t l) {
    return (l + 1 < L || spec_.output_activation) ? ad::relu(v) : v;
  };
  auto drop = [&](Var v, std::size_t l) {
    if (l == 0 || !ctx.training || ctx.dropout <= 0.0 || ctx.rng == nullptr) return v;
    return ad::dropout(v, ctx.dropout, *ctx.rng);
  };
  const graph::SparseMatrix& gcn_op = spec_.gcn_norm == GcnNorm::Row ? prop.gcn_row : prop.gcn_sym;

  Var h = x;
  switch (spec_.kind) {
    case ExpertKind::GCN:
      for (std::size_t l = 0; l < L; ++l) {
        h = drop(h, l);
        Parameter& w = take();
        Parameter& b = take();
        h = act(ad::add_row(ad::spmm(gcn_op, ad::matmul(h, t.param(w))), t.param(b)), l);
      }
      return h;
    case ExpertKind::GraphSAGE:
      for (std::size_t l = 0; l < L; ++l) {
        h = drop(h, l);
        std::array<Var, 2> parts{h, ad::spmm(prop.row_norm, h)};
        Parameter& w = take();
        Parameter& b = take();
        h = act(linear(t, ad::concat_cols(parts), w, b), l);
      }
      return h;
    case ExpertKind::GAT:
      for (std::size_t l = 0; l < L; ++l) {
        h = drop(h, l);
        Parameter& w = take();
        Parameter& as = take();
        Parameter& ad_ = take();
        Parameter& b = take();
        Var wh = ad::matmul(h, t.param(w));
        std::vector<double> alpha;
        Var out = ad::graph_attention(prop.gcn_sym, wh, ad::matmul(wh, t.param(as)), ad::matmul(wh, t.param(ad_)),
                                      spec_.gat_slope, &alpha);
        attention_.push_back(std::move(alpha));
        h = act(ad::add_row(out, t.param(b)), l);
      }
      return h;
    case ExpertKind::GIN:
      for (std::size_t l = 0; l < L; ++l) {
        h = drop(h, l);
        Parameter& eps = take();
        Var e = spec_.gin_learn_eps ? t.param(eps) : t.constant(eps.value());
        Var agg = ad::add(ad::spmm(prop.adjacency, h), ad::scale_by(h, ad::add_scalar(e, 1.0)));
        Parameter& w1 = take();
        Parameter& b1 = take();
        Parameter& w2 = take();
        Parameter& b2 = take();
        Var z = ad::relu(linear(t, agg, w1, b1));
        h = act(linear(t, z, w2, b2), l);
      }
      return h;
    case ExpertKind::SGC: {
      // Propagation is parameter-free, so a constant input is propagated outside the tape.
      Var px = x;
      if (t.needs_grad(x.id())) {
        for (std::size_t k = 0; k < spec_.sgc_steps; ++k) px = ad::spmm(gcn_op, px);
      } else {
        Matrix m = x.value();
        for (std::size_t k = 0; k < spec_.sgc_steps; ++k) m = gcn_op.multiply(m);
        px = t.constant(std::move(m));
      }
      Parameter& w = take();
      Parameter& b = take();
      Var out = linear(t, px, w, b);
      return spec_.output_activation ? ad::relu(out) : out;
    }
    case ExpertKind::JKNet: {
      std::vector<Var> layers;
      for (std::size_t l = 0; l < L; ++l) {
        h = drop(h, l);
        Parameter& w = take();
        Parameter& b = take();
        h = ad::relu(ad::add_row(ad::spmm(gcn_op, ad::matmul(h, t.param(w))), t.param(b)));
        layers.push_back(h);
      }
      Parameter& w = take();
      Parameter& b = take();
      Var out = linear(t, ad::concat_cols(layers), w, b);
      return spec_.output_activation ? ad::relu(out) : out;
    }
    case ExpertKind::ChebCNN:
      for (std::size_t l = 0; l < L; ++l) {
        h = drop(h, l);
        Var t_prev = h;
        Var acc = ad::matmul(h, t.param(take()));
        if (spec_.cheb_order >= 1) {
          Var t_cur = ad::spmm(prop.cheb, h);
          acc = ad::add(acc, ad::matmul(t_cur, t.param(take())));
          for (std::size_t k = 2; k <= spec_.cheb_order; ++k) {
            Var t_next = ad::sub(ad::scale(ad::spmm(prop.cheb, t_cur), 2.0), t_prev);
            acc = ad::add(acc, ad::matmul(t_next, t.param(take())));
            t_prev = t_cur;
            t_cur = t_next;
          }
        }
        h = act(ad::add_row(acc, t.param(take())), l);
      }
      return h;
    case ExpertKind::MixHop:
      for (std::size_t l = 0; l < L; ++l) {
        h = drop(h, l);
        std::vector<Var> parts;
        std::size_t max_pow = *std::max_element(spec_.mixhop_powers.begin(), spec_.mixhop_powers.end());
        std::vector<Var> powers{h};
        for (std::size_t j = 1; j <= max_pow; ++j) powers.push_back(ad::spmm(prop.row_norm, powers.back()));
        for (std::size_t p : spec_.mixhop_powers) parts.push_back(ad::matmul(powers[p], t.param(take())));
        h = act(ad::add_row(ad::concat_cols(parts), t.param(take())), l);
      }
      return h;
    case ExpertKind::Noise: {
      std::normal_distribution<double> nd;
      Matrix z(x.rows(), spec_.hidden);
      for (double& v : z.values()) v = nd(noise_rng_);
      return t.constant(std::move(z));
    }
  }
  throw ConfigError("unhandled expert kind");
}

}  // namespace sagmm::experts
