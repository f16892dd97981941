// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "sagmm/autodiff.hpp"
#include "sagmm/errors.hpp"
#include "sagmm/kernels/kernels.hpp"

namespace sagmm::ad {
namespace {

void require(bool ok, const char* op, const Matrix& a, const Matrix& b) {
  if (!ok)
    throw InputError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
}

void add_into(Matrix& dst, const Matrix& src) {
  kernels::active().axpy(1.0, src.data(), dst.data(), src.size());
}

// Unary elementwise op with derivative expressed through (input, output).
template <typename F, typename D>
Var unary(Var a, F f, D df) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y.values()[i] = f(x.values()[i]);
  const std::size_t ia = a.id();
  const std::array parents{a};
  return a.tape().push(std::move(y), parents, [ia, df](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& xin = t.value(ia);
    const Matrix& yout = t.value(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      ga.values()[i] += g.values()[i] * df(xin.values()[i], yout.values()[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  require(av.cols() == bv.rows(), "matmul", av, bv);
  Matrix c(av.rows(), bv.cols());
  kernels::active().gemm_nn(av.rows(), av.cols(), bv.cols(), av.data(), bv.data(), c.data());
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  const std::array parents{a, b};
  return a.tape().push(std::move(c), parents, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& A = t.value(ia);
    const Matrix& B = t.value(ib);
    const auto& k = kernels::active();
    if (t.needs_grad(ia)) k.gemm_nt(A.rows(), B.cols(), A.cols(), g.data(), B.data(), t.grad_buffer(ia).data());
    if (t.needs_grad(ib)) k.gemm_tn(B.rows(), A.rows(), B.cols(), A.data(), g.data(), t.grad_buffer(ib).data());
  });
}

Var transpose(Var a) {
  const std::size_t ia = a.id();
  const std::array parents{a};
  return a.tape().push(a.value().transposed(), parents, [ia](Tape& t, std::size_t self) {
    add_into(t.grad_buffer(ia), t.grad(self).transposed());
  });
}

Var add(Var a, Var b) {
  require(a.value().same_shape(b.value()), "add", a.value(), b.value());
  Matrix c = a.value();
  add_into(c, b.value());
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  const std::array parents{a, b};
  return a.tape().push(std::move(c), parents, [ia, ib](Tape& t, std::size_t self) {
    if (t.needs_grad(ia)) add_into(t.grad_buffer(ia), t.grad(self));
    if (t.needs_grad(ib)) add_into(t.grad_buffer(ib), t.grad(self));
  });
}

Var sub(Var a, Var b) {
  require(a.value().same_shape(b.value()), "sub", a.value(), b.value());
  Matrix c = a.value();
  kernels::active().axpy(-1.0, b.value().data(), c.data(), c.size());
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  const std::array parents{a, b};
  return a.tape().push(std::move(c), parents, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) add_into(t.grad_buffer(ia), g);
    if (t.needs_grad(ib)) kernels::active().axpy(-1.0, g.data(), t.grad_buffer(ib).data(), g.size());
  });
}

Var hadamard(Var a, Var b) {
  require(a.value().same_shape(b.value()), "hadamard", a.value(), b.value());
  Matrix c = a.value();
  for (std::size_t i = 0; i < c.size(); ++i) c.values()[i] *= b.value().values()[i];
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  const std::array parents{a, b};
  return a.tape().push(std::move(c), parents, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) {
      Matrix& ga = t.grad_buffer(ia);
      const Matrix& bv = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga.values()[i] += g.values()[i] * bv.values()[i];
    }
    if (t.needs_grad(ib)) {
      Matrix& gb = t.grad_buffer(ib);
      const Matrix& av = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb.values()[i] += g.values()[i] * av.values()[i];
    }
  });
}

Var add_row(Var a, Var row) {
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  require(rv.rows() == 1 && rv.cols() == av.cols(), "add_row", av, rv);
  Matrix c = av;
  for (std::size_t r = 0; r < c.rows(); ++r) kernels::active().axpy(1.0, rv.data(), c.row(r).data(), c.cols());
  const std::size_t ia = a.id();
  const std::size_t ir = row.id();
  const std::array parents{a, row};
  return a.tape().push(std::move(c), parents, [ia, ir](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) add_into(t.grad_buffer(ia), g);
    if (t.needs_grad(ir)) {
      Matrix& gr = t.grad_buffer(ir);
      for (std::size_t r = 0; r < g.rows(); ++r) kernels::active().axpy(1.0, g.row(r).data(), gr.data(), g.cols());
    }
  });
}

Var sub_row(Var a, Var row) { return add_row(a, scale(row, -1.0)); }

Var mul_row(Var a, Var row) {
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  require(rv.rows() == 1 && rv.cols() == av.cols(), "mul_row", av, rv);
  Matrix c = av;
  for (std::size_t r = 0; r < c.rows(); ++r)
    for (std::size_t j = 0; j < c.cols(); ++j) c(r, j) *= rv(0, j);
  const std::size_t ia = a.id();
  const std::size_t ir = row.id();
  const std::array parents{a, row};
  return a.tape().push(std::move(c), parents, [ia, ir](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& A = t.value(ia);
    const Matrix& R = t.value(ir);
    if (t.needs_grad(ia)) {
      Matrix& ga = t.grad_buffer(ia);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t j = 0; j < g.cols(); ++j) ga(r, j) += g(r, j) * R(0, j);
    }
    if (t.needs_grad(ir)) {
      Matrix& gr = t.grad_buffer(ir);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t j = 0; j < g.cols(); ++j) gr(0, j) += g(r, j) * A(r, j);
    }
  });
}

Var mul_col(Var a, Var col) {
  const Matrix& av = a.value();
  const Matrix& cv = col.value();
  require(cv.cols() == 1 && cv.rows() == av.rows(), "mul_col", av, cv);
  Matrix c = av;
  for (std::size_t r = 0; r < c.rows(); ++r) kernels::active().scale(cv(r, 0), c.row(r).data(), c.cols());
  const std::size_t ia = a.id();
  const std::size_t ic = col.id();
  const std::array parents{a, col};
  return a.tape().push(std::move(c), parents, [ia, ic](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& A = t.value(ia);
    const Matrix& C = t.value(ic);
    const auto& k = kernels::active();
    if (t.needs_grad(ia)) {
      Matrix& ga = t.grad_buffer(ia);
      for (std::size_t r = 0; r < g.rows(); ++r) k.axpy(C(r, 0), g.row(r).data(), ga.row(r).data(), g.cols());
    }
    if (t.needs_grad(ic)) {
      Matrix& gc = t.grad_buffer(ic);
      for (std::size_t r = 0; r < g.rows(); ++r) gc(r, 0) += k.dot(g.row(r).data(), A.row(r).data(), g.cols());
    }
  });
}

Var div_col(Var a, Var col) {
  const Matrix& av = a.value();
  const Matrix& cv = col.value();
  require(cv.cols() == 1 && cv.rows() == av.rows(), "div_col", av, cv);
  Matrix c = av;
  for (std::size_t r = 0; r < c.rows(); ++r)
    for (std::size_t j = 0; j < c.cols(); ++j) c(r, j) /= cv(r, 0);
  const std::size_t ia = a.id();
  const std::size_t ic = col.id();
  const std::array parents{a, col};
  return a.tape().push(std::move(c), parents, [ia, ic](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& Y = t.value(self);
    const Matrix& C = t.value(ic);
    if (t.needs_grad(ia)) {
      Matrix& ga = t.grad_buffer(ia);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t j = 0; j < g.cols(); ++j) ga(r, j) += g(r, j) / C(r, 0);
    }
    if (t.needs_grad(ic)) {
      Matrix& gc = t.grad_buffer(ic);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < g.cols(); ++j) s += g(r, j) * Y(r, j);
        gc(r, 0) -= s / C(r, 0);
      }
    }
  });
}

Var scale(Var a, double c) {
  Matrix y = a.value();
  kernels::active().scale(c, y.data(), y.size());
  const std::size_t ia = a.id();
  const std::array parents{a};
  return a.tape().push(std::move(y), parents, [ia, c](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    kernels::active().axpy(c, g.data(), t.grad_buffer(ia).data(), g.size());
  });
}

Var add_scalar(Var a, double c) {
  Matrix y = a.value();
  for (double& v : y.values()) v += c;
  const std::size_t ia = a.id();
  const std::array parents{a};
  return a.tape().push(std::move(y), parents, [ia](Tape& t, std::size_t self) {
    add_into(t.grad_buffer(ia), t.grad(self));
  });
}

Var scale_by(Var a, Var s) {
  const Matrix& sv = s.value();
  require(sv.rows() == 1 && sv.cols() == 1, "scale_by", a.value(), sv);
  Matrix y = a.value();
  kernels::active().scale(sv(0, 0), y.data(), y.size());
  const std::size_t ia = a.id();
  const std::size_t is = s.id();
  const std::array parents{a, s};
  return a.tape().push(std::move(y), parents, [ia, is](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const auto& k = kernels::active();
    if (t.needs_grad(ia)) k.axpy(t.value(is)(0, 0), g.data(), t.grad_buffer(ia).data(), g.size());
    if (t.needs_grad(is)) t.grad_buffer(is)(0, 0) += k.dot(g.data(), t.value(ia).data(), g.size());
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw InputError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    require(p.rows() == rows, "concat_cols", parts[0].value(), p.value());
    cols += p.cols();
  }
  Matrix y(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(p.value().row(r).begin(), p.value().row(r).end(), y.row(r).begin() + static_cast<std::ptrdiff_t>(off));
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.cols();
  }
  return parts[0].tape().push(std::move(y), parts, [ids, offsets](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.needs_grad(ids[k])) continue;
      Matrix& gp = t.grad_buffer(ids[k]);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t j = 0; j < gp.cols(); ++j) gp(r, j) += g(r, offsets[k] + j);
    }
  });
}

Var gather_cols(Var a, std::span<const std::size_t> cols) {
  const Matrix& av = a.value();
  Matrix y(av.rows(), cols.size());
  for (std::size_t j : cols)
    if (j >= av.cols()) throw InputError("gather_cols: column out of range");
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t k = 0; k < cols.size(); ++k) y(r, k) = av(r, cols[k]);
  const std::size_t ia = a.id();
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  const std::array parents{a};
  return a.tape().push(std::move(y), parents, [ia, idx](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t k = 0; k < idx.size(); ++k) ga(r, idx[k]) += g(r, k);
  });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Matrix& av = a.value();
  Matrix y(rows.size(), av.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= av.rows()) throw InputError("gather_rows: row out of range");
    std::copy(av.row(rows[k]).begin(), av.row(rows[k]).end(), y.row(k).begin());
  }
  const std::size_t ia = a.id();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  const std::array parents{a};
  return a.tape().push(std::move(y), parents, [ia, idx](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t k = 0; k < idx.size(); ++k)
      kernels::active().axpy(1.0, g.row(k).data(), ga.row(idx[k]).data(), g.cols());
  });
}

Var sigmoid(Var a) {
  return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var elu(Var a, double alpha) {
  return unary(
      a, [alpha](double x) { return x > 0.0 ? x : alpha * std::expm1(x); },
      [alpha](double x, double y) { return x > 0.0 ? 1.0 : y + alpha; });
}

Var leaky_relu(Var a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var reciprocal(Var a) {
  return unary(a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

Var softplus(Var a) {
  return unary(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) { return stable_sigmoid(x); });
}

Var row_softmax(Var a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) s += (y(r, j) = std::exp(x(r, j) - m));
    for (std::size_t j = 0; j < x.cols(); ++j) y(r, j) /= s;
  }
  const std::size_t ia = a.id();
  const std::array parents{a};
  return a.tape().push(std::move(y), parents, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& Y = t.value(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      const double dotgy = kernels::active().dot(g.row(r).data(), Y.row(r).data(), g.cols());
      for (std::size_t j = 0; j < g.cols(); ++j) ga(r, j) += Y(r, j) * (g(r, j) - dotgy);
    }
  });
}

Var col_sum(Var a) {
  const Matrix& x = a.value();
  Matrix y(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) kernels::active().axpy(1.0, x.row(r).data(), y.data(), x.cols());
  const std::size_t ia = a.id();
  const std::array parents{a};
  return a.tape().push(std::move(y), parents, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < ga.rows(); ++r) kernels::active().axpy(1.0, g.data(), ga.row(r).data(), ga.cols());
  });
}

Var row_sum(Var a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    y(r, 0) = std::accumulate(row.begin(), row.end(), 0.0);
  }
  const std::size_t ia = a.id();
  const std::array parents{a};
  return a.tape().push(std::move(y), parents, [ia](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(r, j) += g(r, 0);
  });
}

Var sum_all(Var a) {
  const auto v = a.value().values();
  Matrix y(1, 1, std::accumulate(v.begin(), v.end(), 0.0));
  const std::size_t ia = a.id();
  const std::array parents{a};
  return a.tape().push(std::move(y), parents, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    for (double& v : t.grad_buffer(ia).values()) v += g;
  });
}

Var frobenius_norm(Var a) {
  const auto v = a.value().values();
  const double n = std::sqrt(kernels::active().dot(v.data(), v.data(), v.size()));
  const std::size_t ia = a.id();
  const std::array parents{a};
  return a.tape().push(Matrix(1, 1, n), parents, [ia](Tape& t, std::size_t self) {
    const double nrm = t.value(self)(0, 0);
    if (nrm == 0.0) return;  // subgradient 0 at the origin
    const double g = t.grad(self)(0, 0);
    const Matrix& x = t.value(ia);
    kernels::active().axpy(g / nrm, x.data(), t.grad_buffer(ia).data(), x.size());
  });
}

Var mean_pool_rows(Var a, std::span<const std::size_t> membership, std::size_t groups) {
  const Matrix& x = a.value();
  if (membership.size() != x.rows()) throw InputError("mean_pool_rows: membership size mismatch");
  std::vector<double> counts(groups, 0.0);
  for (std::size_t g : membership) {
    if (g >= groups) throw InputError("mean_pool_rows: group id out of range");
    counts[g] += 1.0;
  }
  Matrix y(groups, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    kernels::active().axpy(1.0 / counts[membership[r]], x.row(r).data(), y.row(membership[r]).data(), x.cols());
  const std::size_t ia = a.id();
  std::vector<std::size_t> mem(membership.begin(), membership.end());
  const std::array parents{a};
  return a.tape().push(std::move(y), parents, [ia, mem, counts](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      kernels::active().axpy(1.0 / counts[mem[r]], g.row(mem[r]).data(), ga.row(r).data(), ga.cols());
  });
}

Var normalize_cols(Var a, double eps) {
  const Matrix& x = a.value();
  std::vector<double> norms(x.cols(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t j = 0; j < x.cols(); ++j) norms[j] += x(r, j) * x(r, j);
  for (double& n : norms) n = std::sqrt(n);
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t j = 0; j < x.cols(); ++j) y(r, j) = x(r, j) / (norms[j] + eps);
  const std::size_t ia = a.id();
  const std::array parents{a};
  return a.tape().push(std::move(y), parents, [ia, norms, eps](Tape& t, std::size_t self) {
    // y = x / (n + eps), n = ||x||: dy/dx = I/(n+eps) - x x^T / (n (n+eps)^2)
    const Matrix& g = t.grad(self);
    const Matrix& X = t.value(ia);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t j = 0; j < X.cols(); ++j) {
      const double d = norms[j] + eps;
      double gx = 0.0;
      for (std::size_t r = 0; r < X.rows(); ++r) gx += g(r, j) * X(r, j);
      const double corr = norms[j] > 0.0 ? gx / (norms[j] * d * d) : 0.0;
      for (std::size_t r = 0; r < X.rows(); ++r) ga(r, j) += g(r, j) / d - corr * X(r, j);
    }
  });
}

Var cv_squared(Var row, double eps) {
  const Matrix& x = row.value();
  if (x.rows() != 1) throw InputError("cv_squared expects a row vector, got " + x.shape_string());
  const auto n = static_cast<double>(x.cols());
  const auto v = x.values();
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double var = 0.0;
  for (double e : v) var += (e - mean) * (e - mean);
  var /= n;
  const double denom = mean * mean + eps;
  const std::size_t ia = row.id();
  const std::array parents{row};
  return row.tape().push(Matrix(1, 1, var / denom), parents,
                         [ia, mean, var, denom, n](Tape& t, std::size_t self) {
                           const double g = t.grad(self)(0, 0);
                           const Matrix& X = t.value(ia);
                           Matrix& ga = t.grad_buffer(ia);
                           // d var/dx_i = 2(x_i - mean)/n ; d mean/dx_i = 1/n
                           for (std::size_t i = 0; i < X.cols(); ++i) {
                             const double dvar = 2.0 * (X(0, i) - mean) / n;
                             const double dden = 2.0 * mean / n;
                             ga(0, i) += g * (dvar * denom - var * dden) / (denom * denom);
                           }
                         });
}

Var spmm(const graph::SparseMatrix& s, Var a) {
  Matrix y = s.multiply(a.value());
  const std::size_t ia = a.id();
  const std::array parents{a};
  // The operator is owned by the caller and must outlive backward().
  const graph::SparseMatrix* sp = &s;
  return a.tape().push(std::move(y), parents, [ia, sp](Tape& t, std::size_t self) {
    add_into(t.grad_buffer(ia), sp->multiply_transposed(t.grad(self)));
  });
}

Var dropout(Var a, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw InputError("dropout rate must be < 1");
  const Matrix& x = a.value();
  Matrix mask(x.rows(), x.cols());
  std::bernoulli_distribution keep(1.0 - rate);
  const double inv = 1.0 / (1.0 - rate);
  for (double& m : mask.values()) m = keep(rng) ? inv : 0.0;
  return hadamard(a, a.tape().constant(std::move(mask)));
}

Var sign_straight_through(Var a, MaskGradient mode) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y.values()[i] = x.values()[i] > 0.0 ? 1.0 : 0.0;
  const std::size_t ia = a.id();
  const std::array parents{a};
  if (mode == MaskGradient::Exact)
    return a.tape().push(std::move(y), parents, [](Tape&, std::size_t) {});
  return a.tape().push(std::move(y), parents, [ia](Tape& t, std::size_t self) {
    add_into(t.grad_buffer(ia), t.grad(self));
  });
}

Var graph_attention(const graph::SparseMatrix& s, Var h, Var src, Var dst, double slope,
                    std::vector<double>* attention_out) {
  const Matrix& H = h.value();
  const Matrix& F = src.value();
  const Matrix& G = dst.value();
  const std::size_t n = s.rows();
  if (H.rows() != s.cols() || F.rows() != n || G.rows() != s.cols() || F.cols() != 1 || G.cols() != 1)
    throw InputError("graph_attention: operand shapes do not match the pattern");
  const auto rp = s.row_ptr();
  const auto ci = s.col_idx();
  std::vector<double> pre(s.nnz());
  std::vector<double> alpha(s.nnz());
  Matrix y(n, H.cols());
  for (std::size_t u = 0; u < n; ++u) {
    const auto b = static_cast<std::size_t>(rp[u]);
    const auto e = static_cast<std::size_t>(rp[u + 1]);
    if (b == e) continue;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = b; k < e; ++k) {
      const double z = F(u, 0) + G(static_cast<std::size_t>(ci[k]), 0);
      pre[k] = z;
      m = std::max(m, z > 0.0 ? z : slope * z);
    }
    double sum = 0.0;
    for (std::size_t k = b; k < e; ++k) {
      const double act = pre[k] > 0.0 ? pre[k] : slope * pre[k];
      sum += (alpha[k] = std::exp(act - m));
    }
    for (std::size_t k = b; k < e; ++k) {
      alpha[k] /= sum;
      kernels::active().axpy(alpha[k], H.row(static_cast<std::size_t>(ci[k])).data(), y.row(u).data(), H.cols());
    }
  }
  if (attention_out != nullptr) *attention_out = alpha;
  const std::size_t ih = h.id();
  const std::size_t is = src.id();
  const std::size_t id = dst.id();
  const std::array parents{h, src, dst};
  const graph::SparseMatrix* sp = &s;
  return h.tape().push(std::move(y), parents,
                       [sp, ih, is, id, slope, pre = std::move(pre), alpha = std::move(alpha)](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& Hv = t.value(ih);
    const auto rp2 = sp->row_ptr();
    const auto ci2 = sp->col_idx();
    const auto& k = kernels::active();
    Matrix* gh = t.needs_grad(ih) ? &t.grad_buffer(ih) : nullptr;
    Matrix* gs = t.needs_grad(is) ? &t.grad_buffer(is) : nullptr;
    Matrix* gd = t.needs_grad(id) ? &t.grad_buffer(id) : nullptr;
    std::vector<double> dalpha;
    for (std::size_t u = 0; u < sp->rows(); ++u) {
      const auto b = static_cast<std::size_t>(rp2[u]);
      const auto e = static_cast<std::size_t>(rp2[u + 1]);
      dalpha.assign(e - b, 0.0);
      double weighted = 0.0;
      for (std::size_t q = b; q < e; ++q) {
        const auto v = static_cast<std::size_t>(ci2[q]);
        if (gh != nullptr) k.axpy(alpha[q], g.row(u).data(), gh->row(v).data(), g.cols());
        dalpha[q - b] = k.dot(g.row(u).data(), Hv.row(v).data(), g.cols());
        weighted += alpha[q] * dalpha[q - b];
      }
      for (std::size_t q = b; q < e; ++q) {
        const double de = alpha[q] * (dalpha[q - b] - weighted);
        const double dz = de * (pre[q] > 0.0 ? 1.0 : slope);
        if (gs != nullptr) (*gs)(u, 0) += dz;
        if (gd != nullptr) (*gd)(static_cast<std::size_t>(ci2[q]), 0) += dz;
      }
    }
  });
}

Var pair_dot(Var emb, std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  const Matrix& E = emb.value();
  Matrix y(pairs.size(), 1);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].first >= E.rows() || pairs[i].second >= E.rows())
      throw InputError("pair_dot: node index out of range");
    y(i, 0) = kernels::active().dot(E.row(pairs[i].first).data(), E.row(pairs[i].second).data(), E.cols());
  }
  const std::size_t ie = emb.id();
  std::vector<std::pair<std::size_t, std::size_t>> pv(pairs.begin(), pairs.end());
  const std::array parents{emb};
  return emb.tape().push(std::move(y), parents, [ie, pv](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& Ev = t.value(ie);
    Matrix& ge = t.grad_buffer(ie);
    for (std::size_t i = 0; i < pv.size(); ++i) {
      kernels::active().axpy(g(i, 0), Ev.row(pv[i].second).data(), ge.row(pv[i].first).data(), Ev.cols());
      kernels::active().axpy(g(i, 0), Ev.row(pv[i].first).data(), ge.row(pv[i].second).data(), Ev.cols());
    }
  });
}

Var cross_entropy(Var logits, std::span<const int> labels, std::span<const std::size_t> rows) {
  const Matrix& z = logits.value();
  if (labels.size() != rows.size()) throw InputError("cross_entropy: labels/rows size mismatch");
  if (rows.empty()) throw InputError("cross_entropy: no rows selected");
  Matrix probs(rows.size(), z.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto row = z.row(rows[i]);
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= z.cols())
      throw InputError("cross_entropy: label out of range");
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (std::size_t j = 0; j < z.cols(); ++j) s += (probs(i, j) = std::exp(row[j] - m));
    for (std::size_t j = 0; j < z.cols(); ++j) probs(i, j) /= s;
    loss -= row[static_cast<std::size_t>(labels[i])] - m - std::log(s);
  }
  const auto count = static_cast<double>(rows.size());
  const std::size_t il = logits.id();
  std::vector<std::size_t> rv(rows.begin(), rows.end());
  std::vector<int> lv(labels.begin(), labels.end());
  const std::array parents{logits};
  return logits.tape().push(Matrix(1, 1, loss / count), parents,
                            [il, rv, lv, probs = std::move(probs), count](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0) / count;
    Matrix& gl = t.grad_buffer(il);
    for (std::size_t i = 0; i < rv.size(); ++i) {
      for (std::size_t j = 0; j < gl.cols(); ++j) gl(rv[i], j) += g * probs(i, j);
      gl(rv[i], static_cast<std::size_t>(lv[i])) -= g;
    }
  });
}

Var bce_with_logits(Var logits, const Matrix& targets, std::span<const std::size_t> rows) {
  const Matrix& z = logits.value();
  if (targets.cols() != z.cols() || targets.rows() != rows.size())
    throw InputError("bce_with_logits: targets shape " + targets.shape_string() + " vs logits " + z.shape_string());
  if (rows.empty()) throw InputError("bce_with_logits: no rows selected");
  double loss = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < z.cols(); ++j) {
      const double x = z(rows[i], j);
      loss += std::max(x, 0.0) - x * targets(i, j) + std::log1p(std::exp(-std::abs(x)));
    }
  const auto count = static_cast<double>(rows.size() * z.cols());
  const std::size_t il = logits.id();
  std::vector<std::size_t> rv(rows.begin(), rows.end());
  const std::array parents{logits};
  return logits.tape().push(Matrix(1, 1, loss / count), parents, [il, rv, targets, count](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0) / count;
    const Matrix& Z = t.value(il);
    Matrix& gl = t.grad_buffer(il);
    for (std::size_t i = 0; i < rv.size(); ++i)
      for (std::size_t j = 0; j < gl.cols(); ++j)
        gl(rv[i], j) += g * (stable_sigmoid(Z(rv[i], j)) - targets(i, j));
  });
}

Var mse(Var pred, const Matrix& targets, std::span<const std::size_t> rows) {
  const Matrix& p = pred.value();
  if (targets.cols() != p.cols() || targets.rows() != rows.size())
    throw InputError("mse: targets shape " + targets.shape_string() + " vs predictions " + p.shape_string());
  if (rows.empty()) throw InputError("mse: no rows selected");
  double loss = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < p.cols(); ++j) {
      const double d = p(rows[i], j) - targets(i, j);
      loss += d * d;
    }
  const auto count = static_cast<double>(rows.size() * p.cols());
  const std::size_t ip = pred.id();
  std::vector<std::size_t> rv(rows.begin(), rows.end());
  const std::array parents{pred};
  return pred.tape().push(Matrix(1, 1, loss / count), parents, [ip, rv, targets, count](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0) / count;
    const Matrix& P = t.value(ip);
    Matrix& gp = t.grad_buffer(ip);
    for (std::size_t i = 0; i < rv.size(); ++i)
      for (std::size_t j = 0; j < gp.cols(); ++j) gp(rv[i], j) += 2.0 * g * (P(rv[i], j) - targets(i, j));
  });
}

}  // namespace sagmm::ad
