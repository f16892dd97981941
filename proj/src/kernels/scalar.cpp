// SPDX-License-Identifier: Apache-2.0
#include "sagmm/kernels/kernels.hpp"

namespace sagmm::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void gemm_nn_scalar(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                    double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      axpy_scalar(aip, b + p * n, ci, n);
    }
  }
}

void gemm_nt_scalar(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                    double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot_scalar(a + i * k, b + j * k, k);
}

void gemm_tn_scalar(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                    double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      if (ap[i] == 0.0) continue;
      axpy_scalar(ap[i], bp, c + i * n, n);
    }
  }
}

void spmm_scalar(std::size_t rows, const std::int64_t* row_ptr, const std::int32_t* col_idx,
                 const double* values, std::size_t n, const double* b, double* c) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* cr = c + r * n;
    for (std::int64_t e = row_ptr[r]; e < row_ptr[r + 1]; ++e)
      axpy_scalar(values[e], b + static_cast<std::size_t>(col_idx[e]) * n, cr, n);
  }
}

constexpr KernelTable kScalar{Backend::Scalar, dot_scalar,     axpy_scalar,    scale_scalar,
                              gemm_nn_scalar,  gemm_nt_scalar, gemm_tn_scalar, spmm_scalar};

}  // namespace

const KernelTable& scalar_table() noexcept { return kScalar; }

}  // namespace sagmm::kernels
