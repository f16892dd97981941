// SPDX-License-Identifier: Apache-2.0
// NEON variants for aarch64 (float64x2_t lanes). Compiled only on ARM targets.
#include "sagmm/kernels/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)
#include <arm_neon.h>
#define SAGMM_HAVE_NEON 1
#endif

namespace sagmm::kernels {

#if defined(SAGMM_HAVE_NEON)
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  for (; i + 2 <= n; i += 2) acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline void axpy_inline(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  axpy_inline(alpha, x, y, n);
}

void scale_neon(double alpha, double* x, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(x + i, vmulq_n_f64(vld1q_f64(x + i), alpha));
  for (; i < n; ++i) x[i] *= alpha;
}

void gemm_nn_neon(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                  double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p)
      if (a[i * k + p] != 0.0) axpy_inline(a[i * k + p], b + p * n, c + i * n, n);
}

void gemm_nt_neon(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                  double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot_neon(a + i * k, b + j * k, k);
}

void gemm_tn_neon(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                  double* c) {
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i)
      if (a[p * m + i] != 0.0) axpy_inline(a[p * m + i], b + p * n, c + i * n, n);
}

void spmm_neon(std::size_t rows, const std::int64_t* row_ptr, const std::int32_t* col_idx,
               const double* values, std::size_t n, const double* b, double* c) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::int64_t e = row_ptr[r]; e < row_ptr[r + 1]; ++e)
      axpy_inline(values[e], b + static_cast<std::size_t>(col_idx[e]) * n, c + r * n, n);
}

constexpr KernelTable kNeon{Backend::Neon, dot_neon,     axpy_neon,    scale_neon,
                            gemm_nn_neon,  gemm_nt_neon, gemm_tn_neon, spmm_neon};

}  // namespace

std::optional<const KernelTable*> neon_table() noexcept { return &kNeon; }
#else
std::optional<const KernelTable*> neon_table() noexcept { return std::nullopt; }
#endif

}  // namespace sagmm::kernels
