// SPDX-License-Identifier: Apache-2.0
#pragma once

// Data-parallel inner loops used by the dense and sparse operators.
//
// Every kernel has a scalar reference implementation and, where the target
// supports it, an AVX2+FMA (x86-64) or NEON (aarch64) variant. The active
// backend is picked once at startup from CPU features and may be pinned with
// the SAGMM_KERNELS environment variable ("scalar", "avx2", "neon") or with
// set_backend(). All matrices are dense row-major with unit column stride.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace sagmm::kernels {

enum class Backend { Scalar, Avx2, Neon };

/// Function table for one backend. Shapes follow BLAS naming:
/// gemm_nn: C[m,n] += A[m,k] * B[k,n]
/// gemm_nt: C[m,n] += A[m,k] * B[n,k]^T
/// gemm_tn: C[m,n] += A[k,m]^T * B[k,n]
/// spmm:    C[rows,n] += S * B[*,n] with S in CSR form
struct KernelTable {
  Backend backend;
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*scale)(double alpha, double* x, std::size_t n);
  void (*gemm_nn)(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                  double* c);
  void (*gemm_nt)(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                  double* c);
  void (*gemm_tn)(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                  double* c);
  void (*spmm)(std::size_t rows, const std::int64_t* row_ptr, const std::int32_t* col_idx,
               const double* values, std::size_t n, const double* b, double* c);
};

const KernelTable& scalar_table() noexcept;
/// Nullopt when the variant was not compiled in or the CPU lacks the feature.
std::optional<const KernelTable*> avx2_table() noexcept;
std::optional<const KernelTable*> neon_table() noexcept;

/// Currently selected table.
const KernelTable& active() noexcept;
/// Pins the backend; returns false (and leaves the selection unchanged) if unavailable.
bool set_backend(Backend b) noexcept;
std::vector<Backend> available_backends();
std::string_view backend_name(Backend b) noexcept;
std::optional<Backend> parse_backend(std::string_view name) noexcept;

}  // namespace sagmm::kernels
