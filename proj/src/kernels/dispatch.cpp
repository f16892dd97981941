// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>

#include "sagmm/kernels/kernels.hpp"

namespace sagmm::kernels {
namespace {

const KernelTable* table_for(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar:
      return &scalar_table();
    case Backend::Avx2:
      return avx2_table().value_or(nullptr);
    case Backend::Neon:
      return neon_table().value_or(nullptr);
  }
  return nullptr;
}

const KernelTable* initial_table() noexcept {
  if (const char* env = std::getenv("SAGMM_KERNELS")) {
    if (auto b = parse_backend(env)) {
      if (const KernelTable* t = table_for(*b)) return t;
    }
  }
  if (auto t = avx2_table()) return *t;
  if (auto t = neon_table()) return *t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& slot() noexcept {
  static std::atomic<const KernelTable*> current{initial_table()};
  return current;
}

}  // namespace

const KernelTable& active() noexcept { return *slot().load(std::memory_order_acquire); }

bool set_backend(Backend b) noexcept {
  const KernelTable* t = table_for(b);
  if (t == nullptr) return false;
  slot().store(t, std::memory_order_release);
  return true;
}

std::vector<Backend> available_backends() {
  std::vector<Backend> out{Backend::Scalar};
  if (avx2_table()) out.push_back(Backend::Avx2);
  if (neon_table()) out.push_back(Backend::Neon);
  return out;
}

std::string_view backend_name(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar:
      return "scalar";
    case Backend::Avx2:
      return "avx2";
    case Backend::Neon:
      return "neon";
  }
  return "unknown";
}

std::optional<Backend> parse_backend(std::string_view name) noexcept {
  if (name == "scalar") return Backend::Scalar;
  if (name == "avx2") return Backend::Avx2;
  if (name == "neon") return Backend::Neon;
  return std::nullopt;
}

}  // namespace sagmm::kernels
