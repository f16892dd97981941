// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sagmm/matrix.hpp"
#include "sagmm/optim.hpp"

namespace sagmm {

/// Everything needed to resume or evaluate a run.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string config_json;
  std::map<std::string, Matrix> params;
  std::map<std::string, ad::AdamSlot> optimizer;
  std::vector<std::uint8_t> alive;
  std::vector<double> importance;
  double eta = 0.0;
  std::int64_t epoch = 0;
};

/// Writes to a sibling temp file, then renames over path.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws DataError on a missing, truncated or foreign file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sagmm
