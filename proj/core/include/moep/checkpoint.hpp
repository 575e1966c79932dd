// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "moep/config.hpp"
#include "moep/model.hpp"
#include "moep/optimizer.hpp"
#include "moep/prune.hpp"

namespace moep {

/// Everything needed to resume a run bit-exactly.
struct CheckpointState {
  RunConfig config;
  Model model;
  OptimizerState opt;
  ScheduleState schedule;
  ProficiencyLedger ledger;
  std::uint64_t rng_counter = 0;
  std::size_t step = 0;
  std::string phase = "pretrain";
  int subtask = -1;
  std::uint64_t run_seed = 1;
};

/// Binary format: "MOEP" magic, u32 version, length-prefixed key=value text,
/// named f64 tensor records, trailing fnv1a-64 checksum of the body.
/// save -> load -> save is byte-identical.
void save_checkpoint(const std::string& path, CheckpointState& state);

/// Loads and verifies magic/version/checksum. When `expect` is given, a
/// mismatched ModelConfig is rejected.
CheckpointState load_checkpoint(const std::string& path, const ModelConfig* expect = nullptr);

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace moep
