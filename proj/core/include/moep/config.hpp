// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moep/model.hpp"
#include "moep/optimizer.hpp"
#include "moep/prune.hpp"
#include "moep/tasks.hpp"

namespace moep {

/// Full run configuration. Serialized as key=value text, one pair per line,
/// canonical key order. Unknown keys are errors.
struct RunConfig {
  ModelConfig model;
  TaskSpec task;  // cluster centers rebuilt from the task fields
  PruneConfig prune;
  AdamConfig opt;

  std::size_t pretrain_steps = 3000;
  std::size_t finetune_steps = 800;
  std::size_t batch_size = 32;
  std::size_t eval_sequences = 2000;
  std::size_t warmup_pretrain = 200;
  std::size_t warmup_finetune = 16;
  double max_lr_pretrain = 1e-3;
  double max_lr_finetune = 2e-4;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string out_dir;

  static RunConfig defaults();
  static RunConfig parse(const std::string& text);
  static RunConfig load_file(const std::string& path);
  std::string serialize() const;
  void validate() const;

  /// Optimizer config for the given phase, with N and warmup filled in.
  AdamConfig opt_for(bool pretrain) const;
  /// Prune config with N/E filled from the training budget and model.
  PruneConfig prune_for_finetune() const;
};

std::string format_double(double v);  // shortest round-trip-exact decimal

}  // namespace moep
