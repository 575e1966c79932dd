// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "moep/model.hpp"
#include "moep/rng.hpp"
#include "moep/tensor.hpp"

namespace moep {

/// Synthetic mixture of K cluster subtasks. Each subtask has its own linear
/// label rule over the noise, so subtasks are individually learnable but
/// need different functions.
struct TaskSpec {
  std::size_t num_subtasks = 8;
  std::size_t feature_dim = 16;
  std::size_t tokens_per_sequence = 8;
  std::size_t classes_per_subtask = 2;
  Tensor cluster_centers;  // [K, feature_dim]
  double noise_scale = 0.9;
  std::uint64_t seed = 1;

  void validate() const;
  /// Fills axis-aligned well-separated centers; requires K <= feature_dim.
  void build_default_centers();
  static TaskSpec make_default(std::uint64_t seed);

  /// Label rule vector for (subtask, class), derived from the spec seed.
  Tensor label_rule(std::size_t subtask, std::size_t cls) const;
};

struct Batch {
  Tensor features;          // [sequences * tokens, feature_dim]
  std::vector<int> labels;  // per sequence
  std::vector<int> subtask_ids;
  std::size_t tokens_per_seq = 0;

  std::size_t num_sequences() const { return labels.size(); }
};

/// Sequences drawn uniformly over subtasks; token = center + scaled noise.
Batch gen_pretrain_batch(const TaskSpec& spec, std::size_t batch_size, Rng& rng);

/// All sequences from a single subtask.
Batch gen_finetune_batch(const TaskSpec& spec, std::size_t subtask, std::size_t batch_size,
                         Rng& rng);

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

/// Deterministic accuracy + mean cross-entropy; no parameter mutation.
EvalResult evaluate(const Model& model, const Batch& batch);

}  // namespace moep
