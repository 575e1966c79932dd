// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "moep/checkpoint.hpp"
#include "moep/config.hpp"
#include "moep/metrics.hpp"
#include "moep/model.hpp"
#include "moep/optimizer.hpp"
#include "moep/prune.hpp"
#include "moep/tasks.hpp"

namespace moep {

enum class FinetuneMode { kDenseFt, kMoeFt, kStaged, kEager };
std::string to_string(FinetuneMode m);
FinetuneMode finetune_mode_from_string(const std::string& s);

/// Mutable state of one training run. Data batches are a pure function of
/// (run_seed, rng_counter), so a reloaded context replays bit-exactly.
struct TrainContext {
  RunConfig config;
  Model model;
  OptimizerState opt;
  ProficiencyLedger ledger;
  ScheduleState schedule;
  PruneConfig prune;
  std::uint64_t run_seed = 1;
  std::uint64_t rng_counter = 0;
  std::size_t step = 0;  // completed optimizer steps this phase
  std::string phase = "pretrain";
  int subtask = -1;  // -1 = pretrain mixture
  RunMetrics metrics;
};

/// Forward + backward + Adam update, then proficiency accumulation, then the
/// window-boundary check. Returns the total loss.
double train_step(TrainContext& ctx);

void run_steps(TrainContext& ctx, std::size_t target_steps);

/// Held-out evaluation set; subtask -1 draws from the pretraining mixture.
Batch make_eval_batch(const TaskSpec& spec, int subtask, std::size_t sequences);

void save_context(TrainContext& ctx, const std::string& ckpt_path);
TrainContext load_context(const std::string& ckpt_path);

struct RunResult {
  EvalResult eval;
  std::string run_dir;
  std::vector<std::vector<bool>> final_survivors;  // per MoE layer
  std::size_t clamp_activations = 0;
};

/// Pre-trains on the subtask mixture with pruning disabled; writes
/// checkpoint.moep, metrics.csv, events.log and config.txt into run_dir.
RunResult pretrain_run(const RunConfig& cfg, std::uint64_t seed, const std::string& run_dir);

/// One fine-tuning pass in one of the four §-style settings. The checkpoint
/// file is only read, never mutated.
RunResult finetune_run(const std::string& ckpt_path, const RunConfig& cfg, std::size_t subtask,
                       FinetuneMode mode, std::uint64_t seed, const std::string& run_dir);

/// Two-pass baseline: select survivors in pass 1, then re-fine-tune the
/// original pre-trained model restricted to that selection.
RunResult two_pass_run(const std::string& ckpt_path, const RunConfig& cfg, std::size_t subtask,
                       FinetuneMode variant, std::uint64_t seed, const std::string& run_dir);

}  // namespace moep
