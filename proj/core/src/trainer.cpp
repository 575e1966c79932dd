// SPDX-License-Identifier: Apache-2.0
#include "moep/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "moep/errors.hpp"
#include "moep/tape.hpp"

namespace moep {

namespace fs = std::filesystem;

std::string to_string(FinetuneMode m) {
  switch (m) {
    case FinetuneMode::kDenseFt: return "dense-ft";
    case FinetuneMode::kMoeFt: return "moe-ft";
    case FinetuneMode::kStaged: return "staged";
    case FinetuneMode::kEager: return "eager";
  }
  return "moe-ft";
}

FinetuneMode finetune_mode_from_string(const std::string& s) {
  if (s == "dense-ft") return FinetuneMode::kDenseFt;
  if (s == "moe-ft") return FinetuneMode::kMoeFt;
  if (s == "staged") return FinetuneMode::kStaged;
  if (s == "eager") return FinetuneMode::kEager;
  throw ConfigError("unknown finetune mode: " + s);
}

namespace {

constexpr std::uint64_t kStreamInit = 1;
constexpr std::uint64_t kStreamPretrainData = 2;
constexpr std::uint64_t kStreamFinetuneData = 3;
constexpr std::uint64_t kStreamEval = 0xE7A1;

void sync_active_masks(Model& model, const ScheduleState& schedule) {
  std::size_t l = 0;
  for (Block& blk : model.blocks) {
    if (blk.is_moe()) blk.moe().active_mask = schedule.survivors[l++];
  }
}

void dump_ledger(const ProficiencyLedger& ledger) {
  std::cerr << "ledger snapshot at abort:\n";
  for (std::size_t l = 0; l < ledger.layers.size(); ++l) {
    const LayerLedger& ll = ledger.layers[l];
    std::cerr << "  layer " << l << " tokens=" << ll.token_count << " alpha_sum=[";
    for (std::size_t i = 0; i < ll.alpha_sum.size(); ++i)
      std::cerr << (i ? "," : "") << ll.alpha_sum[i];
    std::cerr << "] hits=[";
    for (std::size_t i = 0; i < ll.hit_count.size(); ++i)
      std::cerr << (i ? "," : "") << ll.hit_count[i];
    std::cerr << "]\n";
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

}  // namespace

Batch make_eval_batch(const TaskSpec& spec, int subtask, std::size_t sequences) {
  Rng rng(mix_seed(spec.seed, kStreamEval, static_cast<std::uint64_t>(subtask + 1)));
  return subtask < 0 ? gen_pretrain_batch(spec, sequences, rng)
                     : gen_finetune_batch(spec, static_cast<std::size_t>(subtask), sequences, rng);
}

double train_step(TrainContext& ctx) {
  // The balance penalty exists to keep every expert trained on the mixture.
  // Task-specific fine-tuning must let the gate concentrate, so it runs
  // without the penalty; the phase is part of the saved state, which keeps
  // resumed runs bitwise identical.
  if (ctx.phase == "finetune") ctx.model.config.balance_loss_weight = 0.0;
  const std::uint64_t stream = ctx.subtask < 0 ? kStreamPretrainData : kStreamFinetuneData;
  Rng batch_rng(mix_seed(ctx.run_seed, stream, ctx.rng_counter));
  ctx.rng_counter += 1;
  const Batch batch =
      ctx.subtask < 0
          ? gen_pretrain_batch(ctx.config.task, ctx.config.batch_size, batch_rng)
          : gen_finetune_batch(ctx.config.task, static_cast<std::size_t>(ctx.subtask),
                               ctx.config.batch_size, batch_rng);

  Tape tape;
  const ModelVars vars = bind_params(tape, ctx.model);
  const ForwardResult fwd = model_forward(tape, vars, ctx.model, batch.features,
                                          batch.tokens_per_seq, batch.labels);
  const double loss = tape.value(fwd.total_loss)[0];
  if (!std::isfinite(loss)) {
    dump_ledger(ctx.ledger);
    throw NumericError("non-finite loss at step " + std::to_string(ctx.step + 1));
  }
  tape.backward(fwd.total_loss);

  std::vector<Tensor> grads;
  for_each_var(vars, [&](Var v) { grads.push_back(tape.grad(v)); });

  const double lr = ctx.opt.lr_now();
  adam_step(ctx.model, grads, ctx.opt, [&](const ParamInfo& p) {
    return p.moe_layer >= 0 && p.expert >= 0 &&
           !ctx.schedule.survivors[static_cast<std::size_t>(p.moe_layer)]
                                  [static_cast<std::size_t>(p.expert)];
  });

  accumulate(ctx.ledger, fwd.gates);
  ctx.step += 1;
  ctx.metrics.add_step(static_cast<long>(ctx.step), ctx.phase, loss, lr);

  if (!ctx.ledger.layers.empty() && is_window_boundary(ctx.prune, ctx.step) &&
      ctx.step <= ctx.prune.total_steps) {
    // Window share rows, recorded before the ledger resets.
    for (std::size_t l = 0; l < ctx.ledger.layers.size(); ++l) {
      const auto shares =
          window_shares(ctx.ledger, l, ctx.prune.criterion, ctx.schedule.survivors[l]);
      if (!shares) continue;
      const int z = static_cast<int>(ctx.schedule.num_active(l));
      for (std::size_t e : ctx.schedule.active_ids(l)) {
        ctx.metrics.add_window_share(static_cast<long>(ctx.step), ctx.phase,
                                     static_cast<int>(l),
                                     static_cast<int>(ctx.schedule.window_index),
                                     static_cast<int>(e), (*shares)[e],
                                     static_cast<long>(ctx.ledger.layers[l].hit_count[e]), z);
      }
    }
    const std::size_t events_before = ctx.schedule.events.size();
    on_window_end(ctx.schedule, ctx.ledger, ctx.prune, ctx.step);
    for (std::size_t i = events_before; i < ctx.schedule.events.size(); ++i) {
      const PruneEvent& ev = ctx.schedule.events[i];
      std::string what = ev.mode;
      if (!ev.dropped.empty()) {
        what += ":drop=";
        for (std::size_t j = 0; j < ev.dropped.size(); ++j) {
          if (j) what += "|";
          what += std::to_string(ev.dropped[j]);
        }
      }
      ctx.metrics.add_event(static_cast<long>(ev.step), ctx.phase, static_cast<int>(ev.layer),
                            static_cast<int>(ev.window),
                            static_cast<int>(ctx.schedule.num_active(ev.layer)), what);
    }
    sync_active_masks(ctx.model, ctx.schedule);
  }
  return loss;
}

void run_steps(TrainContext& ctx, std::size_t target_steps) {
  while (ctx.step < target_steps) train_step(ctx);
}

void save_context(TrainContext& ctx, const std::string& ckpt_path) {
  CheckpointState s;
  s.config = ctx.config;
  s.config.prune = ctx.prune;
  s.model = ctx.model;
  s.opt = ctx.opt;
  s.schedule = ctx.schedule;
  s.ledger = ctx.ledger;
  s.rng_counter = ctx.rng_counter;
  s.step = ctx.step;
  s.phase = ctx.phase;
  s.subtask = ctx.subtask;
  s.run_seed = ctx.run_seed;
  save_checkpoint(ckpt_path, s);
}

TrainContext load_context(const std::string& ckpt_path) {
  CheckpointState s = load_checkpoint(ckpt_path);
  TrainContext ctx;
  ctx.config = s.config;
  ctx.model = std::move(s.model);
  ctx.opt = std::move(s.opt);
  ctx.schedule = std::move(s.schedule);
  ctx.ledger = std::move(s.ledger);
  ctx.rng_counter = s.rng_counter;
  ctx.step = s.step;
  ctx.phase = s.phase;
  ctx.subtask = s.subtask;
  ctx.run_seed = s.run_seed;
  ctx.prune = ctx.config.prune;
  ctx.opt.config = ctx.config.opt_for(ctx.phase == "pretrain");
  return ctx;
}

namespace {

RunResult finish_run(TrainContext& ctx, const std::string& run_dir) {
  fs::create_directories(run_dir);
  const Batch eval_set = make_eval_batch(ctx.config.task, ctx.subtask, ctx.config.eval_sequences);
  RunResult r;
  r.eval = evaluate(ctx.model, eval_set);
  r.run_dir = run_dir;
  r.final_survivors = ctx.schedule.survivors;
  r.clamp_activations = ctx.schedule.clamp_activations;
  ctx.metrics.add_eval(static_cast<long>(ctx.step), "eval", r.eval.accuracy, "final_accuracy");
  ctx.metrics.add_eval(static_cast<long>(ctx.step), "eval", r.eval.mean_loss, "final_loss");

  RunConfig cfg = ctx.config;
  cfg.prune = ctx.prune;
  write_text(run_dir + "/config.txt", cfg.serialize());
  write_text(run_dir + "/events.log", serialize_events(ctx.schedule.events));
  ctx.metrics.write_csv(run_dir + "/metrics.csv");
  save_context(ctx, run_dir + "/checkpoint.moep");
  return r;
}

}  // namespace

RunResult pretrain_run(const RunConfig& cfg, std::uint64_t seed, const std::string& run_dir) {
  cfg.validate();
  TrainContext ctx;
  ctx.config = cfg;
  ctx.run_seed = seed;
  ctx.phase = "pretrain";
  ctx.subtask = -1;
  Rng init_rng(mix_seed(seed, kStreamInit, 0));
  ctx.model = Model::init(cfg.model, init_rng);
  ctx.opt = OptimizerState::make(ctx.model, cfg.opt_for(true));
  ctx.prune = PruneConfig{PruneMode::kNone, cfg.prune.criterion, cfg.prune.beta, cfg.prune.gamma,
                          cfg.pretrain_steps, cfg.model.num_experts};
  const std::size_t layers = ctx.model.num_moe_layers();
  ctx.ledger = ProficiencyLedger::make(layers, cfg.model.num_experts);
  ctx.schedule = ScheduleState::make(layers, cfg.model.num_experts);
  run_steps(ctx, cfg.pretrain_steps);
  return finish_run(ctx, run_dir);
}

RunResult finetune_run(const std::string& ckpt_path, const RunConfig& cfg, std::size_t subtask,
                       FinetuneMode mode, std::uint64_t seed, const std::string& run_dir) {
  cfg.validate();
  if (subtask >= cfg.task.num_subtasks) throw ConfigError("finetune: subtask out of range");
  CheckpointState base = load_checkpoint(ckpt_path, &cfg.model);
  if (mode == FinetuneMode::kDenseFt && cfg.model.num_experts != 1) {
    throw ConfigError("dense-ft requires an E=1 checkpoint");
  }

  TrainContext ctx;
  ctx.config = cfg;
  ctx.run_seed = seed;
  ctx.phase = "finetune";
  ctx.subtask = static_cast<int>(subtask);
  ctx.model = std::move(base.model);
  // Fine-tuning starts from the full pre-trained expert set.
  for (Block& blk : ctx.model.blocks) {
    if (blk.is_moe()) blk.moe().active_mask.assign(cfg.model.num_experts, true);
  }
  ctx.opt = OptimizerState::make(ctx.model, cfg.opt_for(false));
  ctx.prune = cfg.prune_for_finetune();
  switch (mode) {
    case FinetuneMode::kDenseFt:
    case FinetuneMode::kMoeFt: ctx.prune.mode = PruneMode::kNone; break;
    case FinetuneMode::kStaged: ctx.prune.mode = PruneMode::kStaged; break;
    case FinetuneMode::kEager: ctx.prune.mode = PruneMode::kEager; break;
  }
  const std::size_t layers = ctx.model.num_moe_layers();
  ctx.ledger = ProficiencyLedger::make(layers, cfg.model.num_experts);
  ctx.schedule = ScheduleState::make(layers, cfg.model.num_experts);
  run_steps(ctx, cfg.finetune_steps);
  return finish_run(ctx, run_dir);
}

RunResult two_pass_run(const std::string& ckpt_path, const RunConfig& cfg, std::size_t subtask,
                       FinetuneMode variant, std::uint64_t seed, const std::string& run_dir) {
  if (variant != FinetuneMode::kStaged && variant != FinetuneMode::kEager) {
    throw ConfigError("two-pass variant must be staged or eager");
  }
  const RunResult pass1 = finetune_run(ckpt_path, cfg, subtask, variant, seed, run_dir + "/pass1");

  CheckpointState base = load_checkpoint(ckpt_path, &cfg.model);
  TrainContext ctx;
  ctx.config = cfg;
  ctx.run_seed = mix_seed(seed, 0x2a55, 0);  // pass 2 sees a fresh data order
  ctx.phase = "finetune";
  ctx.subtask = static_cast<int>(subtask);
  ctx.model = std::move(base.model);
  ctx.opt = OptimizerState::make(ctx.model, cfg.opt_for(false));
  ctx.prune = cfg.prune_for_finetune();
  ctx.prune.mode = PruneMode::kNone;
  const std::size_t layers = ctx.model.num_moe_layers();
  ctx.ledger = ProficiencyLedger::make(layers, cfg.model.num_experts);
  ctx.schedule = ScheduleState::make(layers, cfg.model.num_experts);
  // Mask each MoE layer to the pass-1 selection from step 0.
  for (std::size_t l = 0; l < layers; ++l) {
    ctx.schedule.survivors[l] = pass1.final_survivors[l];
    ctx.schedule.finalized[l] = ctx.schedule.num_active(l) == 1;
  }
  sync_active_masks(ctx.model, ctx.schedule);
  run_steps(ctx, cfg.finetune_steps);
  RunResult r = finish_run(ctx, run_dir + "/pass2");
  r.run_dir = run_dir;
  return r;
}

}  // namespace moep
