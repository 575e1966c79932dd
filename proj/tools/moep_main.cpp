// SPDX-License-Identifier: Apache-2.0
//
// moep: train, prune and benchmark small mixture-of-experts encoders.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "moep/bench.hpp"
#include "moep/checkpoint.hpp"
#include "moep/report.hpp"
#include "moep/trainer.hpp"

namespace fs = std::filesystem;
using namespace moep;

namespace {

std::string default_out_root() {
  const char* env = std::getenv("MOEP_OUT_DIR");
  return env && *env ? env : "runs";
}

// Loads the config (or defaults), then applies `key=value` overrides on the
// canonical serialized form so every known key can be overridden.
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg = path.empty() ? RunConfig::defaults() : RunConfig::load_file(path);
  if (overrides.empty()) return cfg;
  std::istringstream in(cfg.serialize());
  std::string line, text;
  std::vector<bool> used(overrides.size(), false);
  while (std::getline(in, line)) {
    const std::string key = line.substr(0, line.find('='));
    for (std::size_t i = 0; i < overrides.size(); ++i) {
      const auto eq = overrides[i].find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + overrides[i]);
      if (overrides[i].substr(0, eq) == key) {
        line = overrides[i];
        used[i] = true;
      }
    }
    text += line + "\n";
  }
  for (std::size_t i = 0; i < overrides.size(); ++i) {
    if (!used[i]) throw ConfigError("--set references unknown key: " + overrides[i]);
  }
  return RunConfig::parse(text);
}

void print_result(const std::string& what, const RunResult& r) {
  std::cout << what << ": accuracy=" << r.eval.accuracy << " loss=" << r.eval.mean_loss
            << " dir=" << r.run_dir;
  if (!r.final_survivors.empty()) {
    std::cout << " survivors=";
    for (std::size_t l = 0; l < r.final_survivors.size(); ++l) {
      if (l) std::cout << ";";
      bool first = true;
      for (std::size_t e = 0; e < r.final_survivors[l].size(); ++e) {
        if (!r.final_survivors[l][e]) continue;
        if (!first) std::cout << ",";
        std::cout << e;
        first = false;
      }
    }
  }
  std::cout << "\n";
}

RunConfig dense_variant(RunConfig cfg) {
  cfg.model.num_experts = 1;
  return cfg;
}

int run_sweep(const RunConfig& cfg, std::size_t subtask, const std::string& out) {
  const RunConfig dense_cfg = dense_variant(cfg);
  for (std::uint64_t seed : cfg.seeds) {
    const std::string sfx = "-seed" + std::to_string(seed);
    const std::string moe_pre = out + "/pretrain-moe" + sfx;
    const std::string dense_pre = out + "/pretrain-dense" + sfx;
    print_result("pretrain-moe", pretrain_run(cfg, seed, moe_pre));
    print_result("pretrain-dense", pretrain_run(dense_cfg, seed, dense_pre));
    const std::string moe_ckpt = moe_pre + "/checkpoint.moep";
    const std::string dense_ckpt = dense_pre + "/checkpoint.moep";

    print_result("dense-ft", finetune_run(dense_ckpt, dense_cfg, subtask, FinetuneMode::kDenseFt,
                                          seed, out + "/dense-ft" + sfx));
    print_result("moe-ft", finetune_run(moe_ckpt, cfg, subtask, FinetuneMode::kMoeFt, seed,
                                        out + "/moe-ft" + sfx));
    print_result("staged", finetune_run(moe_ckpt, cfg, subtask, FinetuneMode::kStaged, seed,
                                        out + "/staged" + sfx));
    print_result("eager", finetune_run(moe_ckpt, cfg, subtask, FinetuneMode::kEager, seed,
                                       out + "/eager" + sfx));
    print_result("two-pass-staged", two_pass_run(moe_ckpt, cfg, subtask, FinetuneMode::kStaged,
                                                 seed, out + "/two-pass-staged" + sfx));
    print_result("two-pass-eager", two_pass_run(moe_ckpt, cfg, subtask, FinetuneMode::kEager,
                                                seed, out + "/two-pass-eager" + sfx));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"task-expert pruning for small mixture-of-experts encoders"};
  app.require_subcommand(1);

  std::string config_path, ckpt_path, out_dir, mode_str = "eager", variant_str = "staged";
  std::vector<std::string> overrides, run_dirs;
  std::uint64_t seed = 1;
  std::size_t subtask = 0, batch = 32, reps = 30, warmup = 5;

  auto add_common = [&](CLI::App* sub, bool with_out = true) {
    sub->add_option("--config", config_path, "run config file (key=value lines)");
    sub->add_option("--set", overrides, "override a config key, e.g. --set prune.beta=0.5")
        ->take_all();
    if (with_out) sub->add_option("--out", out_dir, "output directory");
  };

  CLI::App* pre = app.add_subcommand("pretrain", "pre-train on the full subtask mixture");
  add_common(pre);
  pre->add_option("--seed", seed, "run seed");

  CLI::App* ft = app.add_subcommand("finetune", "fine-tune a checkpoint on one subtask");
  add_common(ft);
  ft->add_option("--ckpt", ckpt_path, "pre-trained checkpoint")->required();
  ft->add_option("--subtask", subtask, "subtask id")->required();
  ft->add_option("--mode", mode_str, "dense-ft | moe-ft | staged | eager");
  ft->add_option("--seed", seed, "run seed");

  CLI::App* tp = app.add_subcommand("two-pass", "select experts in pass 1, re-tune in pass 2");
  add_common(tp);
  tp->add_option("--ckpt", ckpt_path, "pre-trained checkpoint")->required();
  tp->add_option("--subtask", subtask, "subtask id")->required();
  tp->add_option("--variant", variant_str, "staged | eager");
  tp->add_option("--seed", seed, "run seed");

  CLI::App* sweep = app.add_subcommand("sweep", "all settings over the configured seeds");
  add_common(sweep);
  sweep->add_option("--subtask", subtask, "subtask id to fine-tune on");

  CLI::App* bench = app.add_subcommand("bench", "single-thread inference throughput");
  bench->add_option("--ckpt", ckpt_path, "checkpoint to benchmark")->required();
  bench->add_option("--batch", batch, "sequences per repetition");
  bench->add_option("--reps", reps, "timed repetitions (>= 30)");
  bench->add_option("--warmup", warmup, "warmup repetitions (>= 5)");
  bench->add_option("--out", out_dir, "directory for bench.csv (optional)");

  CLI::App* rep = app.add_subcommand("report", "aggregate run directories into tables and SVGs");
  rep->add_option("dirs", run_dirs, "run directories")->required();
  rep->add_option("--out", out_dir, "report output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (out_dir.empty()) out_dir = default_out_root();

    if (pre->parsed()) {
      const RunConfig cfg = load_config(config_path, overrides);
      print_result("pretrain", pretrain_run(cfg, seed, out_dir + "/pretrain-seed" + std::to_string(seed)));
    } else if (ft->parsed()) {
      const RunConfig cfg = load_config(config_path, overrides);
      const FinetuneMode mode = finetune_mode_from_string(mode_str);
      const std::string dir =
          out_dir + "/" + mode_str + "-seed" + std::to_string(seed);
      print_result(mode_str, finetune_run(ckpt_path, cfg, subtask, mode, seed, dir));
    } else if (tp->parsed()) {
      const RunConfig cfg = load_config(config_path, overrides);
      const FinetuneMode variant = finetune_mode_from_string(variant_str);
      const std::string dir =
          out_dir + "/two-pass-" + variant_str + "-seed" + std::to_string(seed);
      print_result("two-pass-" + variant_str, two_pass_run(ckpt_path, cfg, subtask, variant, seed, dir));
    } else if (sweep->parsed()) {
      return run_sweep(load_config(config_path, overrides), subtask, out_dir);
    } else if (bench->parsed()) {
      const CheckpointState state = load_checkpoint(ckpt_path);
      const BenchReport r = bench_inference(state.model, batch,
                                            state.config.task.tokens_per_sequence, reps, warmup);
      std::cout << r.summary();
      if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream csv(out_dir + "/bench.csv");
        if (!csv) throw IoError("cannot write " + out_dir + "/bench.csv");
        csv << r.to_csv();
        std::cout << "wrote " << out_dir << "/bench.csv\n";
      }
    } else if (rep->parsed()) {
      const ReportResult r = report(run_dirs, out_dir);
      for (const SettingSummary& s : r.summaries) {
        std::cout << s.setting << ": mean_accuracy=" << s.mean_accuracy
                  << " std=" << s.std_accuracy << " runs=" << s.num_runs << "\n";
      }
      std::cout << "report written to " << out_dir << " (" << r.runs_read << " runs, "
                << r.runs_skipped << " skipped)\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
