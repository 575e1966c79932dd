// SPDX-License-Identifier: Apache-2.0
#include "moep/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "moep/errors.hpp"

namespace moep {

std::string format_double(double v) {
  // Shortest decimal that round-trips exactly.
  for (int prec = 1; prec <= 17; ++prec) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) return buf;
  }
  return std::to_string(v);
}

namespace {

std::string join_u64(const std::vector<std::uint64_t>& xs) {
  std::ostringstream os;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) os << ",";
    os << xs[i];
  }
  return os.str();
}

std::string join_sizes(const std::vector<std::size_t>& xs) {
  std::ostringstream os;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) os << ",";
    os << xs[i];
  }
  return os.str();
}

std::vector<std::uint64_t> split_u64(const std::string& s) {
  std::vector<std::uint64_t> out;
  if (s.empty()) return out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) out.push_back(std::stoull(tok));
  return out;
}

std::size_t parse_size(const std::string& v) { return std::stoull(v); }
double parse_f(const std::string& v) { return std::stod(v); }

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.task.build_default_centers();
  c.prune.num_experts = c.model.num_experts;
  c.prune.total_steps = c.finetune_steps;
  return c;
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  os << "model.num_blocks=" << model.num_blocks << "\n";
  os << "model.hidden_size=" << model.hidden_size << "\n";
  os << "model.ffn_inner=" << model.ffn_inner << "\n";
  os << "model.num_heads=" << model.num_heads << "\n";
  os << "model.num_experts=" << model.num_experts << "\n";
  os << "model.moe_blocks=" << join_sizes(model.moe_block_indices) << "\n";
  os << "model.balance_loss_weight=" << format_double(model.balance_loss_weight) << "\n";
  os << "task.num_subtasks=" << task.num_subtasks << "\n";
  os << "task.feature_dim=" << task.feature_dim << "\n";
  os << "task.tokens_per_sequence=" << task.tokens_per_sequence << "\n";
  os << "task.classes_per_subtask=" << task.classes_per_subtask << "\n";
  os << "task.noise_scale=" << format_double(task.noise_scale) << "\n";
  os << "task.seed=" << task.seed << "\n";
  os << "prune.mode=" << to_string(prune.mode) << "\n";
  os << "prune.criterion=" << to_string(prune.criterion) << "\n";
  os << "prune.beta=" << format_double(prune.beta) << "\n";
  os << "prune.gamma=" << format_double(prune.gamma) << "\n";
  os << "opt.beta1=" << format_double(opt.beta1) << "\n";
  os << "opt.beta2=" << format_double(opt.beta2) << "\n";
  os << "opt.eps=" << format_double(opt.eps) << "\n";
  os << "opt.weight_decay=" << format_double(opt.weight_decay) << "\n";
  os << "train.pretrain_steps=" << pretrain_steps << "\n";
  os << "train.finetune_steps=" << finetune_steps << "\n";
  os << "train.batch_size=" << batch_size << "\n";
  os << "train.eval_sequences=" << eval_sequences << "\n";
  os << "train.warmup_pretrain=" << warmup_pretrain << "\n";
  os << "train.warmup_finetune=" << warmup_finetune << "\n";
  os << "train.max_lr_pretrain=" << format_double(max_lr_pretrain) << "\n";
  os << "train.max_lr_finetune=" << format_double(max_lr_finetune) << "\n";
  os << "seeds=" << join_u64(seeds) << "\n";
  os << "out_dir=" << out_dir << "\n";
  return os.str();
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c = defaults();
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    try {
      if (key == "model.num_blocks") c.model.num_blocks = parse_size(val);
      else if (key == "model.hidden_size") c.model.hidden_size = parse_size(val);
      else if (key == "model.ffn_inner") c.model.ffn_inner = parse_size(val);
      else if (key == "model.num_heads") c.model.num_heads = parse_size(val);
      else if (key == "model.num_experts") c.model.num_experts = parse_size(val);
      else if (key == "model.moe_blocks") {
        c.model.moe_block_indices.clear();
        for (std::uint64_t x : split_u64(val)) c.model.moe_block_indices.push_back(x);
      } else if (key == "model.balance_loss_weight") c.model.balance_loss_weight = parse_f(val);
      else if (key == "task.num_subtasks") c.task.num_subtasks = parse_size(val);
      else if (key == "task.feature_dim") c.task.feature_dim = parse_size(val);
      else if (key == "task.tokens_per_sequence") c.task.tokens_per_sequence = parse_size(val);
      else if (key == "task.classes_per_subtask") c.task.classes_per_subtask = parse_size(val);
      else if (key == "task.noise_scale") c.task.noise_scale = parse_f(val);
      else if (key == "task.seed") c.task.seed = std::stoull(val);
      else if (key == "prune.mode") c.prune.mode = prune_mode_from_string(val);
      else if (key == "prune.criterion") c.prune.criterion = prune_criterion_from_string(val);
      else if (key == "prune.beta") c.prune.beta = parse_f(val);
      else if (key == "prune.gamma") c.prune.gamma = parse_f(val);
      else if (key == "opt.beta1") c.opt.beta1 = parse_f(val);
      else if (key == "opt.beta2") c.opt.beta2 = parse_f(val);
      else if (key == "opt.eps") c.opt.eps = parse_f(val);
      else if (key == "opt.weight_decay") c.opt.weight_decay = parse_f(val);
      else if (key == "train.pretrain_steps") c.pretrain_steps = parse_size(val);
      else if (key == "train.finetune_steps") c.finetune_steps = parse_size(val);
      else if (key == "train.batch_size") c.batch_size = parse_size(val);
      else if (key == "train.eval_sequences") c.eval_sequences = parse_size(val);
      else if (key == "train.warmup_pretrain") c.warmup_pretrain = parse_size(val);
      else if (key == "train.warmup_finetune") c.warmup_finetune = parse_size(val);
      else if (key == "train.max_lr_pretrain") c.max_lr_pretrain = parse_f(val);
      else if (key == "train.max_lr_finetune") c.max_lr_finetune = parse_f(val);
      else if (key == "seeds") c.seeds = split_u64(val);
      else if (key == "out_dir") c.out_dir = val;
      else throw ConfigError("unknown config key: " + key);
    } catch (const std::invalid_argument&) {
      throw ConfigError("config line " + std::to_string(lineno) + ": bad value for " + key);
    }
  }
  c.model.feature_dim = c.task.feature_dim;
  c.model.num_classes = c.task.classes_per_subtask;
  c.task.build_default_centers();
  c.prune.num_experts = c.model.num_experts;
  c.prune.total_steps = c.finetune_steps;
  c.validate();
  return c;
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::validate() const {
  model.validate();
  task.validate();
  prune.validate();
  if (batch_size < 1 || eval_sequences < 1) throw ConfigError("config: batch/eval sizes must be >= 1");
  if (pretrain_steps < 1 || finetune_steps < 1) throw ConfigError("config: step budgets must be >= 1");
  if (seeds.empty()) throw ConfigError("config: need at least one seed");
  if (warmup_pretrain >= pretrain_steps || warmup_finetune >= finetune_steps) {
    throw ConfigError("config: warmup must be shorter than the phase");
  }
}

AdamConfig RunConfig::opt_for(bool pretrain) const {
  AdamConfig a = opt;
  a.max_lr = pretrain ? max_lr_pretrain : max_lr_finetune;
  a.warmup_steps = pretrain ? warmup_pretrain : warmup_finetune;
  a.total_steps = pretrain ? pretrain_steps : finetune_steps;
  a.validate();
  return a;
}

PruneConfig RunConfig::prune_for_finetune() const {
  PruneConfig p = prune;
  p.total_steps = finetune_steps;
  p.num_experts = model.num_experts;
  p.validate();
  return p;
}

}  // namespace moep
