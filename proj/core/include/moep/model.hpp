// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "moep/rng.hpp"
#include "moep/tape.hpp"
#include "moep/tensor.hpp"

namespace moep {

struct ModelConfig {
  std::size_t num_blocks = 4;
  std::size_t hidden_size = 32;
  std::size_t ffn_inner = 24;
  std::size_t num_heads = 1;  // mean-pool mixer; must be 1
  std::size_t num_experts = 8;
  std::vector<std::size_t> moe_block_indices = {1, 3};
  std::size_t feature_dim = 16;
  std::size_t num_classes = 2;
  double balance_loss_weight = 1e-2;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// One feed-forward sub-network: hidden -> ffn_inner -> hidden with GELU.
struct Expert {
  Tensor w1, b1, w2, b2;
};

struct RouterParams {
  Tensor w_r;  // [hidden, E]
};

struct MoELayer {
  RouterParams router;
  std::vector<Expert> experts;
  std::vector<bool> active_mask;

  std::size_t num_experts() const { return experts.size(); }
  std::size_t num_active() const;
  std::vector<std::size_t> active_ids() const;
};

struct Block {
  Tensor ln1_g, ln1_b;
  Tensor mixer_w, mixer_b;
  Tensor ln2_g, ln2_b;
  std::variant<Expert, MoELayer> ffn;

  bool is_moe() const { return std::holds_alternative<MoELayer>(ffn); }
  MoELayer& moe() { return std::get<MoELayer>(ffn); }
  const MoELayer& moe() const { return std::get<MoELayer>(ffn); }
};

struct Model {
  ModelConfig config;
  Tensor embed_w, embed_b;
  std::vector<Block> blocks;
  Tensor head_w, head_b;

  static Model init(const ModelConfig& config, Rng& rng);

  /// Block indices that hold a MoE layer, in block order. The position in
  /// this list is the "layer index" used by the ledger and schedule.
  std::vector<std::size_t> moe_blocks() const;
  std::size_t num_moe_layers() const { return moe_blocks().size(); }
};

struct ParamInfo {
  std::string name;
  Tensor* tensor;
  int moe_layer = -1;  // index among MoE layers, -1 for shared params
  int expert = -1;     // expert id within that layer, -1 for router/shared
};

/// Visits every parameter in a fixed, stable order.
void for_each_param(Model& model, const std::function<void(const ParamInfo&)>& fn);

// ---- taped forward ----

struct ExpertVars {
  Var w1, b1, w2, b2;
};
struct MoeVars {
  Var router;
  std::vector<ExpertVars> experts;
};
struct BlockVars {
  Var ln1_g, ln1_b, mixer_w, mixer_b, ln2_g, ln2_b;
  std::variant<ExpertVars, MoeVars> ffn;
};
struct ModelVars {
  Var embed_w, embed_b;
  std::vector<BlockVars> blocks;
  Var head_w, head_b;
};

/// Pushes every parameter onto the tape as a leaf, mirroring for_each_param order.
ModelVars bind_params(Tape& tape, Model& model);

/// Visits bound vars in exactly the for_each_param order.
void for_each_var(const ModelVars& vars, const std::function<void(Var)>& fn);

struct GateResult {
  Tensor alphas;           // [tokens, E], exactly 0 at masked positions
  std::vector<int> top1;   // per-token selected expert id
  double balance_loss = 0.0;
  Var alphas_var;
  Var balance_var;
};

/// Router logits + softmax over active experts only, plus the switch-style
/// balance loss Z * sum_i f_i * P_i (differentiable through P only).
GateResult gate(Tape& tape, Var x, const MoELayer& layer, const MoeVars& vars);

/// Top-1 routed forward: y[t] = alpha_top1(t) * Exp_top1(x[t]). Only the
/// selected expert runs for each token.
Var moe_forward(Tape& tape, Var x, const MoELayer& layer, const MoeVars& vars, GateResult* gate_out);

Var ffn_forward(Tape& tape, Var x, const ExpertVars& vars);

/// Rewrites a single-survivor MoE layer as a plain FFN; the router is discarded.
Expert collapse_to_dense(const MoELayer& layer);

/// Collapses every MoE block of a finalized model into a dense block.
Model collapse_model(const Model& model);

struct ForwardResult {
  Var logits;                     // [sequences, classes]
  Var task_loss;                  // scalar, valid when labels given
  Var total_loss;                 // task + balance_loss_weight * sum(balance)
  std::vector<GateResult> gates;  // one per MoE layer, in layer order
};

/// features: [sequences*tokens, feature_dim] flattened row-major.
ForwardResult model_forward(Tape& tape, const ModelVars& vars, const Model& model,
                            const Tensor& features, std::size_t tokens_per_seq,
                            std::span<const int> labels);

}  // namespace moep
