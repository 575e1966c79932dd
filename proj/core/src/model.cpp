// SPDX-License-Identifier: Apache-2.0
#include "moep/model.hpp"

#include <cmath>

#include "moep/errors.hpp"

namespace moep {

void ModelConfig::validate() const {
  if (num_blocks < 1 || hidden_size < 1 || ffn_inner < 1 || num_experts < 1 ||
      feature_dim < 1 || num_classes < 2) {
    throw ConfigError("model config: all extents must be >= 1 (classes >= 2)");
  }
  if (num_heads != 1) throw ConfigError("model config: only the mean-pool mixer (num_heads=1) is supported");
  if (balance_loss_weight < 0.0) throw ConfigError("model config: balance_loss_weight must be >= 0");
  for (std::size_t b : moe_block_indices) {
    if (b >= num_blocks) throw ConfigError("model config: moe block index out of range");
  }
}

std::size_t MoELayer::num_active() const {
  std::size_t z = 0;
  for (bool a : active_mask)
    if (a) ++z;
  return z;
}

std::vector<std::size_t> MoELayer::active_ids() const {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < active_mask.size(); ++i)
    if (active_mask[i]) ids.push_back(i);
  return ids;
}

namespace {

Tensor init_weight(std::size_t in, std::size_t out, Rng& rng) {
  Tensor w({in, out});
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = scale * rng.gaussian();
  return w;
}

Expert init_expert(const ModelConfig& c, Rng& rng) {
  Expert e;
  e.w1 = init_weight(c.hidden_size, c.ffn_inner, rng);
  e.b1 = Tensor::zeros({c.ffn_inner});
  e.w2 = init_weight(c.ffn_inner, c.hidden_size, rng);
  e.b2 = Tensor::zeros({c.hidden_size});
  return e;
}

}  // namespace

Model Model::init(const ModelConfig& config, Rng& rng) {
  config.validate();
  Model m;
  m.config = config;
  m.embed_w = init_weight(config.feature_dim, config.hidden_size, rng);
  m.embed_b = Tensor::zeros({config.hidden_size});
  for (std::size_t b = 0; b < config.num_blocks; ++b) {
    Block blk;
    blk.ln1_g = Tensor({config.hidden_size});
    blk.ln1_g.fill(1.0);
    blk.ln1_b = Tensor::zeros({config.hidden_size});
    blk.mixer_w = init_weight(config.hidden_size, config.hidden_size, rng);
    blk.mixer_b = Tensor::zeros({config.hidden_size});
    blk.ln2_g = Tensor({config.hidden_size});
    blk.ln2_g.fill(1.0);
    blk.ln2_b = Tensor::zeros({config.hidden_size});
    const bool is_moe = std::find(config.moe_block_indices.begin(), config.moe_block_indices.end(),
                                  b) != config.moe_block_indices.end();
    if (is_moe) {
      MoELayer layer;
      layer.router.w_r = init_weight(config.hidden_size, config.num_experts, rng);
      for (std::size_t e = 0; e < config.num_experts; ++e) layer.experts.push_back(init_expert(config, rng));
      layer.active_mask.assign(config.num_experts, true);
      blk.ffn = std::move(layer);
    } else {
      blk.ffn = init_expert(config, rng);
    }
    m.blocks.push_back(std::move(blk));
  }
  m.head_w = init_weight(config.hidden_size, config.num_classes, rng);
  m.head_b = Tensor::zeros({config.num_classes});
  return m;
}

std::vector<std::size_t> Model::moe_blocks() const {
  std::vector<std::size_t> out;
  for (std::size_t b = 0; b < blocks.size(); ++b)
    if (blocks[b].is_moe()) out.push_back(b);
  return out;
}

void for_each_param(Model& model, const std::function<void(const ParamInfo&)>& fn) {
  fn({"embed.w", &model.embed_w});
  fn({"embed.b", &model.embed_b});
  int moe_layer = 0;
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    Block& blk = model.blocks[b];
    const std::string p = "block" + std::to_string(b) + ".";
    fn({p + "ln1.g", &blk.ln1_g});
    fn({p + "ln1.b", &blk.ln1_b});
    fn({p + "mixer.w", &blk.mixer_w});
    fn({p + "mixer.b", &blk.mixer_b});
    fn({p + "ln2.g", &blk.ln2_g});
    fn({p + "ln2.b", &blk.ln2_b});
    if (blk.is_moe()) {
      MoELayer& layer = blk.moe();
      fn({p + "moe.router", &layer.router.w_r, moe_layer, -1});
      for (std::size_t e = 0; e < layer.experts.size(); ++e) {
        const std::string ep = p + "moe.expert" + std::to_string(e) + ".";
        const int ei = static_cast<int>(e);
        fn({ep + "w1", &layer.experts[e].w1, moe_layer, ei});
        fn({ep + "b1", &layer.experts[e].b1, moe_layer, ei});
        fn({ep + "w2", &layer.experts[e].w2, moe_layer, ei});
        fn({ep + "b2", &layer.experts[e].b2, moe_layer, ei});
      }
      ++moe_layer;
    } else {
      Expert& e = std::get<Expert>(blk.ffn);
      fn({p + "ffn.w1", &e.w1});
      fn({p + "ffn.b1", &e.b1});
      fn({p + "ffn.w2", &e.w2});
      fn({p + "ffn.b2", &e.b2});
    }
  }
  fn({"head.w", &model.head_w});
  fn({"head.b", &model.head_b});
}

ModelVars bind_params(Tape& tape, Model& model) {
  ModelVars v;
  v.embed_w = tape.leaf(model.embed_w);
  v.embed_b = tape.leaf(model.embed_b);
  for (Block& blk : model.blocks) {
    BlockVars bv;
    bv.ln1_g = tape.leaf(blk.ln1_g);
    bv.ln1_b = tape.leaf(blk.ln1_b);
    bv.mixer_w = tape.leaf(blk.mixer_w);
    bv.mixer_b = tape.leaf(blk.mixer_b);
    bv.ln2_g = tape.leaf(blk.ln2_g);
    bv.ln2_b = tape.leaf(blk.ln2_b);
    if (blk.is_moe()) {
      MoELayer& layer = blk.moe();
      MoeVars mv;
      mv.router = tape.leaf(layer.router.w_r);
      for (Expert& e : layer.experts) {
        mv.experts.push_back({tape.leaf(e.w1), tape.leaf(e.b1), tape.leaf(e.w2), tape.leaf(e.b2)});
      }
      bv.ffn = std::move(mv);
    } else {
      Expert& e = std::get<Expert>(blk.ffn);
      bv.ffn = ExpertVars{tape.leaf(e.w1), tape.leaf(e.b1), tape.leaf(e.w2), tape.leaf(e.b2)};
    }
    v.blocks.push_back(std::move(bv));
  }
  v.head_w = tape.leaf(model.head_w);
  v.head_b = tape.leaf(model.head_b);
  return v;
}

void for_each_var(const ModelVars& vars, const std::function<void(Var)>& fn) {
  fn(vars.embed_w);
  fn(vars.embed_b);
  for (const BlockVars& bv : vars.blocks) {
    fn(bv.ln1_g);
    fn(bv.ln1_b);
    fn(bv.mixer_w);
    fn(bv.mixer_b);
    fn(bv.ln2_g);
    fn(bv.ln2_b);
    if (std::holds_alternative<MoeVars>(bv.ffn)) {
      const MoeVars& mv = std::get<MoeVars>(bv.ffn);
      fn(mv.router);
      for (const ExpertVars& ev : mv.experts) {
        fn(ev.w1);
        fn(ev.b1);
        fn(ev.w2);
        fn(ev.b2);
      }
    } else {
      const ExpertVars& ev = std::get<ExpertVars>(bv.ffn);
      fn(ev.w1);
      fn(ev.b1);
      fn(ev.w2);
      fn(ev.b2);
    }
  }
  fn(vars.head_w);
  fn(vars.head_b);
}

Var ffn_forward(Tape& tape, Var x, const ExpertVars& vars) {
  Var h = tape.add_rowvec(tape.matmul(x, vars.w1), vars.b1);
  h = tape.gelu(h);
  return tape.add_rowvec(tape.matmul(h, vars.w2), vars.b2);
}

GateResult gate(Tape& tape, Var x, const MoELayer& layer, const MoeVars& vars) {
  const std::size_t z = layer.num_active();
  if (z == 0) throw NumericError("gate: MoE layer has no active expert");
  Var logits = tape.matmul(x, vars.router);
  Var alphas = tape.masked_softmax_rows(logits, layer.active_mask);

  GateResult g;
  g.alphas = tape.value(alphas);
  g.alphas_var = alphas;
  g.top1 = argmax_rows(g.alphas);

  // Balance loss Z * sum_i f_i * P_i; f_i (token fractions) enter as constants.
  const std::size_t n = g.alphas.rows();
  const std::size_t big_e = layer.num_experts();
  std::vector<double> weights(big_e, 0.0);
  for (int t : g.top1) weights[static_cast<std::size_t>(t)] += 1.0;
  const double zf = static_cast<double>(z) / static_cast<double>(n);
  for (std::size_t i = 0; i < big_e; ++i) weights[i] *= zf;
  g.balance_var = tape.weighted_col_mean(alphas, std::move(weights));
  g.balance_loss = tape.value(g.balance_var)[0];
  return g;
}

Var moe_forward(Tape& tape, Var x, const MoELayer& layer, const MoeVars& vars, GateResult* gate_out) {
  GateResult g = gate(tape, x, layer, vars);
  const std::size_t n = tape.value(x).rows();
  const std::size_t hidden = tape.value(x).cols();

  Var y = tape.zeros({n, hidden});
  for (std::size_t e : layer.active_ids()) {
    std::vector<std::size_t> rows;
    for (std::size_t t = 0; t < n; ++t)
      if (g.top1[t] == static_cast<int>(e)) rows.push_back(t);
    if (rows.empty()) continue;  // untouched expert: exactly zero gradient
    Var xe = tape.gather_rows(x, rows);
    Var oe = ffn_forward(tape, xe, vars.experts[e]);
    Var ae = tape.select_col(tape.gather_rows(g.alphas_var, rows), e);
    Var ye = tape.scale_rows(oe, ae);
    y = tape.add(y, tape.scatter_rows(ye, std::move(rows), n));
  }
  if (gate_out) *gate_out = std::move(g);
  return y;
}

Expert collapse_to_dense(const MoELayer& layer) {
  if (layer.num_active() != 1) {
    throw ConfigError("collapse_to_dense requires exactly one active expert, got " +
                      std::to_string(layer.num_active()));
  }
  return layer.experts[layer.active_ids()[0]];
}

Model collapse_model(const Model& model) {
  Model out = model;
  for (Block& blk : out.blocks) {
    if (blk.is_moe()) blk.ffn = collapse_to_dense(blk.moe());
  }
  out.config.moe_block_indices.clear();
  out.config.num_experts = 1;
  return out;
}

ForwardResult model_forward(Tape& tape, const ModelVars& vars, const Model& model,
                            const Tensor& features, std::size_t tokens_per_seq,
                            std::span<const int> labels) {
  const ModelConfig& c = model.config;
  if (features.rank() != 2 || features.cols() != c.feature_dim) {
    throw ShapeError("model_forward: features must be [tokens, feature_dim=" +
                     std::to_string(c.feature_dim) + "], got " + shape_str(features.shape()));
  }
  if (tokens_per_seq == 0 || features.rows() % tokens_per_seq != 0) {
    throw ShapeError("model_forward: token count not divisible by tokens_per_seq");
  }

  ForwardResult r;
  Var x = tape.leaf(features);
  Var h = tape.add_rowvec(tape.matmul(x, vars.embed_w), vars.embed_b);

  Var balance_sum;
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    const Block& blk = model.blocks[b];
    const BlockVars& bv = vars.blocks[b];
    // Sequence mixer: h += W_m * mean_tokens(LN(h)), broadcast back per token.
    Var ln1 = tape.layer_norm(h, bv.ln1_g, bv.ln1_b);
    Var pooled = tape.seq_mean(ln1, tokens_per_seq);
    Var mixed = tape.add_rowvec(tape.matmul(pooled, bv.mixer_w), bv.mixer_b);
    h = tape.add(h, tape.repeat_rows(mixed, tokens_per_seq));
    // FFN / MoE sublayer with residual.
    Var ln2 = tape.layer_norm(h, bv.ln2_g, bv.ln2_b);
    Var f;
    if (blk.is_moe()) {
      GateResult g;
      f = moe_forward(tape, ln2, blk.moe(), std::get<MoeVars>(bv.ffn), &g);
      Var bal = g.balance_var;
      balance_sum = balance_sum.valid() ? tape.add(balance_sum, bal) : bal;
      r.gates.push_back(std::move(g));
    } else {
      f = ffn_forward(tape, ln2, std::get<ExpertVars>(bv.ffn));
    }
    h = tape.add(h, f);
  }

  Var pooled = tape.seq_mean(h, tokens_per_seq);
  r.logits = tape.add_rowvec(tape.matmul(pooled, vars.head_w), vars.head_b);

  if (!labels.empty()) {
    r.task_loss = tape.cross_entropy_mean(r.logits, labels);
    if (balance_sum.valid() && c.balance_loss_weight != 0.0) {
      r.total_loss = tape.add(r.task_loss, tape.scale(balance_sum, c.balance_loss_weight));
    } else {
      r.total_loss = r.task_loss;
    }
  }
  return r;
}

}  // namespace moep
