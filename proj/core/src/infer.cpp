// SPDX-License-Identifier: Apache-2.0
#include "moep/infer.hpp"

#include <cmath>

#include "moep/errors.hpp"

namespace moep {

namespace {

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.at(i, p);
      if (av == 0.0) continue;
      const double* brow = b.data() + p * n;
      double* crow = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  return c;
}

void add_rowvec_inplace(Tensor& a, const Tensor& bias) {
  const std::size_t n = a.rows(), m = a.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) a.at(i, j) += bias[j];
}

void gelu_inplace(Tensor& a) {
  static constexpr double kC0 = 0.7978845608028654;
  static constexpr double kC1 = 0.044715;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    a[i] = 0.5 * x * (1.0 + std::tanh(kC0 * (x + kC1 * x * x * x)));
  }
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  const std::size_t n = a.rows(), m = a.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < m; ++j) mu += a.at(i, j);
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double d = a.at(i, j) - mu;
      var += d * d;
    }
    var /= static_cast<double>(m);
    const double is = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) = (a.at(i, j) - mu) * is * gain[j] + bias[j];
  }
  return out;
}

Tensor ffn_batched(const Tensor& x, const Expert& e) {
  Tensor h = matmul(x, e.w1);
  add_rowvec_inplace(h, e.b1);
  gelu_inplace(h);
  Tensor y = matmul(h, e.w2);
  add_rowvec_inplace(y, e.b2);
  return y;
}

Tensor moe_infer(const Tensor& x, const MoELayer& layer) {
  const std::size_t n = x.rows(), hidden = x.cols();
  const std::size_t big_e = layer.num_experts();
  const std::vector<std::size_t> active = layer.active_ids();
  if (active.empty()) throw NumericError("moe_infer: no active expert");

  Tensor y({n, hidden});
  if (active.size() == 1) {
    // Masked single-survivor mode: router retained, alpha is exactly 1.
    Tensor logits = matmul(x, layer.router.w_r);
    (void)logits;
    Tensor out = ffn_batched(x, layer.experts[active[0]]);
    for (std::size_t i = 0; i < out.size(); ++i) y[i] = 1.0 * out[i];
    return y;
  }

  // Serving-style masked-dense execution: with several experts resident,
  // every active expert processes the whole batch and the alpha-weighted
  // top-1 row is selected per token afterwards. This is the single-device
  // compute analogue of all-experts-resident MoE serving.
  Tensor logits = matmul(x, layer.router.w_r);
  std::vector<Tensor> outs(big_e);
  for (std::size_t e : active) outs[e] = ffn_batched(x, layer.experts[e]);

  std::vector<double> probs(big_e, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double mx = logits.at(t, active[0]);
    for (std::size_t i : active) mx = std::max(mx, logits.at(t, i));
    double denom = 0.0;
    for (std::size_t i : active) {
      probs[i] = std::exp(logits.at(t, i) - mx);
      denom += probs[i];
    }
    std::size_t best = active[0];
    for (std::size_t i : active)
      if (probs[i] > probs[best]) best = i;
    const double alpha = probs[best] / denom;
    const Tensor& out = outs[best];
    for (std::size_t j = 0; j < hidden; ++j) y.at(t, j) = alpha * out.at(t, j);
  }
  return y;
}

Tensor seq_mean(const Tensor& a, std::size_t group) {
  const std::size_t s = a.rows() / group, m = a.cols();
  Tensor out({s, m});
  const double inv = 1.0 / static_cast<double>(group);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t t = 0; t < group; ++t)
      for (std::size_t j = 0; j < m; ++j) out.at(i, j) += a.at(i * group + t, j) * inv;
  return out;
}

}  // namespace

Tensor model_infer(const Model& model, const Tensor& features, std::size_t tokens_per_seq) {
  const ModelConfig& c = model.config;
  if (features.rank() != 2 || features.cols() != c.feature_dim) {
    throw ShapeError("model_infer: bad feature shape " + shape_str(features.shape()));
  }
  if (tokens_per_seq == 0 || features.rows() % tokens_per_seq != 0) {
    throw ShapeError("model_infer: token count not divisible by tokens_per_seq");
  }
  Tensor h = matmul(features, model.embed_w);
  add_rowvec_inplace(h, model.embed_b);
  for (const Block& blk : model.blocks) {
    Tensor ln1 = layer_norm(h, blk.ln1_g, blk.ln1_b);
    Tensor pooled = seq_mean(ln1, tokens_per_seq);
    Tensor mixed = matmul(pooled, blk.mixer_w);
    add_rowvec_inplace(mixed, blk.mixer_b);
    const std::size_t m = h.cols();
    for (std::size_t i = 0; i < h.rows(); ++i) {
      const std::size_t s = i / tokens_per_seq;
      for (std::size_t j = 0; j < m; ++j) h.at(i, j) += mixed.at(s, j);
    }
    Tensor ln2 = layer_norm(h, blk.ln2_g, blk.ln2_b);
    Tensor f = blk.is_moe() ? moe_infer(ln2, blk.moe())
                            : ffn_batched(ln2, std::get<Expert>(blk.ffn));
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += f[i];
  }
  Tensor pooled = seq_mean(h, tokens_per_seq);
  Tensor logits = matmul(pooled, model.head_w);
  add_rowvec_inplace(logits, model.head_b);
  return logits;
}

}  // namespace moep
