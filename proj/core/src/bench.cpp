// SPDX-License-Identifier: Apache-2.0
#include "moep/bench.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "moep/errors.hpp"
#include "moep/infer.hpp"
#include "moep/rng.hpp"

namespace moep {

const BenchVariant& BenchReport::get(const std::string& name) const {
  for (const BenchVariant& v : variants)
    if (v.name == name) return v;
  throw ConfigError("bench report has no variant " + name);
}

double BenchReport::ratio(const std::string& a, const std::string& b) const {
  return get(a).tokens_per_sec / get(b).tokens_per_sec;
}

std::string BenchReport::to_csv() const {
  std::ostringstream os;
  os << "variant,tokens_per_sec,mean_seconds,std_seconds,batch,seq_len,repetitions,warmup\n";
  for (const BenchVariant& v : variants) {
    os << v.name << "," << v.tokens_per_sec << "," << v.mean_seconds << "," << v.std_seconds << ","
       << batch << "," << seq_len << "," << repetitions << "," << warmup << "\n";
  }
  return os.str();
}

std::string BenchReport::summary() const {
  std::ostringstream os;
  os << "inference bench: batch=" << batch << " seq=" << seq_len << " reps=" << repetitions
     << " warmup=" << warmup << "\n";
  for (const BenchVariant& v : variants) {
    os << "  " << v.name << ": " << v.tokens_per_sec << " tokens/sec (mean " << v.mean_seconds
       << "s, std " << v.std_seconds << "s)\n";
  }
  os << "  ratio collapsed/moe   = " << ratio("collapsed-dense", "moe-all-experts") << "\n";
  os << "  ratio collapsed/masked= " << ratio("collapsed-dense", "masked-single-expert") << "\n";
  os << "  ratio collapsed/dense = " << ratio("collapsed-dense", "dense-pretrained") << "\n";
  return os.str();
}

namespace {

BenchVariant time_variant(const std::string& name, const Model& model, const Tensor& features,
                          std::size_t seq_len, std::size_t reps, std::size_t warmup) {
  using clock = std::chrono::steady_clock;
  volatile double sink = 0.0;  // keep the forward pass observable
  for (std::size_t i = 0; i < warmup; ++i) {
    Tensor out = model_infer(model, features, seq_len);
    sink = sink + out[0];
  }
  std::vector<double> times(reps);
  double total = 0.0;
  for (std::size_t i = 0; i < reps; ++i) {
    const auto t0 = clock::now();
    Tensor out = model_infer(model, features, seq_len);
    const auto t1 = clock::now();
    sink = sink + out[0];
    times[i] = std::chrono::duration<double>(t1 - t0).count();
    total += times[i];
  }
  BenchVariant v;
  v.name = name;
  v.mean_seconds = total / static_cast<double>(reps);
  double var = 0.0;
  for (double t : times) var += (t - v.mean_seconds) * (t - v.mean_seconds);
  v.std_seconds = std::sqrt(var / static_cast<double>(reps));
  const double tokens = static_cast<double>(features.rows()) * static_cast<double>(reps);
  v.tokens_per_sec = tokens / total;
  return v;
}

}  // namespace

BenchReport bench_inference(const Model& moe_model, std::size_t batch, std::size_t seq_len,
                            std::size_t repetitions, std::size_t warmup) {
  if (repetitions < 30 || warmup < 5) {
    throw ConfigError("bench needs >= 30 repetitions after >= 5 warmup iterations");
  }
  const ModelConfig& c = moe_model.config;

  Model all = moe_model;
  for (Block& blk : all.blocks)
    if (blk.is_moe()) blk.moe().active_mask.assign(c.num_experts, true);

  Model masked = moe_model;
  for (Block& blk : masked.blocks) {
    if (!blk.is_moe()) continue;
    MoELayer& layer = blk.moe();
    const std::size_t keep = layer.active_ids().front();
    layer.active_mask.assign(c.num_experts, false);
    layer.active_mask[keep] = true;
  }

  const Model collapsed = collapse_model(masked);

  ModelConfig dense_cfg = c;
  dense_cfg.moe_block_indices.clear();
  dense_cfg.num_experts = 1;
  Rng dense_rng(17);
  const Model dense = Model::init(dense_cfg, dense_rng);

  // Batches are pre-materialized; timing covers the forward pass only.
  Rng rng(42);
  Tensor features({batch * seq_len, c.feature_dim});
  for (std::size_t i = 0; i < features.size(); ++i) features[i] = rng.gaussian();

  BenchReport report;
  report.batch = batch;
  report.seq_len = seq_len;
  report.repetitions = repetitions;
  report.warmup = warmup;
  report.variants.push_back(
      time_variant("moe-all-experts", all, features, seq_len, repetitions, warmup));
  report.variants.push_back(
      time_variant("masked-single-expert", masked, features, seq_len, repetitions, warmup));
  report.variants.push_back(
      time_variant("collapsed-dense", collapsed, features, seq_len, repetitions, warmup));
  report.variants.push_back(
      time_variant("dense-pretrained", dense, features, seq_len, repetitions, warmup));
  return report;
}

}  // namespace moep
