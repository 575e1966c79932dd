// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "moep/infer.hpp"
#include "moep/model.hpp"
#include "moep/rng.hpp"
#include "moep/tape.hpp"
#include "moep/tasks.hpp"

using namespace moep;

namespace {

Model default_model(std::size_t experts, Rng& rng) {
  ModelConfig cfg;
  cfg.num_experts = experts;
  if (experts == 1) cfg.moe_block_indices.clear();
  Model m = Model::init(cfg, rng);
  return m;
}

Tensor random_features(std::size_t rows, std::size_t dim, Rng& rng) {
  Tensor t({rows, dim});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.gaussian();
  return t;
}

void BM_InferDense(benchmark::State& state) {
  Rng rng(1);
  Model m = default_model(1, rng);
  Tensor feats = random_features(32 * 8, m.config.feature_dim, rng);
  for (auto _ : state) {
    Tensor out = model_infer(m, feats, 8);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * 32 * 8);
}

void BM_InferMoE(benchmark::State& state) {
  Rng rng(1);
  Model m = default_model(static_cast<std::size_t>(state.range(0)), rng);
  Tensor feats = random_features(32 * 8, m.config.feature_dim, rng);
  for (auto _ : state) {
    Tensor out = model_infer(m, feats, 8);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * 32 * 8);
}

void BM_TrainStepForwardBackward(benchmark::State& state) {
  Rng rng(1);
  Model m = default_model(8, rng);
  TaskSpec spec = TaskSpec::make_default(1);
  Rng data_rng(2);
  Batch batch = gen_pretrain_batch(spec, 32, data_rng);
  for (auto _ : state) {
    Tape tape;
    ModelVars vars = bind_params(tape, m);
    ForwardResult fr = model_forward(tape, vars, m, batch.features, batch.tokens_per_seq,
                                     batch.labels);
    tape.backward(fr.total_loss);
    benchmark::DoNotOptimize(tape.grad(vars.embed_w).data());
  }
}

BENCHMARK(BM_InferDense);
BENCHMARK(BM_InferMoE)->Arg(2)->Arg(4)->Arg(8);
BENCHMARK(BM_TrainStepForwardBackward);

}  // namespace

BENCHMARK_MAIN();
