// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "moep/model.hpp"
#include "moep/tasks.hpp"

namespace moep {

struct BenchVariant {
  std::string name;
  double tokens_per_sec = 0.0;
  double mean_seconds = 0.0;
  double std_seconds = 0.0;
};

struct BenchReport {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::size_t repetitions = 0;
  std::size_t warmup = 0;
  std::vector<BenchVariant> variants;

  const BenchVariant& get(const std::string& name) const;
  double ratio(const std::string& a, const std::string& b) const;  // a/b in tokens/sec
  std::string to_csv() const;
  std::string summary() const;
};

/// Single-threaded inference throughput over a pre-materialized batch.
/// Variants measured: moe-all-experts, masked-single-expert, collapsed-dense,
/// dense-pretrained. The MoE model's first-layer survivor decides the masked
/// expert when the checkpoint is not finalized.
BenchReport bench_inference(const Model& moe_model, std::size_t batch, std::size_t seq_len,
                            std::size_t repetitions = 30, std::size_t warmup = 5);

}  // namespace moep
