// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "moep/model.hpp"

namespace moep {

struct AdamConfig {
  double max_lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-6;
  double weight_decay = 0.01;
  std::size_t warmup_steps = 100;
  std::size_t total_steps = 800;  // linear decay hits 0 here

  void validate() const;
  /// Linear warmup then linear decay: lr(0) = max_lr/warmup, lr(N) = 0.
  double lr_at(std::size_t step) const;
};

struct OptimizerState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<Tensor> m, v;  // aligned with for_each_param order

  static OptimizerState make(Model& model, AdamConfig config);
  double lr_now() const { return config.lr_at(step); }
};

/// Decoupled-weight-decay Adam update. `grads` aligns with for_each_param
/// order. Parameters for which `frozen` returns true are skipped entirely,
/// moments included.
void adam_step(Model& model, const std::vector<Tensor>& grads, OptimizerState& opt,
               const std::function<bool(const ParamInfo&)>& frozen = {});

}  // namespace moep
