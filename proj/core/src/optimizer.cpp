// SPDX-License-Identifier: Apache-2.0
#include "moep/optimizer.hpp"

#include <cmath>

#include "moep/errors.hpp"

namespace moep {

void AdamConfig::validate() const {
  if (max_lr < 0.0 || eps <= 0.0 || weight_decay < 0.0) throw ConfigError("adam: bad hyperparameter");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("adam: betas must be in [0,1)");
  if (total_steps < 1 || warmup_steps >= total_steps) throw ConfigError("adam: warmup must be < total steps");
}

double AdamConfig::lr_at(std::size_t step) const {
  if (warmup_steps > 0 && step < warmup_steps) {
    return max_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const double remaining = static_cast<double>(total_steps - std::min(step, total_steps));
  return max_lr * remaining / static_cast<double>(total_steps - warmup_steps);
}

OptimizerState OptimizerState::make(Model& model, AdamConfig config) {
  config.validate();
  OptimizerState s;
  s.config = config;
  for_each_param(model, [&](const ParamInfo& p) {
    s.m.push_back(Tensor::zeros(p.tensor->shape()));
    s.v.push_back(Tensor::zeros(p.tensor->shape()));
  });
  return s;
}

void adam_step(Model& model, const std::vector<Tensor>& grads, OptimizerState& opt,
               const std::function<bool(const ParamInfo&)>& frozen) {
  const AdamConfig& c = opt.config;
  const double lr = opt.lr_now();
  const double t = static_cast<double>(opt.step + 1);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  std::size_t idx = 0;
  for_each_param(model, [&](const ParamInfo& p) {
    const std::size_t i = idx++;
    if (frozen && frozen(p)) return;
    Tensor& param = *p.tensor;
    const Tensor& g = grads[i];
    if (!g.same_shape(param)) throw ShapeError("adam_step: gradient shape mismatch at " + p.name);
    Tensor& m = opt.m[i];
    Tensor& v = opt.v[i];
    for (std::size_t j = 0; j < param.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      param[j] -= lr * (mhat / (std::sqrt(vhat) + c.eps) + c.weight_decay * param[j]);
    }
  });
  opt.step += 1;
}

}  // namespace moep
