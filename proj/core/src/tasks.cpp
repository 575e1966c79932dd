// SPDX-License-Identifier: Apache-2.0
#include "moep/tasks.hpp"

#include <cmath>

#include "moep/errors.hpp"
#include "moep/infer.hpp"
#include "moep/tape.hpp"

namespace moep {

void TaskSpec::validate() const {
  if (num_subtasks < 1 || feature_dim < 1 || tokens_per_sequence < 1 || classes_per_subtask < 2) {
    throw ConfigError("task spec: extents must be >= 1 (classes >= 2)");
  }
  if (noise_scale <= 0.0) throw ConfigError("task spec: noise_scale must be > 0");
  if (cluster_centers.rank() != 2 || cluster_centers.rows() != num_subtasks ||
      cluster_centers.cols() != feature_dim) {
    throw ConfigError("task spec: cluster_centers must be [K, feature_dim]");
  }
  // Separability: pairwise center distance > 4 * noise_scale.
  for (std::size_t a = 0; a < num_subtasks; ++a) {
    for (std::size_t b = a + 1; b < num_subtasks; ++b) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < feature_dim; ++j) {
        const double d = cluster_centers.at(a, j) - cluster_centers.at(b, j);
        d2 += d * d;
      }
      if (std::sqrt(d2) <= 4.0 * noise_scale) {
        throw ConfigError("task spec: cluster centers too close for noise_scale");
      }
    }
  }
}

void TaskSpec::build_default_centers() {
  if (num_subtasks > feature_dim) {
    throw ConfigError("default task spec needs K <= feature_dim");
  }
  constexpr double kSpread = 4.0;
  cluster_centers = Tensor({num_subtasks, feature_dim});
  for (std::size_t k = 0; k < num_subtasks; ++k) cluster_centers.at(k, k) = kSpread;
  validate();
}

TaskSpec TaskSpec::make_default(std::uint64_t seed) {
  TaskSpec spec;
  spec.seed = seed;
  spec.build_default_centers();
  return spec;
}

Tensor TaskSpec::label_rule(std::size_t subtask, std::size_t cls) const {
  Rng rng(mix_seed(seed, 0x4c41424cULL, subtask * classes_per_subtask + cls));
  Tensor v({feature_dim});
  for (std::size_t j = 0; j < feature_dim; ++j) v[j] = rng.gaussian();
  return v;
}

namespace {

Batch gen_batch(const TaskSpec& spec, std::size_t batch_size, Rng& rng, int fixed_subtask) {
  spec.validate();
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  const std::size_t t = spec.tokens_per_sequence;
  const std::size_t d = spec.feature_dim;

  // Label rules are cheap to rebuild but do it once per batch.
  std::vector<Tensor> rules;
  rules.reserve(spec.num_subtasks * spec.classes_per_subtask);
  for (std::size_t k = 0; k < spec.num_subtasks; ++k)
    for (std::size_t c = 0; c < spec.classes_per_subtask; ++c)
      rules.push_back(spec.label_rule(k, c));

  Batch batch;
  batch.tokens_per_seq = t;
  batch.features = Tensor({batch_size * t, d});
  batch.labels.resize(batch_size);
  batch.subtask_ids.resize(batch_size);
  std::vector<double> noise_mean(d);
  for (std::size_t s = 0; s < batch_size; ++s) {
    const std::size_t k = fixed_subtask >= 0 ? static_cast<std::size_t>(fixed_subtask)
                                             : rng.index(spec.num_subtasks);
    batch.subtask_ids[s] = static_cast<int>(k);
    std::fill(noise_mean.begin(), noise_mean.end(), 0.0);
    for (std::size_t tok = 0; tok < t; ++tok) {
      for (std::size_t j = 0; j < d; ++j) {
        const double noise = spec.noise_scale * rng.gaussian();
        batch.features.at(s * t + tok, j) = spec.cluster_centers.at(k, j) + noise;
        noise_mean[j] += noise / static_cast<double>(t);
      }
    }
    // Label = argmax over the subtask's class rules applied to the mean noise.
    std::size_t best = 0;
    double best_v = 0.0;
    for (std::size_t c = 0; c < spec.classes_per_subtask; ++c) {
      const Tensor& w = rules[k * spec.classes_per_subtask + c];
      double v = 0.0;
      for (std::size_t j = 0; j < d; ++j) v += w[j] * noise_mean[j];
      if (c == 0 || v > best_v) {
        best = c;
        best_v = v;
      }
    }
    batch.labels[s] = static_cast<int>(best);
  }
  return batch;
}

}  // namespace

Batch gen_pretrain_batch(const TaskSpec& spec, std::size_t batch_size, Rng& rng) {
  return gen_batch(spec, batch_size, rng, -1);
}

Batch gen_finetune_batch(const TaskSpec& spec, std::size_t subtask, std::size_t batch_size,
                         Rng& rng) {
  if (subtask >= spec.num_subtasks) {
    throw ConfigError("finetune subtask " + std::to_string(subtask) + " out of range");
  }
  return gen_batch(spec, batch_size, rng, static_cast<int>(subtask));
}

EvalResult evaluate(const Model& model, const Batch& batch) {
  const Tensor logits = model_infer(model, batch.features, batch.tokens_per_seq);
  const std::size_t n = batch.num_sequences();
  const std::size_t c = logits.cols();
  EvalResult r;
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits.at(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(logits.at(i, j) - mx);
    const std::size_t tgt = static_cast<std::size_t>(batch.labels[i]);
    loss -= logits.at(i, tgt) - mx - std::log(denom);
    if (static_cast<std::size_t>(argmax_vec({logits.data() + i * c, c})) == tgt) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  r.mean_loss = loss / static_cast<double>(n);
  return r;
}

}  // namespace moep
