// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moep/model.hpp"
#include "moep/tensor.hpp"

namespace moep {

/// Tape-free forward for evaluation and benchmarking. Dense and
/// single-survivor MoE blocks run batched; a multi-expert MoE layer
/// dispatches token by token, the way top-1 serving does.
/// Returns task logits [sequences, num_classes].
Tensor model_infer(const Model& model, const Tensor& features, std::size_t tokens_per_seq);

}  // namespace moep
