// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "moep/rng.hpp"
#include "moep/tensor.hpp"

namespace moep {

/// Scalar function under test. Called with nullptr for a plain forward
/// evaluation; when `grads` is non-null it must be resized/filled with the
/// analytic gradient of the returned value w.r.t. each parameter, in the
/// same order as `params`.
using GradFn = std::function<double(std::vector<Tensor>* grads)>;

/// Central-difference check. Samples up to `samples_per_param` coordinates
/// of each parameter and returns the max relative error
/// |analytic - numeric| / max(1, |numeric|).
double grad_check(const std::vector<Tensor*>& params, const GradFn& f, double eps,
                  std::size_t samples_per_param, Rng& rng);

}  // namespace moep
