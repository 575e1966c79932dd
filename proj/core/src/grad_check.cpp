// SPDX-License-Identifier: Apache-2.0
#include "moep/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "moep/errors.hpp"

namespace moep {

double grad_check(const std::vector<Tensor*>& params, const GradFn& f, double eps,
                  std::size_t samples_per_param, Rng& rng) {
  if (eps <= 0.0) throw NumericError("grad_check eps must be positive");
  std::vector<Tensor> grads;
  f(&grads);
  if (grads.size() != params.size()) throw NumericError("grad_check gradient count mismatch");

  double max_rel = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& param = *params[p];
    const std::size_t n = param.size();
    if (n == 0) continue;
    // Sample distinct coordinates; small params are checked exhaustively.
    std::vector<std::size_t> coords;
    if (n <= samples_per_param) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      for (std::size_t s = 0; s < samples_per_param; ++s) coords.push_back(rng.index(n));
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }
    for (std::size_t c : coords) {
      const double orig = param[c];
      param[c] = orig + eps;
      const double fp = f(nullptr);
      param[c] = orig - eps;
      const double fm = f(nullptr);
      param[c] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError("grad_check: non-finite value at perturbed point");
      }
      const double numeric = (fp - fm) / (2.0 * eps);
      const double analytic = grads[p][c];
      const double rel = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace moep
