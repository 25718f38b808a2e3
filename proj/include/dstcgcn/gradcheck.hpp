#pragma once

#include <functional>
#include <span>

#include "dstcgcn/tensor.hpp"

namespace dstcgcn {

// Compares reverse-mode gradients against central finite differences.
// Returns max over coordinates of |analytic - fd| / max(1, |analytic|).
// Throws NumericError if f evaluates to NaN.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double step = 1e-6);

// Same check over a set of leaf parameters that `f` reads directly.
// Parameters are perturbed in place and restored.
double finite_diff_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                         double step = 1e-6);

}  // namespace dstcgcn
