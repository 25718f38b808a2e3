#pragma once

#include <random>

#include "dstcgcn/tensor.hpp"

namespace testutil {

inline dstcgcn::Tensor random_tensor(std::mt19937_64& rng, dstcgcn::Shape shape,
                                     double lo = -1.0, double hi = 1.0,
                                     bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  dstcgcn::Vector v(dstcgcn::numel(shape));
  for (auto& x : v) x = dist(rng);
  return dstcgcn::Tensor(std::move(shape), std::move(v), requires_grad);
}

inline double max_abs_diff(const dstcgcn::Vector& a, const dstcgcn::Vector& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace testutil
