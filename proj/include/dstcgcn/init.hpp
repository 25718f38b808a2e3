#pragma once

#include <cmath>
#include <random>

#include "dstcgcn/tensor.hpp"

namespace dstcgcn {

// Trainable leaf with entries drawn i.i.d. from U[-bound, bound].
Tensor uniform_param(Shape shape, double bound, std::mt19937_64& rng);

inline double xavier_bound(Index fan_in, Index fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace dstcgcn
