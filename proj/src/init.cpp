#include "dstcgcn/init.hpp"

namespace dstcgcn {

Tensor uniform_param(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Vector v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

}  // namespace dstcgcn
