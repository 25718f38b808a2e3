#include "dstcgcn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace dstcgcn {

namespace {

double evaluate(const std::function<Tensor()>& f) {
  NoGradGuard no_grad;
  double v;
  try {
    v = f().item();
  } catch (const NumericError& e) {
    throw NumericError(std::string("finite_diff_check: objective is not finite: ") + e.what());
  }
  if (!std::isfinite(v)) throw NumericError("finite_diff_check: objective is not finite");
  return v;
}

}  // namespace

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double step) {
  Tensor leaf(x.shape(), x.data(), true);
  std::vector<Tensor> params{leaf};
  return finite_diff_check([&] { return f(params[0]); }, params, step);
}

double finite_diff_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                         double step) {
  for (Tensor& p : params) {
    if (!p.is_leaf() || !p.requires_grad()) {
      throw ContractError("finite_diff_check: parameters must be leaves requiring grad");
    }
    p.zero_grad();
  }
  const Tensor root = f();
  if (!std::isfinite(root.item())) throw NumericError("finite_diff_check: objective is not finite");
  backward(root);

  double worst = 0.0;
  for (Tensor& p : params) {
    const Vector analytic = p.grad();
    Vector& values = p.mutable_data();
    for (Index i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + step;
      const double up = evaluate(f);
      values[i] = original - step;
      const double down = evaluate(f);
      values[i] = original;
      const double fd = (up - down) / (2.0 * step);
      const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace dstcgcn
