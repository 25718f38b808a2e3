#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "dstcgcn/errors.hpp"

namespace dstcgcn {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Number of elements described by a shape. The empty shape is a scalar.
Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {
struct Node;
}

// Dense row-major array of doubles with optional gradient tracking.
//
// A Tensor is a cheap handle; copies share the same storage. Values are
// treated as immutable once an operation has consumed them. The one exception
// is leaf parameters, which an optimizer updates through mutable_data().
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Vector data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::initializer_list<double> values, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);
  static Tensor identity(Index n);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  Index dim(std::size_t axis) const;
  Index size() const;

  const Vector& data() const;
  // Leaf tensors only.
  Vector& mutable_data();
  double item() const;
  double at(std::initializer_list<Index> index) const;
  // 2-D view of a rank-2 tensor.
  Eigen::Map<const RowMatrix> as_matrix() const;

  bool requires_grad() const;
  bool is_leaf() const;
  // Accumulated gradient; a zero vector when nothing has been propagated.
  const Vector& grad() const;
  void zero_grad();

  // Same values, no history, no gradient tracking.
  Tensor detach() const;

  // Position of the producing operation in execution order.
  std::uint64_t sequence() const;
  std::string_view op_name() const;

 private:
  friend class Tape;
  friend Tensor record_op(std::string_view, Shape, Vector, std::vector<Tensor>,
                          std::function<void(const Vector&, std::span<Vector* const>)>);

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  detail::Node& node() const;

  std::shared_ptr<detail::Node> node_;
};

// Receives the gradient of the op's output and one slot per input; a slot is
// null when that input does not need a gradient. Implementations accumulate.
using BackwardFn = std::function<void(const Vector& out_grad, std::span<Vector* const> in_grads)>;

// Creates the output of a differentiable operation. Rejects non-finite values.
// History is kept only if some input requires a gradient and recording is on.
Tensor record_op(std::string_view name, Shape shape, Vector value, std::vector<Tensor> inputs,
                 BackwardFn backward);

// Disables history recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Operations reachable from a scalar root, in exact reverse execution order.
class Tape {
 public:
  explicit Tape(const Tensor& root);

  std::size_t size() const { return nodes_.size(); }
  // Execution sequence numbers in replay order (strictly decreasing).
  std::vector<std::uint64_t> replay_order() const;
  // Seeds d(root)/d(root) = 1 and propagates to every reachable input.
  // Interior gradients are recomputed from zero on each call; leaf
  // gradients accumulate.
  void backward() const;

 private:
  std::shared_ptr<detail::Node> root_;
  std::vector<detail::Node*> nodes_;
};

// Reverse-mode differentiation of a scalar. Throws ContractError otherwise.
void backward(const Tensor& root);

}  // namespace dstcgcn
