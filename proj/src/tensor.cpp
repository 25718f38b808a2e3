#include "dstcgcn/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace dstcgcn {

namespace detail {

struct Node {
  Shape shape;
  Vector value;
  Vector grad;
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
  std::uint64_t seq = 0;
  std::string_view name = "leaf";
};

namespace {
std::atomic<std::uint64_t> next_sequence{1};
thread_local bool recording = true;
}  // namespace

}  // namespace detail

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

void validate_shape(const Shape& shape) {
  for (Index d : shape) {
    if (d <= 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
  }
}

std::shared_ptr<detail::Node> make_leaf(Shape shape, Vector data, bool requires_grad) {
  validate_shape(shape);
  if (numel(shape) != data.size()) {
    throw DimensionError("shape " + to_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  if (!data.allFinite()) throw NumericError("tensor data contains NaN or Inf");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad = Vector::Zero(node->value.size());
  node->seq = detail::next_sequence.fetch_add(1);
  return node;
}

}  // namespace

Tensor::Tensor(Shape shape, Vector data, bool requires_grad)
    : node_(make_leaf(std::move(shape), std::move(data), requires_grad)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const Index n = numel(shape);
  return Tensor(std::move(shape), Vector::Zero(n), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const Index n = numel(shape);
  return Tensor(std::move(shape), Vector::Constant(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, Vector::Constant(1, value), requires_grad);
}

Tensor Tensor::vector(std::initializer_list<double> values, bool requires_grad) {
  Vector v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v[i++] = x;
  const Index n = v.size();
  return Tensor(Shape{n}, std::move(v), requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  const Index m = static_cast<Index>(rows.size());
  const Index n = m ? static_cast<Index>(rows.begin()->size()) : 0;
  Vector v(m * n);
  Index i = 0;
  for (const auto& row : rows) {
    if (static_cast<Index>(row.size()) != n) throw DimensionError("ragged matrix literal");
    for (double x : row) v[i++] = x;
  }
  return Tensor(Shape{m, n}, std::move(v), requires_grad);
}

Tensor Tensor::identity(Index n) {
  RowMatrix eye = RowMatrix::Identity(n, n);
  return Tensor(Shape{n, n}, Eigen::Map<const Vector>(eye.data(), n * n));
}

detail::Node& Tensor::node() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

Index Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + to_string(s));
  }
  return s[axis];
}

Index Tensor::size() const { return node().value.size(); }

const Vector& Tensor::data() const { return node().value; }

Vector& Tensor::mutable_data() {
  if (!node().leaf) throw ContractError("only leaf tensors may be modified in place");
  return node().value;
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return data()[0];
}

double Tensor::at(std::initializer_list<Index> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) {
    throw DimensionError("index rank does not match shape " + to_string(s));
  }
  Index flat = 0;
  std::size_t axis = 0;
  for (Index i : index) {
    if (i < 0 || i >= s[axis]) throw DimensionError("index out of range for " + to_string(s));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return data()[flat];
}

Eigen::Map<const RowMatrix> Tensor::as_matrix() const {
  if (rank() != 2) throw DimensionError("as_matrix() needs rank 2, got " + to_string(shape()));
  return Eigen::Map<const RowMatrix>(data().data(), shape()[0], shape()[1]);
}

bool Tensor::requires_grad() const { return node().requires_grad; }

bool Tensor::is_leaf() const { return node().leaf; }

const Vector& Tensor::grad() const {
  detail::Node& n = node();
  if (n.grad.size() != n.value.size()) n.grad = Vector::Zero(n.value.size());
  return n.grad;
}

void Tensor::zero_grad() {
  detail::Node& n = node();
  n.grad = Vector::Zero(n.value.size());
}

Tensor Tensor::detach() const { return Tensor(shape(), data(), false); }

std::uint64_t Tensor::sequence() const { return node().seq; }

std::string_view Tensor::op_name() const { return node().name; }

Tensor record_op(std::string_view name, Shape shape, Vector value, std::vector<Tensor> inputs,
                 BackwardFn backward) {
  validate_shape(shape);
  if (numel(shape) != value.size()) {
    throw DimensionError(std::string(name) + ": output shape " + to_string(shape) +
                         " does not match " + std::to_string(value.size()) + " values");
  }
  if (!value.allFinite()) {
    throw NumericError(std::string(name) + " produced a non-finite value");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->leaf = false;
  node->name = name;
  node->seq = detail::next_sequence.fetch_add(1);
  if (detail::recording) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->backward = std::move(backward);
      node->inputs.reserve(inputs.size());
      for (auto& t : inputs) node->inputs.push_back(std::move(t.node_));
    }
  }
  return Tensor(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(detail::recording) { detail::recording = false; }

NoGradGuard::~NoGradGuard() { detail::recording = previous_; }

bool grad_enabled() { return detail::recording; }

Tape::Tape(const Tensor& root) : root_(root.node_) {
  if (!root_) throw ContractError("backward on an undefined tensor");
  if (root_->value.size() != 1) {
    throw ContractError("backward needs a scalar root, got shape " + to_string(root_->shape));
  }
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{root_.get()};
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    if (!n->requires_grad || n->leaf || !seen.insert(n).second) continue;
    nodes_.push_back(n);
    for (const auto& in : n->inputs) stack.push_back(in.get());
  }
  std::sort(nodes_.begin(), nodes_.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });
}

std::vector<std::uint64_t> Tape::replay_order() const {
  std::vector<std::uint64_t> order;
  order.reserve(nodes_.size());
  for (const detail::Node* n : nodes_) order.push_back(n->seq);
  return order;
}

void Tape::backward() const {
  if (!root_->requires_grad) return;
  for (detail::Node* n : nodes_) n->grad = Vector::Zero(n->value.size());
  if (root_->leaf) {
    root_->grad[0] += 1.0;
    return;
  }
  root_->grad[0] = 1.0;
  std::vector<Vector*> slots;
  for (detail::Node* n : nodes_) {
    slots.clear();
    for (const auto& in : n->inputs) {
      if (!in->requires_grad) {
        slots.push_back(nullptr);
        continue;
      }
      if (in->grad.size() != in->value.size()) in->grad = Vector::Zero(in->value.size());
      slots.push_back(&in->grad);
    }
    n->backward(n->grad, slots);
  }
}

void backward(const Tensor& root) { Tape(root).backward(); }

}  // namespace dstcgcn
