#pragma once

#include <span>

#include "dstcgcn/tensor.hpp"

// Differentiable tensor operations. Every function records its backward pass
// on the output when an input requires a gradient.
namespace dstcgcn {

// Elementwise, equal shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// alpha * a + beta
Tensor affine(const Tensor& a, double alpha, double beta = 0.0);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
// Subgradient 0 at the kink.
Tensor abs(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return affine(a, s); }

// b's shape must equal a trailing suffix of a's shape; b is tiled over the
// leading axes.
Tensor add_broadcast(const Tensor& a, const Tensor& b);

// Reductions to a scalar.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Mean over one axis; the axis is removed.
Tensor mean_axis(const Tensor& a, std::size_t axis);

// [m x k] * [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [..., k] * [k x n] -> [..., n]
Tensor linear(const Tensor& x, const Tensor& weight);
// a: [r x k] shared or [b x r x k] per batch; h: [b x k x d] -> [b x r x d]
Tensor bmm(const Tensor& a, const Tensor& h);
// Per-node weights: h [..., n, di], w [n, di, do] -> [..., n, do]
Tensor node_matmul(const Tensor& h, const Tensor& w);
Tensor transpose(const Tensor& a);

// Softmax over the last axis with max subtraction.
Tensor softmax_rows(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, std::span<const std::size_t> order);
// Concatenation along the last axis; leading extents must agree.
Tensor concat_last(const Tensor& a, const Tensor& b);
// Slice at `index` along `axis`; the axis is removed.
Tensor take(const Tensor& a, std::size_t axis, Index index);
// Inserts a new axis of extent `count` at `axis`, copying the data.
Tensor repeat_axis(const Tensor& a, std::size_t axis, Index count);
// [..., n, n] -> [..., n]
Tensor diagonal(const Tensor& a);
// [..., n] -> [..., n, n]
Tensor diag_embed(const Tensor& a);
// For each row of the last axis of `a` (length n), picks `k` columns.
// `columns` holds rows(a) * k indices. Output [..., k].
Tensor gather_last(const Tensor& a, std::span<const Index> columns, Index k);

}  // namespace dstcgcn
