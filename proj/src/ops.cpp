#include "dstcgcn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace dstcgcn {

namespace {

using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;
using Strided = Eigen::OuterStride<>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Strided>;
using MutStridedMap = Eigen::Map<RowMatrix, 0, Strided>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()) + " differ");
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         to_string(a.shape()));
  }
}

void require_min_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() < rank) {
    throw DimensionError(std::string(op) + ": expected rank >= " + std::to_string(rank) +
                         ", got " + to_string(a.shape()));
  }
}

struct AxisSplit {
  Index outer = 1;
  Index extent = 1;
  Index inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <typename Forward, typename Derivative>
Tensor unary(const char* name, const Tensor& a, Forward f, Derivative dfdx) {
  Vector y = a.data().unaryExpr(f);
  Vector yc = y;
  return record_op(name, a.shape(), std::move(y), {a},
                   [a, y = std::move(yc), dfdx](const Vector& g, std::span<Vector* const> in) {
                     const Vector& x = a.data();
                     Vector& ga = *in[0];
                     for (Index i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(x[i], y[i]);
                   });
}

// [b, k, d] <-> [k, b * d]: lines up every batch slice side by side so a
// shared operator is applied with one product.
RowMatrix side_by_side(const double* src, Index batch, Index k, Index d) {
  RowMatrix out(k, batch * d);
  for (Index b = 0; b < batch; ++b) out.middleCols(b * d, d) = ConstMap(src + b * k * d, k, d);
  return out;
}

void add_unstacked(const RowMatrix& wide, double* dst, Index batch, Index k, Index d) {
  for (Index b = 0; b < batch; ++b) MutMap(dst + b * k * d, k, d) += wide.middleCols(b * d, d);
}

Tensor shared_bmm(const Tensor& a, const Tensor& h, Index r, Index k, Index d) {
  const Index batch = h.dim(0);
  const RowMatrix wide = a.as_matrix() * side_by_side(h.data().data(), batch, k, d);
  Vector y(batch * r * d);
  for (Index b = 0; b < batch; ++b) MutMap(y.data() + b * r * d, r, d) = wide.middleCols(b * d, d);
  return record_op("bmm", Shape{batch, r, d}, std::move(y), {a, h},
                   [a, h, batch, r, k, d](const Vector& g, std::span<Vector* const> in) {
                     const RowMatrix gw = side_by_side(g.data(), batch, r, d);
                     if (in[0]) {
                       MutMap(in[0]->data(), r, k).noalias() +=
                           gw * side_by_side(h.data().data(), batch, k, d).transpose();
                     }
                     if (in[1]) {
                       const RowMatrix gh = a.as_matrix().transpose() * gw;
                       add_unstacked(gh, in[1]->data(), batch, k, d);
                     }
                   });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return record_op("add", a.shape(), a.data() + b.data(), {a, b},
                   [](const Vector& g, std::span<Vector* const> in) {
                     if (in[0]) *in[0] += g;
                     if (in[1]) *in[1] += g;
                   });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return record_op("sub", a.shape(), a.data() - b.data(), {a, b},
                   [](const Vector& g, std::span<Vector* const> in) {
                     if (in[0]) *in[0] += g;
                     if (in[1]) *in[1] -= g;
                   });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  return record_op("mul", a.shape(), a.data().cwiseProduct(b.data()), {a, b},
                   [a, b](const Vector& g, std::span<Vector* const> in) {
                     if (in[0]) *in[0] += g.cwiseProduct(b.data());
                     if (in[1]) *in[1] += g.cwiseProduct(a.data());
                   });
}

Tensor affine(const Tensor& a, double alpha, double beta) {
  Vector y = (alpha * a.data().array() + beta).matrix();
  return record_op("affine", a.shape(), std::move(y), {a},
                   [alpha](const Vector& g, std::span<Vector* const> in) { *in[0] += alpha * g; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        // Split by sign so exp never overflows.
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& a) {
  return unary(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor add_broadcast(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() > sa.size() || !std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) {
    throw DimensionError("add_broadcast: " + to_string(sb) + " is not a suffix of " +
                         to_string(sa));
  }
  const Index inner = b.size();
  const Index outer = a.size() / inner;
  Vector y = a.data();
  MutMap(y.data(), outer, inner).rowwise() += b.data().transpose();
  return record_op("add_broadcast", sa, std::move(y), {a, b},
                   [outer, inner](const Vector& g, std::span<Vector* const> in) {
                     if (in[0]) *in[0] += g;
                     if (in[1]) *in[1] += ConstMap(g.data(), outer, inner).colwise().sum().transpose();
                   });
}

Tensor sum(const Tensor& a) {
  return record_op("sum", Shape{}, Vector::Constant(1, a.data().sum()), {a},
                   [](const Vector& g, std::span<Vector* const> in) {
                     in[0]->array() += g[0];
                   });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.size());
  return record_op("mean", Shape{}, Vector::Constant(1, a.data().sum() / n), {a},
                   [n](const Vector& g, std::span<Vector* const> in) {
                     in[0]->array() += g[0] / n;
                   });
}

Tensor mean_axis(const Tensor& a, std::size_t axis) {
  require_min_rank(a, axis + 1, "mean_axis");
  const AxisSplit s = split_axis(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Vector y = Vector::Zero(s.outer * s.inner);
  const Vector& x = a.data();
  for (Index o = 0; o < s.outer; ++o) {
    for (Index k = 0; k < s.extent; ++k) {
      y.segment(o * s.inner, s.inner) += x.segment((o * s.extent + k) * s.inner, s.inner);
    }
  }
  y /= static_cast<double>(s.extent);
  return record_op("mean_axis", std::move(out_shape), std::move(y), {a},
                   [s](const Vector& g, std::span<Vector* const> in) {
                     Vector& ga = *in[0];
                     const double w = 1.0 / static_cast<double>(s.extent);
                     for (Index o = 0; o < s.outer; ++o) {
                       for (Index k = 0; k < s.extent; ++k) {
                         ga.segment((o * s.extent + k) * s.inner, s.inner) +=
                             w * g.segment(o * s.inner, s.inner);
                       }
                     }
                   });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ for " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  Vector y(m * n);
  MutMap(y.data(), m, n).noalias() = a.as_matrix() * b.as_matrix();
  return record_op("matmul", Shape{m, n}, std::move(y), {a, b},
                   [a, b, m, k, n](const Vector& g, std::span<Vector* const> in) {
                     const ConstMap G(g.data(), m, n);
                     if (in[0]) MutMap(in[0]->data(), m, k).noalias() += G * b.as_matrix().transpose();
                     if (in[1]) MutMap(in[1]->data(), k, n).noalias() += a.as_matrix().transpose() * G;
                   });
}

Tensor linear(const Tensor& x, const Tensor& weight) {
  require_min_rank(x, 1, "linear");
  require_rank(weight, 2, "linear");
  const Index k = x.shape().back();
  if (weight.dim(0) != k) {
    throw DimensionError("linear: input " + to_string(x.shape()) + " does not match weight " +
                         to_string(weight.shape()));
  }
  const Index n = weight.dim(1);
  const Index rows = x.size() / k;
  Shape out_shape = x.shape();
  out_shape.back() = n;
  Vector y(rows * n);
  MutMap(y.data(), rows, n).noalias() = ConstMap(x.data().data(), rows, k) * weight.as_matrix();
  return record_op("linear", std::move(out_shape), std::move(y), {x, weight},
                   [x, weight, rows, k, n](const Vector& g, std::span<Vector* const> in) {
                     const ConstMap G(g.data(), rows, n);
                     if (in[0]) {
                       MutMap(in[0]->data(), rows, k).noalias() += G * weight.as_matrix().transpose();
                     }
                     if (in[1]) {
                       MutMap(in[1]->data(), k, n).noalias() +=
                           ConstMap(x.data().data(), rows, k).transpose() * G;
                     }
                   });
}

Tensor bmm(const Tensor& a, const Tensor& h) {
  require_rank(h, 3, "bmm");
  if (a.rank() != 2 && a.rank() != 3) {
    throw DimensionError("bmm: operator must be rank 2 or 3, got " + to_string(a.shape()));
  }
  const bool shared = a.rank() == 2;
  const Index batch = h.dim(0), k = h.dim(1), d = h.dim(2);
  const Index r = shared ? a.dim(0) : a.dim(1);
  const Index ak = shared ? a.dim(1) : a.dim(2);
  if (ak != k || (!shared && a.dim(0) != batch)) {
    throw DimensionError("bmm: operator " + to_string(a.shape()) + " incompatible with " +
                         to_string(h.shape()));
  }
  if (shared) return shared_bmm(a, h, r, k, d);
  Vector y(batch * r * d);
  for (Index b = 0; b < batch; ++b) {
    MutMap(y.data() + b * r * d, r, d).noalias() =
        ConstMap(a.data().data() + b * r * k, r, k) * ConstMap(h.data().data() + b * k * d, k, d);
  }
  return record_op("bmm", Shape{batch, r, d}, std::move(y), {a, h},
                   [a, h, batch, r, k, d](const Vector& g, std::span<Vector* const> in) {
                     for (Index b = 0; b < batch; ++b) {
                       const ConstMap G(g.data() + b * r * d, r, d);
                       if (in[0]) {
                         MutMap(in[0]->data() + b * r * k, r, k).noalias() +=
                             G * ConstMap(h.data().data() + b * k * d, k, d).transpose();
                       }
                       if (in[1]) {
                         MutMap(in[1]->data() + b * k * d, k, d).noalias() +=
                             ConstMap(a.data().data() + b * r * k, r, k).transpose() * G;
                       }
                     }
                   });
}

Tensor node_matmul(const Tensor& h, const Tensor& w) {
  require_min_rank(h, 2, "node_matmul");
  require_rank(w, 3, "node_matmul");
  const Shape& sh = h.shape();
  const Index n = sh[sh.size() - 2], di = sh.back();
  if (w.dim(0) != n || w.dim(1) != di) {
    throw DimensionError("node_matmul: input " + to_string(sh) + " does not match weights " +
                         to_string(w.shape()));
  }
  const Index dout = w.dim(2);
  const Index lead = h.size() / (n * di);
  Shape out_shape = sh;
  out_shape.back() = dout;
  Vector y(lead * n * dout);
  for (Index j = 0; j < n; ++j) {
    ConstStridedMap hj(h.data().data() + j * di, lead, di, Strided(n * di));
    MutStridedMap yj(y.data() + j * dout, lead, dout, Strided(n * dout));
    yj.noalias() = hj * ConstMap(w.data().data() + j * di * dout, di, dout);
  }
  return record_op(
      "node_matmul", std::move(out_shape), std::move(y), {h, w},
      [h, w, lead, n, di, dout](const Vector& g, std::span<Vector* const> in) {
        for (Index j = 0; j < n; ++j) {
          ConstStridedMap gj(g.data() + j * dout, lead, dout, Strided(n * dout));
          if (in[0]) {
            MutStridedMap ghj(in[0]->data() + j * di, lead, di, Strided(n * di));
            ghj.noalias() += gj * ConstMap(w.data().data() + j * di * dout, di, dout).transpose();
          }
          if (in[1]) {
            ConstStridedMap hj(h.data().data() + j * di, lead, di, Strided(n * di));
            MutMap(in[1]->data() + j * di * dout, di, dout).noalias() += hj.transpose() * gj;
          }
        }
      });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const Index m = a.dim(0), n = a.dim(1);
  Vector y(m * n);
  MutMap(y.data(), n, m) = a.as_matrix().transpose();
  return record_op("transpose", Shape{n, m}, std::move(y), {a},
                   [m, n](const Vector& g, std::span<Vector* const> in) {
                     MutMap(in[0]->data(), m, n) += ConstMap(g.data(), n, m).transpose();
                   });
}

Tensor softmax_rows(const Tensor& a) {
  require_min_rank(a, 1, "softmax_rows");
  const Index n = a.shape().back();
  const Index rows = a.size() / n;
  Vector y(a.size());
  const ConstMap x(a.data().data(), rows, n);
  MutMap ym(y.data(), rows, n);
  for (Index r = 0; r < rows; ++r) {
    const double mx = x.row(r).maxCoeff();
    ym.row(r) = (x.row(r).array() - mx).exp().matrix();
    ym.row(r) /= ym.row(r).sum();
  }
  Vector yc = y;
  return record_op("softmax_rows", a.shape(), std::move(y), {a},
                   [y = std::move(yc), rows, n](const Vector& g, std::span<Vector* const> in) {
                     const ConstMap Y(y.data(), rows, n);
                     const ConstMap G(g.data(), rows, n);
                     MutMap GA(in[0]->data(), rows, n);
                     for (Index r = 0; r < rows; ++r) {
                       const double dot = G.row(r).dot(Y.row(r));
                       GA.row(r).array() += Y.row(r).array() * (G.row(r).array() - dot);
                     }
                   });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + to_string(a.shape()) + " as " +
                         to_string(shape));
  }
  return record_op("reshape", std::move(shape), a.data(), {a},
                   [](const Vector& g, std::span<Vector* const> in) { *in[0] += g; });
}

Tensor permute(const Tensor& a, std::span<const std::size_t> order) {
  const Shape& s = a.shape();
  if (order.size() != s.size()) throw DimensionError("permute: order rank mismatch");
  std::vector<bool> used(s.size(), false);
  for (std::size_t o : order) {
    if (o >= s.size() || used[o]) throw ContractError("permute: order is not a permutation");
    used[o] = true;
  }
  const std::size_t rank = s.size();
  std::vector<Index> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * s[i];
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = s[order[i]];

  std::vector<Index> source(static_cast<std::size_t>(a.size()));
  std::vector<Index> counter(rank, 0);
  for (std::size_t flat = 0; flat < source.size(); ++flat) {
    Index src = 0;
    for (std::size_t i = 0; i < rank; ++i) src += counter[i] * in_stride[order[i]];
    source[flat] = src;
    for (std::size_t i = rank; i-- > 0;) {
      if (++counter[i] < out_shape[i]) break;
      counter[i] = 0;
    }
  }
  Vector y(a.size());
  for (std::size_t i = 0; i < source.size(); ++i) y[static_cast<Index>(i)] = a.data()[source[i]];
  return record_op("permute", std::move(out_shape), std::move(y), {a},
                   [source = std::move(source)](const Vector& g, std::span<Vector* const> in) {
                     Vector& ga = *in[0];
                     for (std::size_t i = 0; i < source.size(); ++i) {
                       ga[source[i]] += g[static_cast<Index>(i)];
                     }
                   });
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  require_min_rank(a, 1, "concat_last");
  if (a.rank() != b.rank() ||
      !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin())) {
    throw DimensionError("concat_last: leading extents of " + to_string(a.shape()) + " and " +
                         to_string(b.shape()) + " differ");
  }
  const Index p = a.shape().back(), q = b.shape().back();
  const Index rows = a.size() / p;
  Shape out_shape = a.shape();
  out_shape.back() = p + q;
  Vector y(rows * (p + q));
  MutMap Y(y.data(), rows, p + q);
  Y.leftCols(p) = ConstMap(a.data().data(), rows, p);
  Y.rightCols(q) = ConstMap(b.data().data(), rows, q);
  return record_op("concat_last", std::move(out_shape), std::move(y), {a, b},
                   [rows, p, q](const Vector& g, std::span<Vector* const> in) {
                     const ConstMap G(g.data(), rows, p + q);
                     if (in[0]) MutMap(in[0]->data(), rows, p) += G.leftCols(p);
                     if (in[1]) MutMap(in[1]->data(), rows, q) += G.rightCols(q);
                   });
}

Tensor take(const Tensor& a, std::size_t axis, Index index) {
  require_min_rank(a, axis + 1, "take");
  const AxisSplit s = split_axis(a.shape(), axis);
  if (index < 0 || index >= s.extent) {
    throw ContractError("take: index " + std::to_string(index) + " out of range for axis " +
                        std::to_string(axis) + " of " + to_string(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Vector y(s.outer * s.inner);
  for (Index o = 0; o < s.outer; ++o) {
    y.segment(o * s.inner, s.inner) = a.data().segment((o * s.extent + index) * s.inner, s.inner);
  }
  return record_op("take", std::move(out_shape), std::move(y), {a},
                   [s, index](const Vector& g, std::span<Vector* const> in) {
                     for (Index o = 0; o < s.outer; ++o) {
                       in[0]->segment((o * s.extent + index) * s.inner, s.inner) +=
                           g.segment(o * s.inner, s.inner);
                     }
                   });
}

Tensor repeat_axis(const Tensor& a, std::size_t axis, Index count) {
  if (axis > a.rank()) throw DimensionError("repeat_axis: axis out of range");
  if (count < 1) throw ContractError("repeat_axis: count must be positive");
  Index outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.shape()[i];
  const Index inner = a.size() / outer;
  Shape out_shape = a.shape();
  out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), count);
  Vector y(outer * count * inner);
  for (Index o = 0; o < outer; ++o) {
    for (Index c = 0; c < count; ++c) {
      y.segment((o * count + c) * inner, inner) = a.data().segment(o * inner, inner);
    }
  }
  return record_op("repeat_axis", std::move(out_shape), std::move(y), {a},
                   [outer, count, inner](const Vector& g, std::span<Vector* const> in) {
                     for (Index o = 0; o < outer; ++o) {
                       for (Index c = 0; c < count; ++c) {
                         in[0]->segment(o * inner, inner) += g.segment((o * count + c) * inner, inner);
                       }
                     }
                   });
}

Tensor diagonal(const Tensor& a) {
  require_min_rank(a, 2, "diagonal");
  const Index n = a.shape().back();
  if (a.shape()[a.rank() - 2] != n) throw DimensionError("diagonal: trailing block not square");
  const Index lead = a.size() / (n * n);
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  Vector y(lead * n);
  for (Index l = 0; l < lead; ++l) {
    for (Index i = 0; i < n; ++i) y[l * n + i] = a.data()[l * n * n + i * n + i];
  }
  return record_op("diagonal", std::move(out_shape), std::move(y), {a},
                   [lead, n](const Vector& g, std::span<Vector* const> in) {
                     for (Index l = 0; l < lead; ++l) {
                       for (Index i = 0; i < n; ++i) (*in[0])[l * n * n + i * n + i] += g[l * n + i];
                     }
                   });
}

Tensor diag_embed(const Tensor& a) {
  require_min_rank(a, 1, "diag_embed");
  const Index n = a.shape().back();
  const Index lead = a.size() / n;
  Shape out_shape = a.shape();
  out_shape.push_back(n);
  Vector y = Vector::Zero(lead * n * n);
  for (Index l = 0; l < lead; ++l) {
    for (Index i = 0; i < n; ++i) y[l * n * n + i * n + i] = a.data()[l * n + i];
  }
  return record_op("diag_embed", std::move(out_shape), std::move(y), {a},
                   [lead, n](const Vector& g, std::span<Vector* const> in) {
                     for (Index l = 0; l < lead; ++l) {
                       for (Index i = 0; i < n; ++i) (*in[0])[l * n + i] += g[l * n * n + i * n + i];
                     }
                   });
}

Tensor gather_last(const Tensor& a, std::span<const Index> columns, Index k) {
  require_min_rank(a, 1, "gather_last");
  const Index n = a.shape().back();
  const Index rows = a.size() / n;
  if (k < 1 || static_cast<Index>(columns.size()) != rows * k) {
    throw DimensionError("gather_last: expected " + std::to_string(rows * k) + " indices, got " +
                         std::to_string(columns.size()));
  }
  std::vector<Index> src(columns.size());
  for (Index r = 0; r < rows; ++r) {
    for (Index j = 0; j < k; ++j) {
      const Index c = columns[static_cast<std::size_t>(r * k + j)];
      if (c < 0 || c >= n) {
        throw ContractError("gather_last: column " + std::to_string(c) + " out of range [0, " +
                            std::to_string(n) + ")");
      }
      src[static_cast<std::size_t>(r * k + j)] = r * n + c;
    }
  }
  Shape out_shape = a.shape();
  out_shape.back() = k;
  Vector y(rows * k);
  for (std::size_t i = 0; i < src.size(); ++i) y[static_cast<Index>(i)] = a.data()[src[i]];
  return record_op("gather_last", std::move(out_shape), std::move(y), {a},
                   [src = std::move(src)](const Vector& g, std::span<Vector* const> in) {
                     for (std::size_t i = 0; i < src.size(); ++i) {
                       (*in[0])[src[i]] += g[static_cast<Index>(i)];
                     }
                   });
}

}  // namespace dstcgcn
