#include "dstcgcn/graphs.hpp"

#include <cmath>
#include <string>

#include "dstcgcn/init.hpp"
#include "dstcgcn/ops.hpp"

namespace dstcgcn {

namespace {

using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void require_square(const Tensor& a, const char* op) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) {
    throw DimensionError(std::string(op) + ": expected a square graph, got " + to_string(a.shape()));
  }
}

}  // namespace

Embeddings make_embeddings(Index nodes, Index steps, Index dim, std::mt19937_64& rng) {
  if (dim < 1) throw ContractError("embeddings: dimension must be at least 1");
  const double bound = 0.5 / std::sqrt(static_cast<double>(dim));
  Embeddings e;
  e.node = uniform_param({nodes, dim}, bound, rng);
  e.time = uniform_param({steps, dim}, bound, rng);
  return e;
}

Tensor embed_time_step(const Embeddings& emb, Index t) {
  if (t < 0 || t >= emb.steps()) {
    throw ContractError("embed_time_step: step " + std::to_string(t) + " out of range [0, " +
                        std::to_string(emb.steps()) + ")");
  }
  return add_broadcast(emb.node, take(emb.time, 0, t));
}

Tensor spatial_graph(const Tensor& e) {
  if (e.rank() != 2) throw DimensionError("spatial_graph: expected [N, d_e], got " + to_string(e.shape()));
  return softmax_rows(matmul(e, transpose(e)));
}

Tensor temporal_connection_diagonals(const Tensor& a_s, const Tensor& weights,
                                     std::span<const Index> selected) {
  require_square(a_s, "temporal_connection_diagonals");
  if (weights.rank() < 1) throw DimensionError("temporal_connection_diagonals: scalar weights");
  const Index tau = weights.shape().back();
  const Index rows = weights.size() / tau;
  if (static_cast<Index>(selected.size()) != rows * tau) {
    throw ContractError("temporal_connection_diagonals: " + std::to_string(selected.size()) +
                        " selected indices for weights of shape " + to_string(weights.shape()));
  }
  for (Index r = 0; r < rows; ++r) {
    for (Index k = 1; k < tau; ++k) {
      if (selected[static_cast<std::size_t>(r * tau + k)] <=
          selected[static_cast<std::size_t>(r * tau + k - 1)]) {
        throw ContractError("temporal_connection_diagonals: selected indices must ascend");
      }
    }
  }
  const Index n = a_s.dim(0);
  Shape out_shape = weights.shape();
  out_shape.push_back(n);
  const Tensor outer = matmul(reshape(weights, {rows * tau, 1}), reshape(diagonal(a_s), {1, n}));
  return reshape(outer, std::move(out_shape));
}

Tensor temporal_connection_graphs(const Tensor& a_s, const Tensor& weights,
                                  std::span<const Index> selected) {
  return diag_embed(temporal_connection_diagonals(a_s, weights, selected));
}

Tensor fuse_cross_graph(const Tensor& a_s, const Tensor& diagonals) {
  require_square(a_s, "fuse_cross_graph");
  const Index n = a_s.dim(0);
  if (diagonals.rank() < 2 || diagonals.shape().back() != n) {
    throw DimensionError("fuse_cross_graph: diagonals " + to_string(diagonals.shape()) +
                         " do not match graph of " + std::to_string(n) + " nodes");
  }
  const Index tau = diagonals.dim(diagonals.rank() - 2);
  const Index batch = diagonals.size() / (tau * n);
  const Index side = tau * n;
  Shape out_shape(diagonals.shape().begin(), diagonals.shape().end() - 2);
  out_shape.push_back(side);
  out_shape.push_back(side);

  Vector y = Vector::Zero(batch * side * side);
  const ConstMap as(a_s.data().data(), n, n);
  for (Index b = 0; b < batch; ++b) {
    MutMap out(y.data() + b * side * side, side, side);
    const ConstMap d(diagonals.data().data() + b * tau * n, tau, n);
    for (Index k = 0; k < tau; ++k) {
      out.block(k * n, k * n, n, n) = as;
      for (Index l = k; l < tau; ++l) {
        for (Index i = 0; i < n; ++i) out(k * n + i, l * n + i) += d(l, i);
      }
    }
  }
  return record_op("fuse_cross_graph", std::move(out_shape), std::move(y), {a_s, diagonals},
                   [batch, tau, n, side](const Vector& g, std::span<Vector* const> in) {
                     for (Index b = 0; b < batch; ++b) {
                       const ConstMap gb(g.data() + b * side * side, side, side);
                       if (in[0]) {
                         MutMap ga(in[0]->data(), n, n);
                         for (Index k = 0; k < tau; ++k) ga += gb.block(k * n, k * n, n, n);
                       }
                       if (in[1]) {
                         MutMap gd(in[1]->data() + b * tau * n, tau, n);
                         for (Index l = 0; l < tau; ++l) {
                           for (Index k = 0; k <= l; ++k) {
                             for (Index i = 0; i < n; ++i) gd(l, i) += gb(k * n + i, l * n + i);
                           }
                         }
                       }
                     }
                   });
}

namespace {

// [m, n, d] slices side by side as [n, m * d] so one product applies a shared
// graph to all of them.
RowMatrix side_by_side(const double* src, Index m, Index n, Index d) {
  RowMatrix out(n, m * d);
  for (Index b = 0; b < m; ++b) out.middleCols(b * d, d) = ConstMap(src + b * n * d, n, d);
  return out;
}

// (A + I) h over slices h [m, n, d], plus the gradient with respect to A.
Vector propagate_slices(const Tensor& a, const Vector& h, Index m, Index n, Index d) {
  const RowMatrix wide = a.as_matrix() * side_by_side(h.data(), m, n, d);
  Vector y = h;
  for (Index b = 0; b < m; ++b) MutMap(y.data() + b * n * d, n, d) += wide.middleCols(b * d, d);
  return y;
}

void propagate_slices_backward(const Tensor& a, const Vector& h, const Vector& g, Index m,
                               Index n, Index d, Vector* ga, Vector* gh) {
  const RowMatrix gw = side_by_side(g.data(), m, n, d);
  if (ga) MutMap(ga->data(), n, n).noalias() += gw * side_by_side(h.data(), m, n, d).transpose();
  if (gh) {
    const RowMatrix back = a.as_matrix().transpose() * gw;
    *gh += g;
    for (Index b = 0; b < m; ++b) MutMap(gh->data() + b * n * d, n, d) += back.middleCols(b * d, d);
  }
}

}  // namespace

Tensor cross_propagate(const Tensor& a_s, const Tensor& diagonals, const Tensor& h) {
  require_square(a_s, "cross_propagate");
  if (h.rank() != 4 || h.dim(2) != a_s.dim(0)) {
    throw DimensionError("cross_propagate: expected [B, tau, N, d] features for " +
                         std::to_string(a_s.dim(0)) + " nodes, got " + to_string(h.shape()));
  }
  const Shape dshape{h.dim(0), h.dim(1), h.dim(2)};
  if (diagonals.shape() != dshape) {
    throw DimensionError("cross_propagate: diagonals " + to_string(diagonals.shape()) +
                         " do not match features " + to_string(h.shape()));
  }
  const Index batch = h.dim(0), tau = h.dim(1), n = h.dim(2), width = h.dim(3);
  Vector y = propagate_slices(a_s, h.data(), batch * tau, n, width);
  // Temporal blocks: output block k gains d_l * h_l for every l >= k.
  const Vector& dv = diagonals.data();
  const Vector& hv = h.data();
  Vector acc(width);
  for (Index b = 0; b < batch; ++b) {
    for (Index i = 0; i < n; ++i) {
      acc.setZero();
      for (Index k = tau - 1; k >= 0; --k) {
        const Index row = (b * tau + k) * n + i;
        acc += dv[row] * hv.segment(row * width, width);
        y.segment(row * width, width) += acc;
      }
    }
  }
  return record_op("cross_propagate", h.shape(), std::move(y), {a_s, diagonals, h},
                   [a_s, diagonals, h, batch, tau, n, width](const Vector& g,
                                                             std::span<Vector* const> in) {
                     const Vector& dv = diagonals.data();
                     const Vector& hv = h.data();
                     propagate_slices_backward(a_s, hv, g, batch * tau, n, width, in[0], in[2]);
                     Vector acc(width);
                     for (Index b = 0; b < batch; ++b) {
                       for (Index i = 0; i < n; ++i) {
                         // Block l receives the gradient of every output block k <= l.
                         acc.setZero();
                         for (Index l = 0; l < tau; ++l) {
                           const Index row = (b * tau + l) * n + i;
                           acc += g.segment(row * width, width);
                           if (in[1]) (*in[1])[row] += acc.dot(hv.segment(row * width, width));
                           if (in[2]) in[2]->segment(row * width, width) += dv[row] * acc;
                         }
                       }
                     }
                   });
}

Tensor spatial_propagate(const Tensor& a_s, const Tensor& h) {
  require_square(a_s, "spatial_propagate");
  const Index n = a_s.dim(0);
  if (h.rank() < 2 || h.dim(h.rank() - 2) != n) {
    throw DimensionError("spatial_propagate: graph " + to_string(a_s.shape()) +
                         " does not fit features " + to_string(h.shape()));
  }
  const Index width = h.shape().back(), m = h.size() / (n * width);
  return record_op("spatial_propagate", h.shape(), propagate_slices(a_s, h.data(), m, n, width),
                   {a_s, h}, [a_s, h, m, n, width](const Vector& g, std::span<Vector* const> in) {
                     propagate_slices_backward(a_s, h.data(), g, m, n, width, in[0], in[1]);
                   });
}

}  // namespace dstcgcn
