#include "dstcgcn/gconv.hpp"

#include <string>

#include "dstcgcn/graphs.hpp"
#include "dstcgcn/init.hpp"
#include "dstcgcn/ops.hpp"

namespace dstcgcn {

namespace {

Tensor activate(const Tensor& x, Activation act) {
  return act == Activation::relu ? relu(x) : x;
}

void require_params(const NodeParams& p, Index nodes, Index in_dim, const char* op) {
  if (p.weights.rank() != 3 || p.weights.dim(0) != nodes || p.weights.dim(1) != in_dim) {
    throw DimensionError(std::string(op) + ": weights " + to_string(p.weights.shape()) +
                         " do not fit " + std::to_string(nodes) + " nodes with input width " +
                         std::to_string(in_dim));
  }
}

Tensor apply_node_params(const Tensor& propagated, const NodeParams& p, Activation act) {
  return activate(add_broadcast(node_matmul(propagated, p.weights), p.bias), act);
}

}  // namespace

DecompKernels make_kernels(Index embed_dim, Index in_dim, Index out_dim, std::mt19937_64& rng) {
  DecompKernels k;
  k.weights = uniform_param({embed_dim, in_dim, out_dim}, xavier_bound(in_dim, out_dim), rng);
  k.bias = Tensor::zeros({embed_dim, out_dim}, true);
  return k;
}

NodeParams generate_params(const Tensor& e, const DecompKernels& kernels) {
  if (e.rank() != 2 || e.dim(1) != kernels.embed_dim()) {
    throw ContractError("generate_params: embedding " + to_string(e.shape()) +
                        " does not match kernels " + to_string(kernels.weights.shape()));
  }
  const Index n = e.dim(0), di = kernels.in_dim(), dout = kernels.out_dim();
  NodeParams p;
  p.weights = reshape(matmul(e, reshape(kernels.weights, {kernels.embed_dim(), di * dout})),
                      {n, di, dout});
  p.bias = matmul(e, kernels.bias);
  return p;
}

Tensor spatial_graph_conv(const Tensor& a_s, const Tensor& h, const NodeParams& params,
                          Activation act) {
  if (a_s.rank() != 2 || h.rank() < 2 || h.dim(h.rank() - 2) != a_s.dim(0)) {
    throw DimensionError("spatial_graph_conv: graph " + to_string(a_s.shape()) +
                         " does not fit features " + to_string(h.shape()));
  }
  const Index n = a_s.dim(0), width = h.shape().back();
  require_params(params, n, width, "spatial_graph_conv");
  return apply_node_params(spatial_propagate(a_s, h), params, act);
}

Tensor cross_graph_conv(const Tensor& a_c, const Tensor& h, const NodeParams& params,
                        Activation act) {
  if (h.rank() != 4) {
    throw DimensionError("cross_graph_conv: expected [B, tau, N, d_i], got " + to_string(h.shape()));
  }
  const Index batch = h.dim(0), tau = h.dim(1), n = h.dim(2), width = h.dim(3);
  const Index side = tau * n;
  const bool shared = a_c.shape() == Shape{side, side};
  if (!shared && a_c.shape() != Shape{batch, side, side}) {
    throw DimensionError("cross_graph_conv: graph " + to_string(a_c.shape()) +
                         " does not fit features " + to_string(h.shape()));
  }
  require_params(params, n, width, "cross_graph_conv");
  const Tensor flat = reshape(h, {batch, side, width});
  const Tensor propagated = reshape(bmm(a_c, flat), h.shape()) + h;
  return apply_node_params(propagated, params, act);
}

Tensor cross_graph_conv(const Tensor& a_s, const Tensor& diagonals, const Tensor& h,
                        const NodeParams& params, Activation act) {
  if (h.rank() != 4) {
    throw DimensionError("cross_graph_conv: expected [B, tau, N, d_i], got " + to_string(h.shape()));
  }
  require_params(params, h.dim(2), h.dim(3), "cross_graph_conv");
  return apply_node_params(cross_propagate(a_s, diagonals, h), params, act);
}

FusionParams make_fusion(Index out_dim, std::mt19937_64& rng) {
  FusionParams f;
  f.weight = uniform_param({2 * out_dim, out_dim}, xavier_bound(2 * out_dim, out_dim), rng);
  f.bias = Tensor::zeros({out_dim}, true);
  return f;
}

Tensor fuse_outputs(const Tensor& h_c, const Tensor& h_s, const FusionParams& fusion) {
  if (h_c.rank() != 4 || h_s.rank() != 3 || h_c.dim(0) != h_s.dim(0) ||
      h_c.dim(2) != h_s.dim(1) || h_c.dim(3) != h_s.dim(2)) {
    throw ContractError("fuse_outputs: cross output " + to_string(h_c.shape()) +
                        " does not match spatial output " + to_string(h_s.shape()));
  }
  const Tensor pooled = mean_axis(h_c, 1);
  return add_broadcast(linear(concat_last(pooled, h_s), fusion.weight), fusion.bias);
}

}  // namespace dstcgcn
