#pragma once

#include <random>

#include "dstcgcn/tensor.hpp"

// Graph convolutions whose per-node weights are generated from embeddings
// and a small set of shared kernels.
namespace dstcgcn {

struct DecompKernels {
  Tensor weights;  // [d_e, d_i, d_o]
  Tensor bias;     // [d_e, d_o]

  Index embed_dim() const { return weights.dim(0); }
  Index in_dim() const { return weights.dim(1); }
  Index out_dim() const { return weights.dim(2); }
};

DecompKernels make_kernels(Index embed_dim, Index in_dim, Index out_dim, std::mt19937_64& rng);

// Trainable values in one kernel pair; independent of the node count.
constexpr Index kernel_param_count(Index embed_dim, Index in_dim, Index out_dim) {
  return embed_dim * in_dim * out_dim + embed_dim * out_dim;
}

struct NodeParams {
  Tensor weights;  // [N, d_i, d_o]
  Tensor bias;     // [N, d_o]
};

// W[n] = sum_e E[n, e] K_w[e], B[n] = sum_e E[n, e] K_b[e].
NodeParams generate_params(const Tensor& e, const DecompKernels& kernels);

enum class Activation { identity, relu };

// act((A + I) h W[n] + B[n]) with h [..., N, d_i] and A [N, N] -> [..., N, d_o].
Tensor spatial_graph_conv(const Tensor& a_s, const Tensor& h, const NodeParams& params,
                          Activation act);

// Same on the flattened cross layout: h [B, tau, N, d_i] is propagated as a
// [B, tau*N, d_i] block by a_c ([tau*N, tau*N] or [B, tau*N, tau*N]). Node
// n's weights apply at each of its tau positions. -> [B, tau, N, d_o].
Tensor cross_graph_conv(const Tensor& a_c, const Tensor& h, const NodeParams& params,
                        Activation act);

// Cross convolution from the graph's factors (a_s and temporal diagonals),
// equal to cross_graph_conv(fuse_cross_graph(a_s, diagonals), ...).
Tensor cross_graph_conv(const Tensor& a_s, const Tensor& diagonals, const Tensor& h,
                        const NodeParams& params, Activation act);

struct FusionParams {
  Tensor weight;  // [2 d_o, d_o]
  Tensor bias;    // [d_o]
};

FusionParams make_fusion(Index out_dim, std::mt19937_64& rng);

// Mean over tau of h_c [B, tau, N, d_o], concatenated with h_s [B, N, d_o],
// mapped back to d_o: [B, N, d_o].
Tensor fuse_outputs(const Tensor& h_c, const Tensor& h_s, const FusionParams& fusion);

}  // namespace dstcgcn
