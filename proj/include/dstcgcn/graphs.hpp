#pragma once

#include <random>
#include <span>

#include "dstcgcn/tensor.hpp"

// Per-step spatial graphs from node and time embeddings, temporal connection
// graphs from selection weights, and their block-upper fusion.
namespace dstcgcn {

struct Embeddings {
  Tensor node;  // E_N [N, d_e]
  Tensor time;  // E_T [T, d_e]

  Index nodes() const { return node.dim(0); }
  Index steps() const { return time.dim(0); }
  Index dim() const { return node.dim(1); }
};

// Entries i.i.d. U[-0.5, 0.5] / sqrt(d_e).
Embeddings make_embeddings(Index nodes, Index steps, Index dim, std::mt19937_64& rng);

// E_N with E_T[t] added to every row: [N, d_e].
Tensor embed_time_step(const Embeddings& emb, Index t);

// Row softmax of the Gram matrix of `e` [N, d_e]: [N, N].
Tensor spatial_graph(const Tensor& e);

// Diagonals of the temporal connection graphs: out[..., k, n] =
// weights[..., k] * a_s[n, n]. `weights` is [..., tau] and `selected` holds
// the matching step indices, ascending within each row of tau.
Tensor temporal_connection_diagonals(const Tensor& a_s, const Tensor& weights,
                                     std::span<const Index> selected);

// The same graphs as dense diagonal matrices: [..., tau, N, N].
Tensor temporal_connection_graphs(const Tensor& a_s, const Tensor& weights,
                                  std::span<const Index> selected);

// Dense cross graph [..., tau*N, tau*N] from a_s [N, N] and temporal
// diagonals [..., tau, N]: block (k, k) is a_s + diag(d_k), block (k, l) with
// l > k is diag(d_l), and blocks below the diagonal are zero.
Tensor fuse_cross_graph(const Tensor& a_s, const Tensor& diagonals);

// (A_C + I) h without materializing A_C: h is [B, tau, N, d] and the result
// has the same shape. Matches bmm(fuse_cross_graph(...), h) + h.
Tensor cross_propagate(const Tensor& a_s, const Tensor& diagonals, const Tensor& h);

// (A_S + I) h for features h [..., N, d].
Tensor spatial_propagate(const Tensor& a_s, const Tensor& h);

}  // namespace dstcgcn
