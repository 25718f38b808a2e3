#pragma once

#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "dstcgcn/tensor.hpp"

// Frequency-domain attentive time-step selection.
//
// Layouts are batch first: raw windows are [B, T, N, C], projections
// [B, T, N, d_h], scores [B, T, T] and selections [B, T, tau].
namespace dstcgcn {

// Series whose standard deviation over the window is at or below this value
// are treated as constant and normalize to zero.
inline constexpr double kTemporalStdFloor = 1e-8;

struct SelectorParams {
  Tensor wq, bq;  // [in, d_h], [d_h]
  Tensor wk, bk;
  Index modes = 1;
  Index tau = 1;

  Index in_channels() const { return wq.dim(0); }
  Index hidden() const { return wq.dim(1); }
};

SelectorParams make_selector_params(Index in_channels, Index hidden, Index modes, Index tau,
                                    std::mt19937_64& rng);

// Standardizes every (node, channel) series over the time axis of
// [..., T, N, C] with the population standard deviation.
Tensor temporal_normalize(const Tensor& x);

// Channel concatenation, original first. Shapes must match.
Tensor enrich(const Tensor& x, const Tensor& x_norm);

// Score of every (i, j) step pair: per node, the lowest `modes` Fourier
// coefficients of q[i] and k[j] along d_h are multiplied (k conjugated),
// inverted back to d_h lags, and the result is averaged over nodes and lags.
// q, k: [B, T, N, d_h] -> [B, T, T].
Tensor attention_scores(const Tensor& q, const Tensor& k, Index modes);

// Projects enriched windows [B, T, N, in] with the selector's linear maps and
// scores them.
Tensor attention_scores(const Tensor& x_enriched, const SelectorParams& params);

enum class WeightMode { softmax, raw };

WeightMode parse_weight_mode(std::string_view text);
std::string_view to_string(WeightMode mode);

struct Selection {
  Index tau = 0;
  // rows * tau indices, each row ascending; a row is one (sample, step).
  std::vector<Index> indices;
  Tensor weights;  // [..., T, tau]
};

// Per row of `scores`, the tau largest columns (ties go to the smaller
// column), listed in ascending column order. Weights are the selected
// scores, softmaxed across the row when mode is softmax.
Selection select_top_tau(const Tensor& scores, Index tau, WeightMode mode);

// Index-only selection of a single row, shared by tests and inspection tools.
std::vector<Index> top_tau_columns(std::span<const double> row, Index tau);

// X_sel[b, t, k] = x[b, indices[b, t, k]]: [B, T, N, C] -> [B, T, tau, N, C].
Tensor gather_selected(const Tensor& x, std::span<const Index> indices, Index tau);

}  // namespace dstcgcn
