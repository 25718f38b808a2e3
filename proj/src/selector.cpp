#include "dstcgcn/selector.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "dstcgcn/init.hpp"
#include "dstcgcn/ops.hpp"
#include "dstcgcn/spectral.hpp"

namespace dstcgcn {

namespace {

using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void require_modes(Index modes, Index hidden) {
  if (modes < 1 || modes > spectral::max_modes(hidden)) {
    throw ContractError("selector: mode count " + std::to_string(modes) + " outside [1, " +
                        std::to_string(spectral::max_modes(hidden)) + "] for hidden size " +
                        std::to_string(hidden));
  }
}

}  // namespace

SelectorParams make_selector_params(Index in_channels, Index hidden, Index modes, Index tau,
                                    std::mt19937_64& rng) {
  require_modes(modes, hidden);
  if (tau < 1) throw ContractError("selector: tau must be at least 1");
  SelectorParams p;
  const double bound = xavier_bound(in_channels, hidden);
  p.wq = uniform_param({in_channels, hidden}, bound, rng);
  p.bq = Tensor::zeros({hidden}, true);
  p.wk = uniform_param({in_channels, hidden}, bound, rng);
  p.bk = Tensor::zeros({hidden}, true);
  p.modes = modes;
  p.tau = tau;
  return p;
}

Tensor temporal_normalize(const Tensor& x) {
  if (x.rank() < 3) {
    throw DimensionError("temporal_normalize: expected [..., T, N, C], got " + to_string(x.shape()));
  }
  const std::size_t r = x.rank();
  const Index steps = x.dim(r - 3);
  if (steps < 2) throw ContractError("temporal_normalize: needs at least 2 time steps");
  const Index inner = x.dim(r - 2) * x.dim(r - 1);
  const Index outer = x.size() / (steps * inner);

  Vector y = Vector::Zero(x.size());
  // Reciprocal std per series; zero marks a constant series.
  Vector inv_std = Vector::Zero(outer * inner);
  for (Index o = 0; o < outer; ++o) {
    const ConstMap xs(x.data().data() + o * steps * inner, steps, inner);
    MutMap ys(y.data() + o * steps * inner, steps, inner);
    for (Index c = 0; c < inner; ++c) {
      const double mu = xs.col(c).mean();
      const double sd = std::sqrt((xs.col(c).array() - mu).square().mean());
      if (sd <= kTemporalStdFloor) continue;
      inv_std[o * inner + c] = 1.0 / sd;
      ys.col(c) = (xs.col(c).array() - mu) / sd;
    }
  }
  Vector yc = y;
  return record_op("temporal_normalize", x.shape(), std::move(y), {x},
                   [y = std::move(yc), inv_std, outer, steps, inner](const Vector& g,
                                                                     std::span<Vector* const> in) {
                     for (Index o = 0; o < outer; ++o) {
                       const ConstMap ys(y.data() + o * steps * inner, steps, inner);
                       const ConstMap gs(g.data() + o * steps * inner, steps, inner);
                       MutMap gx(in[0]->data() + o * steps * inner, steps, inner);
                       for (Index c = 0; c < inner; ++c) {
                         const double s = inv_std[o * inner + c];
                         if (s == 0.0) continue;
                         const double gm = gs.col(c).mean();
                         const double gy = gs.col(c).dot(ys.col(c)) / static_cast<double>(steps);
                         gx.col(c).array() += s * (gs.col(c).array() - gm - ys.col(c).array() * gy);
                       }
                     }
                   });
}

Tensor enrich(const Tensor& x, const Tensor& x_norm) {
  if (x.shape() != x_norm.shape()) {
    throw ContractError("enrich: shapes " + to_string(x.shape()) + " and " +
                        to_string(x_norm.shape()) + " differ");
  }
  return concat_last(x, x_norm);
}

Tensor attention_scores(const Tensor& q, const Tensor& k, Index modes) {
  if (q.rank() != 4 || q.shape() != k.shape()) {
    throw DimensionError("attention_scores: expected equal [B, T, N, d_h] inputs, got " +
                         to_string(q.shape()) + " and " + to_string(k.shape()));
  }
  const Index batch = q.dim(0), steps = q.dim(1), nodes = q.dim(2), hidden = q.dim(3);
  require_modes(modes, hidden);
  const double scale = 1.0 / static_cast<double>(nodes * hidden);
  const Index rows = steps * nodes;

  using Complex = std::complex<double>;
  Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic> fq(modes, rows), fk(modes, rows);
  Vector m(batch * steps * steps);
  for (Index b = 0; b < batch; ++b) {
    const ConstMap qb(q.data().data() + b * rows * hidden, rows, hidden);
    const ConstMap kb(k.data().data() + b * rows * hidden, rows, hidden);
    for (Index r = 0; r < rows; ++r) {
      fq.col(r) = spectral::rfft(qb.row(r).transpose(), modes).modes;
      fk.col(r) = spectral::rfft(kb.row(r).transpose(), modes).modes;
    }
    for (Index i = 0; i < steps; ++i) {
      for (Index j = 0; j < steps; ++j) {
        // The inverse transform is linear, so node spectra are summed first.
        spectral::Spectrum<double> acc{spectral::ComplexVector<double>::Zero(modes), hidden};
        for (Index n = 0; n < nodes; ++n) {
          acc.modes += fq.col(i * nodes + n).cwiseProduct(fk.col(j * nodes + n).conjugate());
        }
        m[(b * steps + i) * steps + j] = spectral::irfft(acc, hidden).sum() * scale;
      }
    }
  }
  return record_op(
      "attention_scores", {batch, steps, steps}, std::move(m), {q, k},
      [q, k, batch, steps, nodes, hidden, scale](const Vector& g, std::span<Vector* const> in) {
        // Summing an inverse transform over every lag keeps only its DC term,
        // so each score depends on q and k through their sums over d_h and
        // the gradient spreads evenly across d_h.
        const Index rows = steps * nodes;
        for (Index b = 0; b < batch; ++b) {
          const ConstMap gb(g.data() + b * steps * steps, steps, steps);
          const RowMatrix sq = ConstMap(q.data().data() + b * rows * hidden, rows, hidden)
                                   .rowwise()
                                   .sum()
                                   .reshaped<Eigen::RowMajor>(steps, nodes);
          const RowMatrix sk = ConstMap(k.data().data() + b * rows * hidden, rows, hidden)
                                   .rowwise()
                                   .sum()
                                   .reshaped<Eigen::RowMajor>(steps, nodes);
          if (in[0]) {
            const RowMatrix gq = scale * gb * sk;
            MutMap out(in[0]->data() + b * rows * hidden, rows, hidden);
            out.colwise() += gq.reshaped<Eigen::RowMajor>();
          }
          if (in[1]) {
            const RowMatrix gk = scale * gb.transpose() * sq;
            MutMap out(in[1]->data() + b * rows * hidden, rows, hidden);
            out.colwise() += gk.reshaped<Eigen::RowMajor>();
          }
        }
      });
}

Tensor attention_scores(const Tensor& x_enriched, const SelectorParams& params) {
  if (x_enriched.rank() != 4 || x_enriched.dim(3) != params.in_channels()) {
    throw DimensionError("attention_scores: input " + to_string(x_enriched.shape()) +
                         " does not match projection width " +
                         std::to_string(params.in_channels()));
  }
  const Tensor q = add_broadcast(linear(x_enriched, params.wq), params.bq);
  const Tensor k = add_broadcast(linear(x_enriched, params.wk), params.bk);
  return attention_scores(q, k, params.modes);
}

WeightMode parse_weight_mode(std::string_view text) {
  if (text == "softmax") return WeightMode::softmax;
  if (text == "raw") return WeightMode::raw;
  throw ConfigError("selector.weight_mode: unknown weight mode '" + std::string(text) + "' (softmax|raw)");
}

std::string_view to_string(WeightMode mode) {
  return mode == WeightMode::softmax ? "softmax" : "raw";
}

std::vector<Index> top_tau_columns(std::span<const double> row, Index tau) {
  const Index n = static_cast<Index>(row.size());
  if (tau < 1 || tau > n) {
    throw ContractError("select_top_tau: tau " + std::to_string(tau) + " outside [1, " +
                        std::to_string(n) + "]");
  }
  std::vector<Index> order(row.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::partial_sort(order.begin(), order.begin() + tau, order.end(), [&](Index a, Index b) {
    const double sa = row[static_cast<std::size_t>(a)], sb = row[static_cast<std::size_t>(b)];
    return sa > sb || (sa == sb && a < b);
  });
  order.resize(static_cast<std::size_t>(tau));
  std::sort(order.begin(), order.end());
  return order;
}

Selection select_top_tau(const Tensor& scores, Index tau, WeightMode mode) {
  if (scores.rank() < 2) {
    throw DimensionError("select_top_tau: expected [..., T, T], got " + to_string(scores.shape()));
  }
  const Index n = scores.shape().back();
  if (tau < 1 || tau > n) {
    throw ContractError("select_top_tau: tau " + std::to_string(tau) + " outside [1, " +
                        std::to_string(n) + "]");
  }
  const Index rows = scores.size() / n;
  Selection sel;
  sel.tau = tau;
  sel.indices.reserve(static_cast<std::size_t>(rows * tau));
  for (Index r = 0; r < rows; ++r) {
    const std::span<const double> row(scores.data().data() + r * n, static_cast<std::size_t>(n));
    const auto cols = top_tau_columns(row, tau);
    sel.indices.insert(sel.indices.end(), cols.begin(), cols.end());
  }
  Tensor picked = gather_last(scores, sel.indices, tau);
  sel.weights = mode == WeightMode::softmax ? softmax_rows(picked) : picked;
  return sel;
}

Tensor gather_selected(const Tensor& x, std::span<const Index> indices, Index tau) {
  if (x.rank() != 4) {
    throw DimensionError("gather_selected: expected [B, T, N, C], got " + to_string(x.shape()));
  }
  const Index batch = x.dim(0), steps = x.dim(1);
  const Index slab = x.dim(2) * x.dim(3);
  if (tau < 1 || static_cast<Index>(indices.size()) != batch * steps * tau) {
    throw DimensionError("gather_selected: expected " + std::to_string(batch * steps * tau) +
                         " indices, got " + std::to_string(indices.size()));
  }
  std::vector<Index> src(indices.size());
  for (Index b = 0; b < batch; ++b) {
    for (Index e = 0; e < steps * tau; ++e) {
      const Index i = indices[static_cast<std::size_t>(b * steps * tau + e)];
      if (i < 0 || i >= steps) {
        throw ContractError("gather_selected: index " + std::to_string(i) + " out of range [0, " +
                            std::to_string(steps) + ")");
      }
      src[static_cast<std::size_t>(b * steps * tau + e)] = b * steps + i;
    }
  }
  const Index count = static_cast<Index>(src.size());
  Vector y(count * slab);
  for (Index e = 0; e < count; ++e) {
    y.segment(e * slab, slab) = x.data().segment(src[static_cast<std::size_t>(e)] * slab, slab);
  }
  return record_op("gather_selected", {batch, steps, tau, x.dim(2), x.dim(3)}, std::move(y), {x},
                   [src = std::move(src), slab](const Vector& g, std::span<Vector* const> in) {
                     for (std::size_t e = 0; e < src.size(); ++e) {
                       in[0]->segment(src[e] * slab, slab) +=
                           g.segment(static_cast<Index>(e) * slab, slab);
                     }
                   });
}

}  // namespace dstcgcn
