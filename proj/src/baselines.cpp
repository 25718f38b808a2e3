#include "dstcgcn/baselines.hpp"

namespace dstcgcn {

std::vector<double> historical_average(const data::RawSeries& raw, data::Segment fit,
                                       const data::WindowDataset& dataset, Index period) {
  if (period < 1) throw ContractError("historical_average: period must be positive");
  if (fit.length() < 1) throw ContractError("historical_average: empty fit segment");
  const Index n = raw.nodes, f = dataset.output_channels();
  const std::size_t cells = static_cast<std::size_t>(period * n * f);
  std::vector<double> sums(cells, 0.0);
  std::vector<Index> counts(cells, 0);
  std::vector<double> fallback(static_cast<std::size_t>(n * f), 0.0);
  for (Index t = fit.begin; t < fit.end; ++t) {
    for (Index node = 0; node < n; ++node) {
      for (Index c = 0; c < f; ++c) {
        const std::size_t cell = static_cast<std::size_t>(((t % period) * n + node) * f + c);
        sums[cell] += raw.at(t, node, c);
        ++counts[cell];
        fallback[static_cast<std::size_t>(node * f + c)] += raw.at(t, node, c);
      }
    }
  }
  for (double& v : fallback) v /= static_cast<double>(fit.length());

  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(dataset.size() * dataset.horizon() * n * f));
  for (Index w = 0; w < dataset.size(); ++w) {
    const Index first = dataset.window_start(w) + dataset.input_len();
    for (Index h = 0; h < dataset.horizon(); ++h) {
      for (Index node = 0; node < n; ++node) {
        for (Index c = 0; c < f; ++c) {
          const std::size_t cell = static_cast<std::size_t>((((first + h) % period) * n + node) * f + c);
          out.push_back(counts[cell] ? sums[cell] / static_cast<double>(counts[cell])
                                     : fallback[static_cast<std::size_t>(node * f + c)]);
        }
      }
    }
  }
  return out;
}

std::vector<double> persistence(const data::RawSeries& raw, const data::WindowDataset& dataset) {
  const Index n = raw.nodes, f = dataset.output_channels();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(dataset.size() * dataset.horizon() * n * f));
  for (Index w = 0; w < dataset.size(); ++w) {
    const Index last = dataset.window_start(w) + dataset.input_len() - 1;
    for (Index h = 0; h < dataset.horizon(); ++h) {
      for (Index node = 0; node < n; ++node) {
        for (Index c = 0; c < f; ++c) out.push_back(raw.at(last, node, c));
      }
    }
  }
  return out;
}

}  // namespace dstcgcn
