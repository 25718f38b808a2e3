#include "dstcgcn/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "dstcgcn/numfmt.hpp"

namespace dstcgcn::data {

bool RawSeries::is_missing(Index t, Index n, Index c) const { return std::isnan(at(t, n, c)); }

Index RawSeries::missing_count() const {
  return static_cast<Index>(
      std::count_if(values.begin(), values.end(), [](double v) { return std::isnan(v); }));
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

RawSeries parse_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  // Trailing blank lines are not rows.
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();

  if (lines.empty() || trim(lines.front()).empty()) throw SchemaError("csv: header has zero columns");

  RawSeries series;
  for (std::string_view id : split_fields(lines.front())) series.node_ids.emplace_back(trim(id));
  series.nodes = static_cast<Index>(series.node_ids.size());
  series.channels = 1;
  if (lines.size() < 2) throw SchemaError("csv: no data rows");

  for (std::size_t row = 1; row < lines.size(); ++row) {
    const auto fields = split_fields(lines[row]);
    const std::size_t line_no = row + 1;
    if (static_cast<Index>(fields.size()) != series.nodes) {
      throw ParseError("csv line " + std::to_string(line_no) + ": expected " +
                       std::to_string(series.nodes) + " fields, got " +
                       std::to_string(fields.size()));
    }
    for (std::string_view f : fields) {
      f = trim(f);
      if (f.empty() || f == "NaN" || f == "nan" || f == "NAN") {
        series.values.push_back(kMissing);
        continue;
      }
      const auto v = parse_double(f);
      if (!v || !std::isfinite(*v)) {
        throw ParseError("csv line " + std::to_string(line_no) + ": cannot parse '" +
                         std::string(f) + "'");
      }
      series.values.push_back(*v);
    }
  }
  series.steps = static_cast<Index>(lines.size() - 1);
  return series;
}

RawSeries load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

std::string format_csv(const RawSeries& series) {
  if (series.channels != 1) throw SchemaError("csv output supports a single channel");
  std::string out;
  for (Index n = 0; n < series.nodes; ++n) {
    if (n) out += ',';
    out += series.node_ids[static_cast<std::size_t>(n)];
  }
  out += '\n';
  for (Index t = 0; t < series.steps; ++t) {
    for (Index n = 0; n < series.nodes; ++n) {
      if (n) out += ',';
      const double v = series.at(t, n);
      if (!std::isnan(v)) out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

void write_csv(const RawSeries& series, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  out << format_csv(series);
  if (!out) throw ParseError("failed writing " + path.string());
}

RawSeries interpolate_missing(RawSeries series) {
  std::vector<Index> observed;
  for (Index n = 0; n < series.nodes; ++n) {
    for (Index c = 0; c < series.channels; ++c) {
      observed.clear();
      for (Index t = 0; t < series.steps; ++t) {
        if (!series.is_missing(t, n, c)) observed.push_back(t);
      }
      if (observed.empty()) {
        throw SchemaError("node '" + series.node_ids[static_cast<std::size_t>(n)] +
                          "' has no observed values");
      }
      for (Index t = 0; t < observed.front(); ++t) series.at(t, n, c) = series.at(observed.front(), n, c);
      for (Index t = observed.back() + 1; t < series.steps; ++t) {
        series.at(t, n, c) = series.at(observed.back(), n, c);
      }
      for (std::size_t k = 1; k < observed.size(); ++k) {
        const Index lo = observed[k - 1], hi = observed[k];
        const double a = series.at(lo, n, c), b = series.at(hi, n, c);
        for (Index t = lo + 1; t < hi; ++t) {
          const double frac = static_cast<double>(t - lo) / static_cast<double>(hi - lo);
          series.at(t, n, c) = a + (b - a) * frac;
        }
      }
    }
  }
  return series;
}

NormStats fit_zscore(const RawSeries& series, Segment fit_range) {
  if (fit_range.length() < 1 || fit_range.begin < 0 || fit_range.end > series.steps) {
    throw ContractError("fit_zscore: empty or out-of-range fit segment");
  }
  NormStats stats;
  stats.mean = Eigen::MatrixXd::Zero(series.nodes, series.channels);
  stats.std = Eigen::MatrixXd::Zero(series.nodes, series.channels);
  const double count = static_cast<double>(fit_range.length());
  for (Index n = 0; n < series.nodes; ++n) {
    for (Index c = 0; c < series.channels; ++c) {
      double s = 0;
      for (Index t = fit_range.begin; t < fit_range.end; ++t) s += series.at(t, n, c);
      const double mu = s / count;
      double ss = 0;
      for (Index t = fit_range.begin; t < fit_range.end; ++t) {
        const double d = series.at(t, n, c) - mu;
        ss += d * d;
      }
      stats.mean(n, c) = mu;
      stats.std(n, c) = std::max(std::sqrt(ss / count), kStdFloor);
    }
  }
  return stats;
}

RawSeries apply_zscore(RawSeries series, const NormStats& stats) {
  for (Index t = 0; t < series.steps; ++t) {
    for (Index n = 0; n < series.nodes; ++n) {
      for (Index c = 0; c < series.channels; ++c) series.at(t, n, c) = stats.normalize(series.at(t, n, c), n, c);
    }
  }
  return series;
}

RawSeries invert_zscore(RawSeries series, const NormStats& stats) {
  for (Index t = 0; t < series.steps; ++t) {
    for (Index n = 0; n < series.nodes; ++n) {
      for (Index c = 0; c < series.channels; ++c) {
        series.at(t, n, c) = stats.denormalize(series.at(t, n, c), n, c);
      }
    }
  }
  return series;
}

SplitRatios SplitRatios::parse(std::string_view text) {
  SplitRatios r;
  std::size_t start = 0;
  while (true) {
    const std::size_t colon = text.find(':', start);
    const auto part = text.substr(start, colon == std::string_view::npos ? text.size() - start : colon - start);
    const auto v = parse_double(part);
    if (!v || !(*v > 0) || !std::isfinite(*v)) {
      throw ConfigError("split ratios must be positive numbers separated by ':', got '" +
                        std::string(text) + "'");
    }
    r.parts.push_back(*v);
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  if (r.parts.size() != 3) throw ConfigError("split ratios need exactly three parts");
  return r;
}

std::string SplitRatios::to_string() const {
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) s += ':';
    s += format_double(parts[i]);
  }
  return s;
}

SplitSegments chronological_split(Index total_steps, const SplitRatios& ratios, Index min_length) {
  if (ratios.parts.size() != 3) throw ContractError("chronological_split: need three ratios");
  long double total = 0;
  for (double p : ratios.parts) {
    if (!(p > 0)) throw ContractError("chronological_split: ratios must be positive");
    total += p;
  }
  const auto boundary = [&](long double cumulative) {
    return static_cast<Index>(std::floor(cumulative / total * total_steps + 1e-9L));
  };
  SplitSegments s;
  const Index b1 = boundary(ratios.parts[0]);
  const Index b2 = boundary(static_cast<long double>(ratios.parts[0]) + ratios.parts[1]);
  s.train = {0, b1};
  s.val = {b1, b2};
  s.test = {b2, total_steps};
  for (const Segment& seg : {s.train, s.val, s.test}) {
    if (seg.length() < min_length) {
      throw ContractError("segment too short for windowing: " + std::to_string(seg.length()) +
                          " steps, need " + std::to_string(min_length));
    }
  }
  return s;
}

WindowDataset::WindowDataset(const RawSeries& series, Segment segment, Index input_len,
                             Index horizon, Index output_channels)
    : segment_(segment),
      nodes_(series.nodes),
      channels_(series.channels),
      input_len_(input_len),
      horizon_(horizon),
      output_channels_(output_channels) {
  if (input_len < 1 || horizon < 1) throw ContractError("window lengths must be positive");
  if (output_channels < 1 || output_channels > channels_) {
    throw ContractError("output channels must lie in [1, channels]");
  }
  if (segment.begin < 0 || segment.end > series.steps || segment.length() < input_len + horizon) {
    throw ContractError("segment of " + std::to_string(segment.length()) +
                        " steps is shorter than input + horizon = " +
                        std::to_string(input_len + horizon));
  }
  if (series.missing_count() > 0) throw ContractError("windowing needs a series without gaps");
  count_ = segment.length() - input_len - horizon + 1;
  const auto stride = static_cast<std::size_t>(nodes_ * channels_);
  values_.assign(series.values.begin() + static_cast<std::ptrdiff_t>(segment.begin * static_cast<Index>(stride)),
                 series.values.begin() + static_cast<std::ptrdiff_t>(segment.end * static_cast<Index>(stride)));
}

WindowBatch WindowDataset::batch(std::span<const Index> windows) const {
  const Index b = static_cast<Index>(windows.size());
  if (b < 1) throw ContractError("empty batch");
  const Index step = nodes_ * channels_;
  Vector in(b * input_len_ * step);
  Vector out(b * horizon_ * nodes_ * output_channels_);
  WindowBatch wb;
  for (Index i = 0; i < b; ++i) {
    const Index w = windows[static_cast<std::size_t>(i)];
    if (w < 0 || w >= count_) throw ContractError("window index out of range");
    wb.window_starts.push_back(window_start(w));
    for (Index t = 0; t < input_len_; ++t) {
      for (Index k = 0; k < step; ++k) {
        in[(i * input_len_ + t) * step + k] = values_[static_cast<std::size_t>((w + t) * step + k)];
      }
    }
    for (Index h = 0; h < horizon_; ++h) {
      const Index src_t = w + input_len_ + h;
      for (Index n = 0; n < nodes_; ++n) {
        for (Index c = 0; c < output_channels_; ++c) {
          out[((i * horizon_ + h) * nodes_ + n) * output_channels_ + c] =
              values_[static_cast<std::size_t>((src_t * nodes_ + n) * channels_ + c)];
        }
      }
    }
  }
  wb.inputs = Tensor(Shape{b, input_len_, nodes_, channels_}, std::move(in));
  wb.targets = Tensor(Shape{b, horizon_, nodes_, output_channels_}, std::move(out));
  return wb;
}

std::vector<std::vector<Index>> WindowDataset::batches(Index batch_size,
                                                       std::optional<std::uint64_t> shuffle_seed) const {
  if (batch_size < 1) throw ContractError("batch size must be positive");
  std::vector<Index> order(static_cast<std::size_t>(count_));
  std::iota(order.begin(), order.end(), Index{0});
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::vector<Index>> out;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

namespace {

struct NodeProfile {
  double base, amplitude, phase;
  SynthLink link;
};

std::vector<NodeProfile> draw_profiles(std::mt19937_64& rng, Index nodes, const SynthConfig& config) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<NodeProfile> out;
  for (Index n = 0; n < nodes; ++n) {
    NodeProfile p{};
    p.base = config.base * (0.8 + 0.4 * unit(rng));
    p.amplitude = config.amplitude * (0.5 + unit(rng));
    p.phase = 2.0 * std::numbers::pi * unit(rng);
    // Any node other than n.
    Index src = static_cast<Index>(unit(rng) * static_cast<double>(nodes - 1));
    src = std::min(src, nodes - 2);
    if (src >= n) ++src;
    const Index drawn_lag = 1 + std::min<Index>(2, static_cast<Index>(unit(rng) * 3.0));
    p.link = {src, config.lag > 0 ? config.lag : drawn_lag};
    out.push_back(p);
  }
  return out;
}

}  // namespace

std::vector<SynthLink> synth_links(Index nodes, std::uint64_t seed, const SynthConfig& config) {
  if (nodes < 2) throw ContractError("synth needs at least 2 nodes");
  std::mt19937_64 rng(seed);
  std::vector<SynthLink> links;
  for (const NodeProfile& p : draw_profiles(rng, nodes, config)) links.push_back(p.link);
  return links;
}

RawSeries synth_generate(Index nodes, Index steps, std::uint64_t seed, const SynthConfig& config) {
  if (nodes < 2) throw ContractError("synth needs at least 2 nodes");
  if (steps < 600) throw ContractError("synth needs at least 600 steps");
  if (config.period < 1) throw ContractError("synth period must be positive");
  if (!(std::abs(config.ar) < 1.0)) throw ContractError("synth AR coefficient must lie in (-1, 1)");

  std::mt19937_64 rng(seed);
  const auto profiles = draw_profiles(rng, nodes, config);
  Index max_lag = 0;
  for (const auto& p : profiles) max_lag = std::max(max_lag, p.link.lag);

  // own[t + max_lag][n]: sinusoid plus AR(1) noise, with warm-up steps so
  // lagged reads at t = 0 are defined.
  const Index total = steps + max_lag;
  std::vector<double> own(static_cast<std::size_t>(total * nodes));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> noise(static_cast<std::size_t>(nodes));
  const double stationary = 1.0 / std::sqrt(1.0 - config.ar * config.ar);
  for (Index n = 0; n < nodes; ++n) noise[static_cast<std::size_t>(n)] = config.noise * stationary * gauss(rng);
  for (Index k = 0; k < total; ++k) {
    const Index t = k - max_lag;
    const Index slot = ((t % config.period) + config.period) % config.period;
    for (Index n = 0; n < nodes; ++n) {
      auto& e = noise[static_cast<std::size_t>(n)];
      if (k > 0) e = config.ar * e + config.noise * gauss(rng);
      const auto& p = profiles[static_cast<std::size_t>(n)];
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(slot) /
                               static_cast<double>(config.period) + p.phase;
      own[static_cast<std::size_t>(k * nodes + n)] = p.amplitude * std::sin(angle) + e;
    }
  }

  RawSeries out;
  out.steps = steps;
  out.nodes = nodes;
  out.channels = 1;
  out.values.resize(static_cast<std::size_t>(steps * nodes));
  for (Index n = 0; n < nodes; ++n) out.node_ids.push_back("node" + std::to_string(n));
  for (Index t = 0; t < steps; ++t) {
    for (Index n = 0; n < nodes; ++n) {
      const auto& p = profiles[static_cast<std::size_t>(n)];
      const double self = own[static_cast<std::size_t>((t + max_lag) * nodes + n)];
      const double lagged =
          own[static_cast<std::size_t>((t + max_lag - p.link.lag) * nodes + p.link.source)];
      out.at(t, n) = p.base + self + config.coupling * lagged;
    }
  }
  return out;
}

}  // namespace dstcgcn::data
