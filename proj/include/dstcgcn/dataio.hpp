#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "dstcgcn/tensor.hpp"

namespace dstcgcn::data {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kStdFloor = 1e-8;

// Multivariate series laid out [step][node][channel]. NaN marks a missing
// observation.
struct RawSeries {
  Index steps = 0;
  Index nodes = 0;
  Index channels = 1;
  std::vector<double> values;
  std::vector<std::string> node_ids;
  double step_minutes = 5.0;

  double& at(Index t, Index n, Index c = 0) { return values[flat(t, n, c)]; }
  double at(Index t, Index n, Index c = 0) const { return values[flat(t, n, c)]; }
  bool is_missing(Index t, Index n, Index c = 0) const;
  Index missing_count() const;

 private:
  std::size_t flat(Index t, Index n, Index c) const {
    return static_cast<std::size_t>((t * nodes + n) * channels + c);
  }
};

// Header row of node ids, then one row per time step. An empty cell or "NaN"
// is a missing value. Every file yields a single channel.
RawSeries parse_csv(std::string_view text);
RawSeries load_csv(const std::filesystem::path& path);
std::string format_csv(const RawSeries& series);
void write_csv(const RawSeries& series, const std::filesystem::path& path);

// Interior gaps are filled linearly along time; leading and trailing gaps take
// the nearest observed value.
RawSeries interpolate_missing(RawSeries series);

// Half-open range of time steps.
struct Segment {
  Index begin = 0;
  Index end = 0;
  Index length() const { return end - begin; }
};

// Per node/channel mean and population standard deviation, floored at
// kStdFloor.
struct NormStats {
  Eigen::MatrixXd mean;  // nodes x channels
  Eigen::MatrixXd std;

  double normalize(double v, Index n, Index c = 0) const { return (v - mean(n, c)) / std(n, c); }
  double denormalize(double v, Index n, Index c = 0) const { return v * std(n, c) + mean(n, c); }
};

NormStats fit_zscore(const RawSeries& series, Segment fit_range);
RawSeries apply_zscore(RawSeries series, const NormStats& stats);
RawSeries invert_zscore(RawSeries series, const NormStats& stats);

struct SplitRatios {
  std::vector<double> parts;

  // "6:2:2" style.
  static SplitRatios parse(std::string_view text);
  std::string to_string() const;
};

struct SplitSegments {
  Segment train;
  Segment val;
  Segment test;
};

// Contiguous, ordered segments with boundaries at floor(cumulative ratio *
// steps). Each segment must hold at least `min_length` steps.
SplitSegments chronological_split(Index total_steps, const SplitRatios& ratios, Index min_length);

struct WindowBatch {
  Tensor inputs;   // B x T x N x C
  Tensor targets;  // B x H x N x F
  std::vector<Index> window_starts;  // absolute step of each input window
};

// Sliding windows over one segment of a (normalized) series: input
// [s, s + T), target [s + T, s + T + H) with s ranging over the segment.
class WindowDataset {
 public:
  WindowDataset(const RawSeries& series, Segment segment, Index input_len, Index horizon,
                Index output_channels = 1);

  Index size() const { return count_; }
  Index input_len() const { return input_len_; }
  Index horizon() const { return horizon_; }
  Index nodes() const { return nodes_; }
  Index channels() const { return channels_; }
  Index output_channels() const { return output_channels_; }
  Segment segment() const { return segment_; }
  Index window_start(Index window) const { return segment_.begin + window; }

  WindowBatch batch(std::span<const Index> windows) const;
  // Window ids grouped into batches; shuffled with `shuffle_seed` when given,
  // otherwise in chronological order.
  std::vector<std::vector<Index>> batches(Index batch_size,
                                          std::optional<std::uint64_t> shuffle_seed) const;

 private:
  std::vector<double> values_;  // the segment, [step][node][channel]
  Segment segment_;
  Index nodes_, channels_, input_len_, horizon_, output_channels_, count_;
};

struct SynthConfig {
  double noise = 2.0;      // innovation std of the AR(1) noise
  double ar = 0.9;         // AR(1) coefficient
  double coupling = 0.3;   // fraction of the source node's signal added
  Index lag = 0;           // 0 draws a lag in {1, 2, 3} per node
  double amplitude = 20.0; // mean diurnal amplitude
  double base = 50.0;      // mean level
  Index period = 288;      // one day of 5-minute steps
};

// Per node: base + diurnal sinusoid + AR(1) noise, plus `coupling` times the
// lagged own-signal of a randomly drawn source node. Fully determined by seed.
RawSeries synth_generate(Index nodes, Index steps, std::uint64_t seed, const SynthConfig& config = {});

// Source node and lag used by synth_generate for each node.
struct SynthLink {
  Index source;
  Index lag;
};
std::vector<SynthLink> synth_links(Index nodes, std::uint64_t seed, const SynthConfig& config = {});

}  // namespace dstcgcn::data
