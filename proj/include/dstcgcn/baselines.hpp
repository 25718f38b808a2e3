#pragma once

#include <vector>

#include "dstcgcn/dataio.hpp"

// Reference forecasters in original units, laid out like model predictions:
// [window][h][n][f].
namespace dstcgcn {

// Mean of each (node, channel, time-of-day slot) over the fit segment; slots
// are step mod `period`. Unseen slots fall back to the segment mean.
std::vector<double> historical_average(const data::RawSeries& raw, data::Segment fit,
                                       const data::WindowDataset& dataset, Index period = 288);

// Repeats the last observed input value across the horizon.
std::vector<double> persistence(const data::RawSeries& raw, const data::WindowDataset& dataset);

}  // namespace dstcgcn
