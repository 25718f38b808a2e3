#pragma once

#include <filesystem>
#include <iosfwd>

#include "dstcgcn/config.hpp"

namespace dstcgcn {

// Loaded (or generated) series with its split, training-fit statistics and
// the normalized copy the model sees.
struct PreparedData {
  data::RawSeries raw;
  data::RawSeries norm;
  data::SplitSegments split;
  data::NormStats stats;
  Index input_len = 0;
  Index horizon = 0;
  Index output_dim = 1;

  data::WindowDataset windows(data::Segment segment) const;
  data::Segment segment(std::string_view name) const;  // train|val|test
};

PreparedData prepare_data(const RunConfig& config);

// Output file names inside out.dir.
inline constexpr const char* kSyntheticFile = "synthetic.csv";
inline constexpr const char* kCheckpointFile = "checkpoint.ckpt";
inline constexpr const char* kTrainLogFile = "train_log.csv";
inline constexpr const char* kInspectDir = "inspect";

std::filesystem::path eval_overall_file(const RunConfig& config);
std::filesystem::path eval_horizon_file(const RunConfig& config);
std::filesystem::path eval_summary_file(const RunConfig& config);

// Each command writes its artifacts under out.dir and a short report to `out`.
void cmd_synth(const RunConfig& config, std::ostream& out);
void cmd_train(const RunConfig& config, std::ostream& out);
void cmd_eval(const RunConfig& config, std::ostream& out);
void cmd_inspect(const RunConfig& config, std::ostream& out);

struct LoadedModel {
  RunConfig config;  // the given config with the checkpoint's model settings
  PreparedData data;
  ModelParams params;
};

// Rebuilds the model stored in the configured checkpoint. Keys the checkpoint
// fixes (model shape, ablation, window lengths, seed) come from it; an
// explicit conflicting value, or data the parameters do not fit, is a
// VersionError.
LoadedModel load_model(const RunConfig& config);

// 0 success, 2 invalid input (config, data, checkpoint), 3 numeric divergence.
int exit_code_for(const std::exception& e);

}  // namespace dstcgcn
