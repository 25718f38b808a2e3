#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dstcgcn/dataio.hpp"
#include "dstcgcn/model.hpp"

namespace dstcgcn {

struct AdamConfig {
  double lr = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Index step = 0;
  std::vector<Vector> m, v;  // registry order
};

AdamState make_adam_state(std::span<const ParamEntry> params);

// Bias-corrected Adam update of every parameter in registry order. A null or
// wrongly sized gradient is a ContractError naming the parameter.
void adam_step(std::span<const ParamEntry> params, std::span<const Vector* const> grads,
               AdamState& state, const AdamConfig& config);

// Scales all gradients together so their joint L2 norm is at most max_norm.
void clip_gradients(std::span<Vector> grads, double max_norm);

struct TrainConfig {
  double lr = 0.003;
  Index batch_size = 64;
  Index epochs = 100;
  std::uint64_t seed = 0;
  double clip = 0;            // joint gradient norm cap; 0 disables
  bool log_wall_time = false; // seconds column records 0 unless set
};

struct EpochLog {
  Index epoch = 0;  // 1-based
  double train_l1 = 0;
  double val_l1 = 0;
  double seconds = 0;
  Index steps = 0;  // optimizer steps taken this epoch
};

std::string format_epoch_log(std::span<const EpochLog> rows);

struct TrainResult {
  std::vector<EpochLog> log;
  Index best_epoch = 0;
  double best_val = 0;
  std::vector<Vector> best_values;  // registry order
  AdamState best_adam;
  double wall_seconds = 0;
};

// Mean L1 over every window of the dataset on the normalized scale.
double dataset_l1(const ModelParams& params, const data::WindowDataset& dataset, Index batch_size);

// Adam on shuffled mini-batches, keeping the parameters with the lowest
// validation L1. On return `params` holds the best parameters. A non-finite
// loss, gradient or parameter raises DivergenceError naming the first
// affected parameter group.
TrainResult train(ModelParams& params, const data::WindowDataset& train_set,
                  const data::WindowDataset& val_set, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

// "gate.z.cross.l0.weights" -> "gate.z.cross"
std::string parameter_group(const std::string& name);

struct NamedArray {
  std::string name;
  Shape shape;
  Vector values;
};

struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> config;
  Index epoch = 0;
  double best_val = 0;
  Index adam_step = 0;
  std::vector<NamedArray> params, adam_m, adam_v;
};

inline constexpr std::string_view kCheckpointMagic = "DSTCGCN-CKPT v1";

Checkpoint make_checkpoint(const ModelParams& params, const AdamState& adam,
                           std::vector<std::pair<std::string, std::string>> config, Index epoch,
                           double best_val);
std::string format_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view text);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies checkpoint values into a model built from the same configuration.
// Name or shape mismatches raise VersionError.
void restore_parameters(const Checkpoint& ckpt, ModelParams& params);
AdamState restore_adam(const Checkpoint& ckpt, const ModelParams& params);

struct EvalReport {
  data::Segment segment;
  Index windows = 0;
  Metrics overall;
  std::vector<Metrics> per_horizon;
};

// Predictions for every window of `dataset` as [window][h][n][f] values in
// original units.
std::vector<double> predict_denormalized(const ModelParams& params,
                                         const data::WindowDataset& dataset,
                                         const data::NormStats& stats, Index batch_size);

// Targets of every window in original units, same layout as predictions.
std::vector<double> targets_denormalized(const data::WindowDataset& dataset,
                                         const data::NormStats& stats);

EvalReport score_predictions(std::span<const double> pred, std::span<const double> truth,
                             const data::WindowDataset& dataset, double mape_threshold);

EvalReport evaluate(const ModelParams& params, const data::WindowDataset& dataset,
                    const data::NormStats& stats, double mape_threshold, Index batch_size);

}  // namespace dstcgcn
