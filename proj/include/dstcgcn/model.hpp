#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dstcgcn/gconv.hpp"
#include "dstcgcn/graphs.hpp"
#include "dstcgcn/selector.hpp"

namespace dstcgcn {

enum class SelectionMode { fft, random, latest };

SelectionMode parse_selection_mode(std::string_view text);
std::string_view to_string(SelectionMode mode);

// Switches that remove one mechanism each. All on is the full model.
struct Ablation {
  SelectionMode selection = SelectionMode::fft;
  bool temporal_norm = true;     // off: the selector scores raw inputs
  bool dynamic_spatial = true;   // off: one graph softmax(E_N E_N^T) for all steps
  bool dynamic_temporal = true;  // off: temporal blocks are identities
  bool cross_graph = true;       // off: spatial branch only, no fusion
};

struct ModelConfig {
  Index nodes = 0;
  Index input_len = 12;    // T
  Index horizon = 12;      // H
  Index in_channels = 1;   // C
  Index out_channels = 1;  // F
  Index embed_dim = 4;
  Index selector_hidden = 8;
  Index selector_modes = 4;
  Index layers = 1;
  Index hidden = 16;
  Index tau = 2;
  WeightMode weight_mode = WeightMode::softmax;
  Ablation ablation;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Named hyperparameter sets. The retained mode count is half the selector
// width.
struct Preset {
  std::string_view name;
  Index embed_dim;
  Index selector_hidden;
  Index layers;
  Index hidden;
  Index tau;
};

std::span<const Preset> presets();
const Preset& find_preset(std::string_view name);
void apply_preset(ModelConfig& config, const Preset& preset);

struct GateParams {
  std::vector<DecompKernels> spatial;  // one per layer
  std::vector<DecompKernels> cross;    // empty without the cross branch
  FusionParams fusion;                 // undefined without the cross branch
};

struct ParamEntry {
  std::string name;
  Tensor tensor;
};

struct ModelParams {
  ModelConfig config;
  Embeddings embeddings;
  SelectorParams selector;  // undefined unless selection is fft
  GateParams z, r, c;
  Tensor readout_weight;  // [d_hid, H*F]
  Tensor readout_bias;    // [H*F]
  // Fixed per-step indices for random selection: T * tau.
  std::vector<Index> random_selection;

  // Every trainable tensor exactly once, in a fixed order.
  std::vector<ParamEntry> registry() const;
  Index parameter_count() const;
};

ModelParams make_model(const ModelConfig& config, std::uint64_t seed);

// Closed-form trainable parameter count for a configuration.
Index expected_parameter_count(const ModelConfig& config);

// Graphs for one time step.
struct StepGraphs {
  Tensor embedding;  // E^t [N, d_e]
  Tensor spatial;    // A_S [N, N]
  Tensor diagonals;  // temporal connection diagonals [B, tau, N]
};

struct SelectionResult {
  Tensor scores;  // [B, T, T]; undefined unless selection is fft
  std::vector<Index> indices;  // B * T * tau
  Tensor weights;              // [B, T, tau]
};

SelectionResult run_selection(const ModelParams& params, const Tensor& x);

// Spatial and (when enabled) cross branch for one gate, fused: [B, N, d_hid].
// x_t [B, N, C], x_sel_t [B, tau, N, C], h_prev [B, N, d_hid].
Tensor gate_preactivation(const GateParams& gate, const Tensor& x_t, const Tensor& x_sel_t,
                          const Tensor& h_prev, const StepGraphs& graphs, const Ablation& ablation);

// z * h_prev + (1 - z) * c
Tensor gate_combine(const Tensor& z, const Tensor& c, const Tensor& h_prev);

Tensor gru_step(const ModelParams& params, const Tensor& x_t, const Tensor& x_sel_t,
                const Tensor& h_prev, const StepGraphs& graphs);

struct ForwardTrace {
  SelectionResult selection;
  std::vector<Tensor> spatial_graphs;  // A_S per step
};

// x [B, T, N, C] -> predictions [B, H, N, F].
Tensor forward(const ModelParams& params, const Tensor& x, ForwardTrace* trace = nullptr);

// Mean absolute error over all elements.
Tensor l1_loss(const Tensor& pred, const Tensor& truth);

struct Metrics {
  double mae = 0;
  double rmse = 0;
  std::optional<double> mape;  // percent; empty when every target is masked
};

inline constexpr double kDefaultMapeThreshold = 1e-3;

// MAPE covers entries with |truth| > mape_threshold.
Metrics compute_metrics(std::span<const double> pred, std::span<const double> truth,
                        double mape_threshold = kDefaultMapeThreshold);

std::string format_mape(const std::optional<double>& mape);

}  // namespace dstcgcn
