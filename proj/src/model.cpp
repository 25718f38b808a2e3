#include "dstcgcn/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "dstcgcn/init.hpp"
#include "dstcgcn/numfmt.hpp"
#include "dstcgcn/ops.hpp"

namespace dstcgcn {

namespace {

constexpr std::array<Preset, 7> kPresets{{
    {"pems03", 12, 32, 1, 64, 3},
    {"pems04", 10, 16, 2, 64, 3},
    {"pems07", 6, 32, 1, 32, 3},
    {"pems08", 12, 8, 2, 64, 3},
    {"metr-la", 10, 32, 2, 64, 2},
    {"pems-bay", 8, 16, 2, 32, 3},
    {"tiny", 4, 8, 1, 16, 2},
}};

void require_positive(Index value, const char* field) {
  if (value < 1) {
    throw ConfigError(std::string(field) + " must be at least 1, got " + std::to_string(value));
  }
}

Index selector_inputs(const ModelConfig& c) {
  return c.ablation.temporal_norm ? 2 * c.in_channels : c.in_channels;
}

Index gate_input(const ModelConfig& c, Index layer) {
  return layer == 0 ? c.in_channels + c.hidden : c.hidden;
}

GateParams make_gate(const ModelConfig& c, std::mt19937_64& rng) {
  GateParams g;
  for (Index l = 0; l < c.layers; ++l) {
    g.spatial.push_back(make_kernels(c.embed_dim, gate_input(c, l), c.hidden, rng));
  }
  if (c.ablation.cross_graph) {
    for (Index l = 0; l < c.layers; ++l) {
      g.cross.push_back(make_kernels(c.embed_dim, gate_input(c, l), c.hidden, rng));
    }
    g.fusion = make_fusion(c.hidden, rng);
  }
  return g;
}

void register_gate(std::vector<ParamEntry>& out, const std::string& prefix, const GateParams& g) {
  for (std::size_t l = 0; l < g.spatial.size(); ++l) {
    const std::string base = prefix + ".spatial.l" + std::to_string(l);
    out.push_back({base + ".weights", g.spatial[l].weights});
    out.push_back({base + ".bias", g.spatial[l].bias});
  }
  for (std::size_t l = 0; l < g.cross.size(); ++l) {
    const std::string base = prefix + ".cross.l" + std::to_string(l);
    out.push_back({base + ".weights", g.cross[l].weights});
    out.push_back({base + ".bias", g.cross[l].bias});
  }
  if (g.fusion.weight.defined()) {
    out.push_back({prefix + ".fusion.weight", g.fusion.weight});
    out.push_back({prefix + ".fusion.bias", g.fusion.bias});
  }
}

Tensor run_layers(const std::vector<DecompKernels>& kernels, const Tensor& embedding, Tensor h,
                  const std::function<Tensor(const Tensor&, const NodeParams&, Activation)>& conv) {
  for (std::size_t l = 0; l < kernels.size(); ++l) {
    const Activation act = l + 1 < kernels.size() ? Activation::relu : Activation::identity;
    h = conv(h, generate_params(embedding, kernels[l]), act);
  }
  return h;
}

}  // namespace

SelectionMode parse_selection_mode(std::string_view text) {
  if (text == "fft") return SelectionMode::fft;
  if (text == "random") return SelectionMode::random;
  if (text == "latest") return SelectionMode::latest;
  throw ConfigError("ablation.selection: unknown selection mode '" + std::string(text) + "' (fft|random|latest)");
}

std::string_view to_string(SelectionMode mode) {
  switch (mode) {
    case SelectionMode::fft: return "fft";
    case SelectionMode::random: return "random";
    case SelectionMode::latest: return "latest";
  }
  return "fft";
}

void ModelConfig::validate() const {
  require_positive(nodes, "model nodes");
  require_positive(in_channels, "input channels");
  require_positive(out_channels, "data.output_dim");
  require_positive(horizon, "data.horizon");
  require_positive(embed_dim, "model.embed_dim");
  require_positive(selector_hidden, "model.selector_hidden");
  require_positive(layers, "model.layers");
  require_positive(hidden, "model.hidden");
  require_positive(tau, "model.tau");
  if (input_len < 2) throw ConfigError("data.input_len must be at least 2");
  if (out_channels > in_channels) {
    throw ConfigError("data.output_dim cannot exceed the number of input channels");
  }
  if (tau > input_len) {
    throw ConfigError("model.tau " + std::to_string(tau) + " exceeds data.input_len " +
                      std::to_string(input_len));
  }
  if (selector_modes < 1 || selector_modes > selector_hidden / 2 + 1) {
    throw ConfigError("model.selector_modes must lie in [1, " +
                      std::to_string(selector_hidden / 2 + 1) + "]");
  }
}

std::span<const Preset> presets() { return kPresets; }

const Preset& find_preset(std::string_view name) {
  for (const Preset& p : kPresets) {
    if (p.name == name) return p;
  }
  std::string known;
  for (const Preset& p : kPresets) known += (known.empty() ? "" : "|") + std::string(p.name);
  throw ConfigError("unknown model.preset '" + std::string(name) + "' (" + known + ")");
}

void apply_preset(ModelConfig& config, const Preset& preset) {
  config.embed_dim = preset.embed_dim;
  config.selector_hidden = preset.selector_hidden;
  config.selector_modes = std::max<Index>(1, preset.selector_hidden / 2);
  config.layers = preset.layers;
  config.hidden = preset.hidden;
  config.tau = preset.tau;
}

ModelParams make_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.config = config;
  p.embeddings = make_embeddings(config.nodes, config.input_len, config.embed_dim, rng);
  if (config.ablation.selection == SelectionMode::fft) {
    p.selector = make_selector_params(selector_inputs(config), config.selector_hidden,
                                      config.selector_modes, config.tau, rng);
  }
  p.z = make_gate(config, rng);
  p.r = make_gate(config, rng);
  p.c = make_gate(config, rng);
  const Index out = config.horizon * config.out_channels;
  p.readout_weight = uniform_param({config.hidden, out}, xavier_bound(config.hidden, out), rng);
  p.readout_bias = Tensor::zeros({out}, true);

  std::vector<Index> steps(static_cast<std::size_t>(config.input_len));
  for (Index t = 0; t < config.input_len; ++t) {
    std::iota(steps.begin(), steps.end(), Index{0});
    std::shuffle(steps.begin(), steps.end(), rng);
    std::vector<Index> pick(steps.begin(), steps.begin() + config.tau);
    std::sort(pick.begin(), pick.end());
    p.random_selection.insert(p.random_selection.end(), pick.begin(), pick.end());
  }
  const Index registered = p.parameter_count();
  if (registered != expected_parameter_count(config)) {
    throw ContractError("parameter registry holds " + std::to_string(registered) +
                        " values, expected " + std::to_string(expected_parameter_count(config)));
  }
  return p;
}

std::vector<ParamEntry> ModelParams::registry() const {
  std::vector<ParamEntry> out;
  out.push_back({"embed.node", embeddings.node});
  out.push_back({"embed.time", embeddings.time});
  if (selector.wq.defined()) {
    out.push_back({"selector.wq", selector.wq});
    out.push_back({"selector.bq", selector.bq});
    out.push_back({"selector.wk", selector.wk});
    out.push_back({"selector.bk", selector.bk});
  }
  register_gate(out, "gate.z", z);
  register_gate(out, "gate.r", r);
  register_gate(out, "gate.c", c);
  out.push_back({"readout.weight", readout_weight});
  out.push_back({"readout.bias", readout_bias});
  return out;
}

Index ModelParams::parameter_count() const {
  Index total = 0;
  for (const ParamEntry& e : registry()) total += e.tensor.size();
  return total;
}

Index expected_parameter_count(const ModelConfig& c) {
  Index total = c.embed_dim * (c.nodes + c.input_len);
  if (c.ablation.selection == SelectionMode::fft) {
    total += 2 * (selector_inputs(c) * c.selector_hidden + c.selector_hidden);
  }
  Index per_gate = 0;
  const Index branches = c.ablation.cross_graph ? 2 : 1;
  for (Index l = 0; l < c.layers; ++l) {
    per_gate += branches * kernel_param_count(c.embed_dim, gate_input(c, l), c.hidden);
  }
  if (c.ablation.cross_graph) per_gate += 2 * c.hidden * c.hidden + c.hidden;
  total += 3 * per_gate;
  const Index out = c.horizon * c.out_channels;
  return total + c.hidden * out + out;
}

SelectionResult run_selection(const ModelParams& params, const Tensor& x) {
  const ModelConfig& c = params.config;
  const Index batch = x.dim(0), steps = c.input_len, tau = c.tau;
  SelectionResult out;
  switch (c.ablation.selection) {
    case SelectionMode::fft: {
      const Tensor enriched = c.ablation.temporal_norm ? enrich(x, temporal_normalize(x)) : x;
      out.scores = attention_scores(enriched, params.selector);
      Selection sel = select_top_tau(out.scores, tau, c.weight_mode);
      out.indices = std::move(sel.indices);
      out.weights = std::move(sel.weights);
      return out;
    }
    case SelectionMode::random:
      for (Index b = 0; b < batch; ++b) {
        out.indices.insert(out.indices.end(), params.random_selection.begin(),
                           params.random_selection.end());
      }
      break;
    case SelectionMode::latest:
      for (Index r = 0; r < batch * steps; ++r) {
        for (Index k = 0; k < tau; ++k) out.indices.push_back(steps - tau + k);
      }
      break;
  }
  out.weights = Tensor::full({batch, steps, tau}, 1.0 / static_cast<double>(tau));
  return out;
}

Tensor gate_preactivation(const GateParams& gate, const Tensor& x_t, const Tensor& x_sel_t,
                          const Tensor& h_prev, const StepGraphs& graphs, const Ablation& ablation) {
  const Tensor spatial = run_layers(
      gate.spatial, graphs.embedding, concat_last(x_t, h_prev),
      [&](const Tensor& h, const NodeParams& p, Activation act) {
        return spatial_graph_conv(graphs.spatial, h, p, act);
      });
  if (!ablation.cross_graph) return spatial;
  const Index tau = x_sel_t.dim(1);
  const Tensor cross = run_layers(
      gate.cross, graphs.embedding, concat_last(x_sel_t, repeat_axis(h_prev, 1, tau)),
      [&](const Tensor& h, const NodeParams& p, Activation act) {
        return cross_graph_conv(graphs.spatial, graphs.diagonals, h, p, act);
      });
  return fuse_outputs(cross, spatial, gate.fusion);
}

Tensor gate_combine(const Tensor& z, const Tensor& c, const Tensor& h_prev) {
  return z * h_prev + affine(z, -1.0, 1.0) * c;
}

Tensor gru_step(const ModelParams& params, const Tensor& x_t, const Tensor& x_sel_t,
                const Tensor& h_prev, const StepGraphs& graphs) {
  const Ablation& ab = params.config.ablation;
  const Tensor z = sigmoid(gate_preactivation(params.z, x_t, x_sel_t, h_prev, graphs, ab));
  const Tensor r = sigmoid(gate_preactivation(params.r, x_t, x_sel_t, h_prev, graphs, ab));
  const Tensor c = tanh(gate_preactivation(params.c, x_t, x_sel_t, r * h_prev, graphs, ab));
  return gate_combine(z, c, h_prev);
}

Tensor forward(const ModelParams& params, const Tensor& x, ForwardTrace* trace) {
  const ModelConfig& c = params.config;
  const Shape expect{x.rank() == 4 ? x.dim(0) : 0, c.input_len, c.nodes, c.in_channels};
  if (x.rank() != 4 || x.shape() != expect) {
    throw DimensionError("forward: expected input [B, " + std::to_string(c.input_len) + ", " +
                         std::to_string(c.nodes) + ", " + std::to_string(c.in_channels) +
                         "], got " + to_string(x.shape()));
  }
  const Index batch = x.dim(0), steps = c.input_len, tau = c.tau, nodes = c.nodes;
  SelectionResult sel = run_selection(params, x);
  const Tensor x_sel = gather_selected(x, sel.indices, tau);
  const Tensor static_graph =
      c.ablation.dynamic_spatial ? Tensor() : spatial_graph(params.embeddings.node);

  Tensor h = Tensor::zeros({batch, nodes, c.hidden});
  std::vector<Index> step_indices(static_cast<std::size_t>(batch * tau));
  for (Index t = 0; t < steps; ++t) {
    StepGraphs g;
    g.embedding = embed_time_step(params.embeddings, t);
    g.spatial = c.ablation.dynamic_spatial ? spatial_graph(g.embedding) : static_graph;
    if (c.ablation.cross_graph) {
      if (c.ablation.dynamic_temporal) {
        for (Index b = 0; b < batch; ++b) {
          std::copy_n(sel.indices.begin() + (b * steps + t) * tau, tau,
                      step_indices.begin() + b * tau);
        }
        g.diagonals = temporal_connection_diagonals(g.spatial, take(sel.weights, 1, t), step_indices);
      } else {
        g.diagonals = Tensor::full({batch, tau, nodes}, 1.0);
      }
    }
    if (trace) trace->spatial_graphs.push_back(g.spatial.detach());
    h = gru_step(params, take(x, 1, t), take(x_sel, 1, t), h, g);
  }
  const Tensor flat = add_broadcast(linear(h, params.readout_weight), params.readout_bias);
  const Tensor split = reshape(flat, {batch, nodes, c.horizon, c.out_channels});
  const std::array<std::size_t, 4> order{0, 2, 1, 3};
  if (trace) trace->selection = std::move(sel);
  return permute(split, order);
}

Tensor l1_loss(const Tensor& pred, const Tensor& truth) {
  if (pred.shape() != truth.shape()) {
    throw ContractError("l1_loss: prediction " + to_string(pred.shape()) + " and target " +
                        to_string(truth.shape()) + " differ");
  }
  return mean(abs(pred - truth));
}

Metrics compute_metrics(std::span<const double> pred, std::span<const double> truth,
                        double mape_threshold) {
  if (pred.size() != truth.size() || pred.empty()) {
    throw ContractError("compute_metrics: prediction and target sizes differ or are empty");
  }
  double abs_sum = 0, sq_sum = 0, pct_sum = 0;
  std::size_t pct_count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double err = pred[i] - truth[i];
    abs_sum += std::abs(err);
    sq_sum += err * err;
    if (std::abs(truth[i]) > mape_threshold) {
      pct_sum += std::abs(err / truth[i]);
      ++pct_count;
    }
  }
  const double n = static_cast<double>(pred.size());
  Metrics m;
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);
  if (pct_count > 0) m.mape = 100.0 * pct_sum / static_cast<double>(pct_count);
  return m;
}

std::string format_mape(const std::optional<double>& mape) {
  return mape ? format_double(*mape) : std::string("undefined");
}

}  // namespace dstcgcn
