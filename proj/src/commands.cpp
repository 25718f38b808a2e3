#include "dstcgcn/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <ostream>

#include "dstcgcn/baselines.hpp"
#include "dstcgcn/numfmt.hpp"

namespace dstcgcn {

namespace fs = std::filesystem;

namespace {

// Keys that shape the model or its inputs; a checkpoint records and enforces them.
bool fixed_by_checkpoint(std::string_view key) {
  return key.starts_with("model.") || key.starts_with("ablation.") ||
         key == "selector.weight_mode" || key == "data.input_len" || key == "data.horizon" ||
         key == "data.output_dim" || key == "seed";
}

// Output locations and evaluation settings do not change what training produces.
bool recorded_in_checkpoint(std::string_view key) {
  return key != "out.dir" && !key.starts_with("eval.") && !key.starts_with("inspect.");
}

fs::path out_dir(const RunConfig& c) {
  const fs::path dir = c.get("out.dir");
  if (dir.empty()) throw ConfigError("out.dir must not be empty");
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::string matrix_csv(Index rows, Index cols, const std::function<double(Index, Index)>& at) {
  std::string s;
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      if (j) s += ',';
      s += format_double(at(i, j));
    }
    s += '\n';
  }
  return s;
}

std::string metrics_row(const Metrics& m) {
  return format_double(m.mae) + "," + format_double(m.rmse) + "," + format_mape(m.mape);
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

fs::path checkpoint_path(const RunConfig& c) {
  if (c.is_set("eval.checkpoint")) return c.get("eval.checkpoint");
  return fs::path(c.get("out.dir")) / kCheckpointFile;
}

}  // namespace

data::WindowDataset PreparedData::windows(data::Segment seg) const {
  return data::WindowDataset(norm, seg, input_len, horizon, output_dim);
}

data::Segment PreparedData::segment(std::string_view name) const {
  if (name == "train") return split.train;
  if (name == "val") return split.val;
  if (name == "test") return split.test;
  throw ConfigError("eval.split: expected train, val or test, got '" + std::string(name) + "'");
}

PreparedData prepare_data(const RunConfig& c) {
  PreparedData d;
  d.input_len = c.get_index("data.input_len");
  d.horizon = c.get_index("data.horizon");
  d.output_dim = c.get_index("data.output_dim");
  if (d.input_len < 2) throw ConfigError("data.input_len must be at least 2");
  if (d.horizon < 1) throw ConfigError("data.horizon must be at least 1");
  if (c.is_set("data.path")) {
    const fs::path path = c.get("data.path");
    if (!fs::is_regular_file(path)) throw ConfigError("data.path: no such file '" + path.string() + "'");
    d.raw = data::interpolate_missing(data::load_csv(path));
  } else {
    const Index nodes = c.get_index("data.synthetic.nodes");
    const Index steps = c.get_index("data.synthetic.steps");
    if (nodes < 2) throw ConfigError("data.synthetic.nodes must be at least 2");
    if (steps < 600) throw ConfigError("data.synthetic.steps must be at least 600");
    const data::SynthConfig sc = synth_config(c);
    if (!(std::abs(sc.ar) < 1.0)) throw ConfigError("data.synthetic.ar must lie in (-1, 1)");
    d.raw = data::synth_generate(nodes, steps, synth_seed(c), sc);
  }
  if (d.output_dim < 1 || d.output_dim > d.raw.channels) {
    throw ConfigError("data.output_dim must lie in [1, " + std::to_string(d.raw.channels) + "]");
  }
  data::SplitRatios ratios;
  try {
    ratios = data::SplitRatios::parse(c.get("split.ratios"));
    d.split = data::chronological_split(d.raw.steps, ratios, d.input_len + d.horizon);
  } catch (const ContractError& e) {
    throw ConfigError(std::string("split.ratios: ") + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("split.ratios: ") + e.what());
  }
  d.stats = data::fit_zscore(d.raw, d.split.train);
  d.norm = data::apply_zscore(d.raw, d.stats);
  return d;
}

fs::path eval_overall_file(const RunConfig& c) {
  return fs::path(c.get("out.dir")) / ("eval_" + c.get("eval.split") + "_overall.csv");
}

fs::path eval_horizon_file(const RunConfig& c) {
  return fs::path(c.get("out.dir")) / ("eval_" + c.get("eval.split") + "_horizon.csv");
}

fs::path eval_summary_file(const RunConfig& c) {
  return fs::path(c.get("out.dir")) / ("eval_" + c.get("eval.split") + "_summary.txt");
}

void cmd_synth(const RunConfig& c, std::ostream& out) {
  if (c.is_set("data.path")) throw ConfigError("data.path: synth generates data; leave it unset");
  const PreparedData d = prepare_data(c);
  const fs::path path = out_dir(c) / kSyntheticFile;
  data::write_csv(d.raw, path);
  const Eigen::Map<const Vector> v(d.raw.values.data(), static_cast<Index>(d.raw.values.size()));
  const double mean = v.mean();
  const double sd = std::sqrt((v.array() - mean).square().mean());
  out << "wrote " << path.string() << "\n"
      << "nodes " << d.raw.nodes << ", steps " << d.raw.steps << ", seed " << synth_seed(c) << "\n"
      << "mean " << fixed(mean) << ", std " << fixed(sd) << ", min " << fixed(v.minCoeff())
      << ", max " << fixed(v.maxCoeff()) << "\n";
}

void cmd_train(const RunConfig& c, std::ostream& out) {
  const PreparedData d = prepare_data(c);
  const ModelConfig mc = model_config(c, d.raw.nodes, d.raw.channels);
  const TrainConfig tc = train_config(c);
  const fs::path dir = out_dir(c);
  ModelParams params = make_model(mc, c.seed());
  const data::WindowDataset train_set = d.windows(d.split.train);
  const data::WindowDataset val_set = d.windows(d.split.val);
  out << "training " << params.parameter_count() << " parameters on " << train_set.size()
      << " windows (" << val_set.size() << " validation)\n";
  const TrainResult r = train(params, train_set, val_set, tc, [&](const EpochLog& row) {
    out << "epoch " << row.epoch << "  train_l1 " << fixed(row.train_l1, 6) << "  val_l1 "
        << fixed(row.val_l1, 6) << "\n";
    out.flush();
  });

  std::vector<std::pair<std::string, std::string>> recorded;
  const std::pair<const char*, Index> resolved[] = {
      {"model.embed_dim", mc.embed_dim}, {"model.selector_hidden", mc.selector_hidden},
      {"model.selector_modes", mc.selector_modes}, {"model.layers", mc.layers},
      {"model.hidden", mc.hidden}, {"model.tau", mc.tau}};
  for (auto& [k, v] : c.entries()) {
    if (!recorded_in_checkpoint(k)) continue;
    for (const auto& [name, value] : resolved) {
      if (k == name) v = std::to_string(value);
    }
    recorded.emplace_back(k, v);
  }
  save_checkpoint(make_checkpoint(params, r.best_adam, std::move(recorded), r.best_epoch, r.best_val),
                  dir / kCheckpointFile);
  write_text(dir / kTrainLogFile, format_epoch_log(r.log));
  out << "best epoch " << r.best_epoch << ", val_l1 " << fixed(r.best_val, 6) << "\n"
      << "wrote " << (dir / kCheckpointFile).string() << " and " << (dir / kTrainLogFile).string()
      << "\n";
}

LoadedModel load_model(const RunConfig& c) {
  const Checkpoint ck = load_checkpoint(checkpoint_path(c));
  LoadedModel m{c, {}, {}};
  for (const auto& [key, value] : ck.config) {
    if (!fixed_by_checkpoint(key)) continue;
    if (c.is_set(key) && c.get(key) != value) {
      throw VersionError("checkpoint was trained with " + key + "=" + value + " but the config sets " +
                         key + "=" + c.get(key));
    }
    try {
      m.config.set(key, value);
    } catch (const ConfigError&) {
      throw VersionError("checkpoint records unknown setting '" + key + "'");
    }
  }
  m.data = prepare_data(m.config);
  m.params = make_model(model_config(m.config, m.data.raw.nodes, m.data.raw.channels), m.config.seed());
  restore_parameters(ck, m.params);
  return m;
}

void cmd_eval(const RunConfig& c, std::ostream& out) {
  const LoadedModel m = load_model(c);
  const PreparedData& d = m.data;
  const ModelParams& params = m.params;
  const std::string split = c.get("eval.split");
  const data::WindowDataset ds = d.windows(d.segment(split));
  const double threshold = c.get_double("eval.mape_threshold");
  const Index batch = c.get_index("train.batch_size");
  if (batch < 1) throw ConfigError("train.batch_size must be at least 1");
  out_dir(c);

  const EvalReport model = evaluate(params, ds, d.stats, threshold, batch);
  const std::vector<double> truth = targets_denormalized(ds, d.stats);
  const EvalReport ha = score_predictions(historical_average(d.raw, d.split.train, ds), truth, ds, threshold);
  const EvalReport last = score_predictions(persistence(d.raw, ds), truth, ds, threshold);

  std::string overall = "method,mae,rmse,mape\n";
  overall += "model," + metrics_row(model.overall) + "\n";
  overall += "historical_average," + metrics_row(ha.overall) + "\n";
  overall += "persistence," + metrics_row(last.overall) + "\n";
  write_text(eval_overall_file(c), overall);

  std::string horizon = "horizon,mae,rmse,mape\n";
  for (std::size_t h = 0; h < model.per_horizon.size(); ++h) {
    horizon += std::to_string(h + 1) + "," + metrics_row(model.per_horizon[h]) + "\n";
  }
  write_text(eval_horizon_file(c), horizon);

  auto line = [](const char* name, const Metrics& m) {
    std::string mape = m.mape ? fixed(*m.mape, 2) + "%" : format_mape(m.mape);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-20s MAE %10.4f  RMSE %10.4f  MAPE %s\n", name, m.mae, m.rmse,
                  mape.c_str());
    return std::string(buf);
  };
  std::string summary = split + " split: " + std::to_string(ds.size()) + " windows, steps [" +
                        std::to_string(ds.segment().begin) + ", " + std::to_string(ds.segment().end) +
                        ")\n";
  summary += line("model", model.overall);
  summary += line("historical_average", ha.overall);
  summary += line("persistence", last.overall);
  write_text(eval_summary_file(c), summary);
  out << summary << "wrote " << eval_overall_file(c).string() << ", "
      << eval_horizon_file(c).string() << ", " << eval_summary_file(c).string() << "\n";
}

void cmd_inspect(const RunConfig& c, std::ostream& out) {
  const LoadedModel m = load_model(c);
  const PreparedData& d = m.data;
  const ModelParams& params = m.params;
  if (params.config.ablation.selection != SelectionMode::fft) {
    throw ConfigError("inspect needs ablation.selection=fft to dump attention scores");
  }
  const data::WindowDataset ds = d.windows(d.split.test);
  const Index sample = c.get_index("inspect.sample");
  if (sample < 0 || sample >= ds.size()) {
    throw ConfigError("inspect.sample " + std::to_string(sample) + " is outside the test split [0, " +
                      std::to_string(ds.size()) + ")");
  }
  const fs::path dir = out_dir(c) / kInspectDir;
  fs::create_directories(dir);

  ForwardTrace trace;
  {
    NoGradGuard no_grad;
    const std::vector<Index> ids{sample};
    forward(params, ds.batch(ids).inputs, &trace);
  }
  const Index steps = params.config.input_len, tau = params.config.tau, n = params.config.nodes;
  const int width = steps > 100 ? 3 : 2;
  for (Index t = 0; t < steps; ++t) {
    const Tensor& a = trace.spatial_graphs[static_cast<std::size_t>(t)];
    char name[48];
    std::snprintf(name, sizeof name, "spatial_t%0*ld.csv", width, static_cast<long>(t));
    write_text(dir / name, matrix_csv(n, n, [&](Index i, Index j) { return a.data()[i * n + j]; }));
  }
  const Vector& scores = trace.selection.scores.data();
  write_text(dir / "scores.csv",
             matrix_csv(steps, steps, [&](Index i, Index j) { return scores[i * steps + j]; }));
  const auto& idx = trace.selection.indices;
  std::string indices;
  for (Index t = 0; t < steps; ++t) {
    for (Index k = 0; k < tau; ++k) {
      if (k) indices += ',';
      indices += std::to_string(idx[static_cast<std::size_t>(t * tau + k)]);
    }
    indices += '\n';
  }
  write_text(dir / "selected_indices.csv", indices);
  const Vector& w = trace.selection.weights.data();
  write_text(dir / "selected_weights.csv",
             matrix_csv(steps, tau, [&](Index i, Index k) { return w[i * tau + k]; }));
  out << "sample " << sample << " (input steps starting at " << ds.window_start(sample) << ")\n"
      << "wrote " << steps + 3 << " files to " << dir.string() << "\n";
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const DivergenceError*>(&e) || dynamic_cast<const NumericError*>(&e)) return 3;
  return 2;
}

}  // namespace dstcgcn
