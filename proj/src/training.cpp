#include "dstcgcn/training.hpp"

#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "dstcgcn/numfmt.hpp"
#include "dstcgcn/ops.hpp"

namespace dstcgcn {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t epoch_seed(std::uint64_t seed, Index epoch) {
  return seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(epoch + 1));
}

[[noreturn]] void diverged(std::span<const ParamEntry> params, const std::string& detail) {
  for (const ParamEntry& p : params) {
    if (!p.tensor.data().allFinite()) {
      throw DivergenceError("training diverged: non-finite values in parameter group '" +
                            parameter_group(p.name) + "' (" + p.name + ")");
    }
  }
  for (const ParamEntry& p : params) {
    if (!p.tensor.grad().allFinite()) {
      throw DivergenceError("training diverged: non-finite gradient in parameter group '" +
                            parameter_group(p.name) + "' (" + p.name + ")");
    }
  }
  // Every value is still finite, so some product overflowed: point at the
  // group holding the largest magnitude.
  const ParamEntry* largest = nullptr;
  double peak = -1;
  for (const ParamEntry& p : params) {
    const double m = p.tensor.data().cwiseAbs().maxCoeff();
    if (m > peak) {
      peak = m;
      largest = &p;
    }
  }
  std::string where;
  if (largest) {
    where = "; largest parameter magnitude " + format_double(peak) + " in group '" +
            parameter_group(largest->name) + "' (" + largest->name + ")";
  }
  throw DivergenceError("training diverged: " + detail + where);
}

}  // namespace

AdamState make_adam_state(std::span<const ParamEntry> params) {
  AdamState s;
  for (const ParamEntry& p : params) {
    s.m.push_back(Vector::Zero(p.tensor.size()));
    s.v.push_back(Vector::Zero(p.tensor.size()));
  }
  return s;
}

void adam_step(std::span<const ParamEntry> params, std::span<const Vector* const> grads,
               AdamState& state, const AdamConfig& config) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw ContractError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                        std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i] || grads[i]->size() != params[i].tensor.size()) {
      throw ContractError("adam_step: missing gradient for parameter '" + params[i].name + "'");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Vector& g = *grads[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g.cwiseProduct(g);
    Tensor p = params[i].tensor;
    p.mutable_data().array() -=
        config.lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + config.eps);
  }
}

void clip_gradients(std::span<Vector> grads, double max_norm) {
  double sq = 0;
  for (const Vector& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  for (Vector& g : grads) g *= max_norm / norm;
}

std::string format_epoch_log(std::span<const EpochLog> rows) {
  std::string out = "epoch,train_l1,val_l1,seconds\n";
  for (const EpochLog& r : rows) {
    out += std::to_string(r.epoch) + "," + format_double(r.train_l1) + "," +
           format_double(r.val_l1) + "," + format_double(r.seconds) + "\n";
  }
  return out;
}

std::string parameter_group(const std::string& name) {
  const auto last = name.rfind('.');
  if (last == std::string::npos) return name;
  std::string group = name.substr(0, last);
  const auto layer = group.rfind(".l");
  if (layer != std::string::npos && layer + 2 < group.size() &&
      std::isdigit(static_cast<unsigned char>(group[layer + 2]))) {
    group.resize(layer);
  }
  return group;
}

double dataset_l1(const ModelParams& params, const data::WindowDataset& dataset, Index batch_size) {
  NoGradGuard no_grad;
  double total = 0;
  Index count = 0;
  for (const auto& ids : dataset.batches(batch_size, std::nullopt)) {
    const data::WindowBatch b = dataset.batch(ids);
    total += (forward(params, b.inputs).data() - b.targets.data()).cwiseAbs().sum();
    count += b.targets.size();
  }
  return total / static_cast<double>(count);
}

TrainResult train(ModelParams& params, const data::WindowDataset& train_set,
                  const data::WindowDataset& val_set, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  if (config.lr <= 0) throw ConfigError("train.lr must be positive");
  if (config.batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (config.epochs < 1) throw ConfigError("train.epochs must be at least 1");
  const std::vector<ParamEntry> registry = params.registry();
  AdamState adam = make_adam_state(registry);
  const AdamConfig adam_config{config.lr};
  TrainResult result;
  result.best_val = std::numeric_limits<double>::infinity();
  const auto run_start = Clock::now();

  std::vector<Vector> grads(registry.size());
  std::vector<const Vector*> grad_ptrs(registry.size());
  for (Index epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    EpochLog row;
    row.epoch = epoch;
    double total = 0;
    Index windows = 0;
    for (const auto& ids : train_set.batches(config.batch_size, epoch_seed(config.seed, epoch))) {
      const data::WindowBatch batch = train_set.batch(ids);
      for (const ParamEntry& p : registry) {
        Tensor t = p.tensor;
        t.zero_grad();
      }
      Tensor loss;
      try {
        loss = l1_loss(forward(params, batch.inputs), batch.targets);
      } catch (const NumericError& e) {
        diverged(registry, e.what());
      }
      backward(loss);
      for (std::size_t i = 0; i < registry.size(); ++i) {
        grads[i] = registry[i].tensor.grad();
        if (!grads[i].allFinite()) diverged(registry, "non-finite gradient");
        grad_ptrs[i] = &grads[i];
      }
      if (config.clip > 0) clip_gradients(grads, config.clip);
      adam_step(registry, grad_ptrs, adam, adam_config);
      for (const ParamEntry& p : registry) {
        if (!p.tensor.data().allFinite()) diverged(registry, "non-finite parameter");
      }
      total += loss.item() * static_cast<double>(ids.size());
      windows += static_cast<Index>(ids.size());
      ++row.steps;
    }
    row.train_l1 = total / static_cast<double>(windows);
    row.val_l1 = dataset_l1(params, val_set, config.batch_size);
    if (!std::isfinite(row.val_l1)) diverged(registry, "non-finite validation loss");
    if (config.log_wall_time) {
      row.seconds = std::chrono::duration<double>(Clock::now() - epoch_start).count();
    }
    if (row.val_l1 < result.best_val) {
      result.best_val = row.val_l1;
      result.best_epoch = epoch;
      result.best_values.clear();
      for (const ParamEntry& p : registry) result.best_values.push_back(p.tensor.data());
      result.best_adam = adam;
    }
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  for (std::size_t i = 0; i < registry.size(); ++i) {
    Tensor t = registry[i].tensor;
    t.mutable_data() = result.best_values[i];
  }
  result.wall_seconds = std::chrono::duration<double>(Clock::now() - run_start).count();
  return result;
}

Checkpoint make_checkpoint(const ModelParams& params, const AdamState& adam,
                           std::vector<std::pair<std::string, std::string>> config, Index epoch,
                           double best_val) {
  Checkpoint c;
  c.config = std::move(config);
  c.epoch = epoch;
  c.best_val = best_val;
  c.adam_step = adam.step;
  const auto registry = params.registry();
  for (std::size_t i = 0; i < registry.size(); ++i) {
    const ParamEntry& p = registry[i];
    c.params.push_back({p.name, p.tensor.shape(), p.tensor.data()});
    if (i < adam.m.size()) {
      c.adam_m.push_back({p.name, p.tensor.shape(), adam.m[i]});
      c.adam_v.push_back({p.name, p.tensor.shape(), adam.v[i]});
    }
  }
  return c;
}

namespace {

void write_array(std::string& out, std::string_view tag, const NamedArray& a) {
  out += std::string(tag) + " " + a.name + " " + std::to_string(a.shape.size());
  for (Index d : a.shape) out += " " + std::to_string(d);
  out += "\n";
  for (Index i = 0; i < a.values.size(); ++i) {
    if (i) out += ' ';
    out += format_double(a.values[i]);
  }
  out += "\n";
}

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  std::string_view next() {
    if (pos_ >= text_.size()) throw VersionError("checkpoint: unexpected end of file");
    const auto end = text_.find('\n', pos_);
    const auto stop = end == std::string_view::npos ? text_.size() : end;
    std::string_view line = text_.substr(pos_, stop - pos_);
    pos_ = stop + 1;
    ++line_no_;
    return line;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw VersionError("checkpoint line " + std::to_string(line_no_) + ": " + what);
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  Index line_no_ = 0;
};

std::vector<std::string> split_words(std::string_view line) {
  std::vector<std::string> words;
  std::istringstream in{std::string(line)};
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

Index parse_index(LineReader& r, const std::string& word) {
  Index v = 0;
  const auto res = std::from_chars(word.data(), word.data() + word.size(), v);
  if (res.ec != std::errc() || res.ptr != word.data() + word.size()) r.fail("bad integer '" + word + "'");
  return v;
}

double parse_value(LineReader& r, const std::string& word) {
  const auto v = parse_double(word);
  if (!v) r.fail("bad number '" + word + "'");
  return *v;
}

std::vector<NamedArray> read_arrays(LineReader& r, std::string_view tag, Index count) {
  std::vector<NamedArray> out;
  for (Index i = 0; i < count; ++i) {
    const auto head = split_words(r.next());
    if (head.size() < 3 || head[0] != tag) r.fail("expected '" + std::string(tag) + "' record");
    NamedArray a;
    a.name = head[1];
    const Index rank = parse_index(r, head[2]);
    if (rank < 0 || static_cast<Index>(head.size()) != 3 + rank) r.fail("rank does not match dims");
    for (Index d = 0; d < rank; ++d) a.shape.push_back(parse_index(r, head[static_cast<std::size_t>(3 + d)]));
    const auto values = split_words(r.next());
    if (static_cast<Index>(values.size()) != numel(a.shape)) {
      r.fail("parameter '" + a.name + "' expects " + std::to_string(numel(a.shape)) + " values");
    }
    a.values.resize(static_cast<Index>(values.size()));
    for (std::size_t k = 0; k < values.size(); ++k) a.values[static_cast<Index>(k)] = parse_value(r, values[k]);
    out.push_back(std::move(a));
  }
  return out;
}

Index read_count(LineReader& r, std::string_view key) {
  const auto words = split_words(r.next());
  if (words.size() != 2 || words[0] != key) r.fail("expected '" + std::string(key) + " <n>'");
  return parse_index(r, words[1]);
}

}  // namespace

std::string format_checkpoint(const Checkpoint& c) {
  std::string out = std::string(kCheckpointMagic) + "\n";
  out += "config " + std::to_string(c.config.size()) + "\n";
  for (const auto& [k, v] : c.config) out += k + "=" + v + "\n";
  out += "epoch " + std::to_string(c.epoch) + "\n";
  out += "best_val " + format_double(c.best_val) + "\n";
  out += "adam_step " + std::to_string(c.adam_step) + "\n";
  out += "params " + std::to_string(c.params.size()) + "\n";
  for (const NamedArray& a : c.params) write_array(out, "param", a);
  out += "adam " + std::to_string(c.adam_m.size()) + "\n";
  for (std::size_t i = 0; i < c.adam_m.size(); ++i) {
    write_array(out, "m", c.adam_m[i]);
    write_array(out, "v", c.adam_v[i]);
  }
  out += "end\n";
  return out;
}

Checkpoint parse_checkpoint(std::string_view text) {
  LineReader r(text);
  if (r.next() != kCheckpointMagic) {
    throw VersionError("checkpoint: missing '" + std::string(kCheckpointMagic) + "' header");
  }
  Checkpoint c;
  const Index config_lines = read_count(r, "config");
  for (Index i = 0; i < config_lines; ++i) {
    const std::string_view line = r.next();
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) r.fail("expected key=value");
    c.config.emplace_back(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
  }
  c.epoch = read_count(r, "epoch");
  {
    const auto words = split_words(r.next());
    if (words.size() != 2 || words[0] != "best_val") r.fail("expected 'best_val <v>'");
    c.best_val = parse_value(r, words[1]);
  }
  c.adam_step = read_count(r, "adam_step");
  c.params = read_arrays(r, "param", read_count(r, "params"));
  const Index moments = read_count(r, "adam");
  for (Index i = 0; i < moments; ++i) {
    auto m = read_arrays(r, "m", 1);
    auto v = read_arrays(r, "v", 1);
    c.adam_m.push_back(std::move(m.front()));
    c.adam_v.push_back(std::move(v.front()));
  }
  if (r.next() != "end") r.fail("expected 'end'");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << format_checkpoint(ckpt);
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VersionError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

void restore_parameters(const Checkpoint& ckpt, ModelParams& params) {
  const auto registry = params.registry();
  if (registry.size() != ckpt.params.size()) {
    throw VersionError("checkpoint holds " + std::to_string(ckpt.params.size()) +
                       " parameters, model expects " + std::to_string(registry.size()));
  }
  for (std::size_t i = 0; i < registry.size(); ++i) {
    const NamedArray& a = ckpt.params[i];
    if (a.name != registry[i].name || a.shape != registry[i].tensor.shape()) {
      throw VersionError("checkpoint parameter '" + a.name + "' " + to_string(a.shape) +
                         " does not match model parameter '" + registry[i].name + "' " +
                         to_string(registry[i].tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < registry.size(); ++i) {
    Tensor t = registry[i].tensor;
    t.mutable_data() = ckpt.params[i].values;
  }
}

AdamState restore_adam(const Checkpoint& ckpt, const ModelParams& params) {
  const auto registry = params.registry();
  AdamState s = make_adam_state(registry);
  if (ckpt.adam_m.empty()) return s;
  if (ckpt.adam_m.size() != registry.size()) throw VersionError("checkpoint optimizer state size mismatch");
  s.step = ckpt.adam_step;
  for (std::size_t i = 0; i < registry.size(); ++i) {
    if (ckpt.adam_m[i].name != registry[i].name ||
        ckpt.adam_m[i].values.size() != registry[i].tensor.size()) {
      throw VersionError("checkpoint optimizer state for '" + ckpt.adam_m[i].name + "' does not match");
    }
    s.m[i] = ckpt.adam_m[i].values;
    s.v[i] = ckpt.adam_v[i].values;
  }
  return s;
}

std::vector<double> predict_denormalized(const ModelParams& params,
                                         const data::WindowDataset& dataset,
                                         const data::NormStats& stats, Index batch_size) {
  NoGradGuard no_grad;
  const Index h = dataset.horizon(), n = dataset.nodes(), f = dataset.output_channels();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(dataset.size() * h * n * f));
  for (const auto& ids : dataset.batches(batch_size, std::nullopt)) {
    const Tensor pred = forward(params, dataset.batch(ids).inputs);
    const Vector& v = pred.data();
    for (Index i = 0; i < v.size(); ++i) {
      const Index node = (i / f) % n, ch = i % f;
      out.push_back(stats.denormalize(v[i], node, ch));
    }
  }
  return out;
}

std::vector<double> targets_denormalized(const data::WindowDataset& dataset,
                                         const data::NormStats& stats) {
  const Index n = dataset.nodes(), f = dataset.output_channels();
  std::vector<double> out;
  for (const auto& ids : dataset.batches(256, std::nullopt)) {
    const data::WindowBatch batch = dataset.batch(ids);
    const Vector& v = batch.targets.data();
    for (Index i = 0; i < v.size(); ++i) out.push_back(stats.denormalize(v[i], (i / f) % n, i % f));
  }
  return out;
}

EvalReport score_predictions(std::span<const double> pred, std::span<const double> truth,
                             const data::WindowDataset& dataset, double mape_threshold) {
  const Index h = dataset.horizon();
  const Index block = dataset.nodes() * dataset.output_channels();
  if (static_cast<Index>(pred.size()) != dataset.size() * h * block || pred.size() != truth.size()) {
    throw ContractError("score_predictions: prediction count does not match the dataset");
  }
  EvalReport r;
  r.segment = dataset.segment();
  r.windows = dataset.size();
  r.overall = compute_metrics(pred, truth, mape_threshold);
  std::vector<double> ph, th;
  for (Index step = 0; step < h; ++step) {
    ph.clear();
    th.clear();
    for (Index w = 0; w < dataset.size(); ++w) {
      const std::size_t off = static_cast<std::size_t>((w * h + step) * block);
      ph.insert(ph.end(), pred.begin() + off, pred.begin() + off + block);
      th.insert(th.end(), truth.begin() + off, truth.begin() + off + block);
    }
    r.per_horizon.push_back(compute_metrics(ph, th, mape_threshold));
  }
  return r;
}

EvalReport evaluate(const ModelParams& params, const data::WindowDataset& dataset,
                    const data::NormStats& stats, double mape_threshold, Index batch_size) {
  const auto pred = predict_denormalized(params, dataset, stats, batch_size);
  const auto truth = targets_denormalized(dataset, stats);
  return score_predictions(pred, truth, dataset, mape_threshold);
}

}  // namespace dstcgcn
