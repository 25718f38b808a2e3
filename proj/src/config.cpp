#include "dstcgcn/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dstcgcn/numfmt.hpp"

namespace dstcgcn {

namespace {

constexpr ConfigKey kKeys[] = {
    {"data.path", "", "CSV dataset; empty uses the synthetic generator"},
    {"data.synthetic.nodes", "15", "generated sensors"},
    {"data.synthetic.steps", "4000", "generated time steps (>= 600)"},
    {"data.synthetic.seed", "", "generator seed; defaults to seed"},
    {"data.synthetic.noise", "2", "AR(1) innovation std"},
    {"data.synthetic.ar", "0.9", "AR(1) coefficient"},
    {"data.synthetic.coupling", "0.3", "fraction of the source node's signal added"},
    {"data.synthetic.lag", "0", "coupling lag; 0 draws 1..3 per node"},
    {"data.synthetic.amplitude", "20", "mean diurnal amplitude"},
    {"data.synthetic.base", "50", "mean level"},
    {"data.synthetic.period", "288", "steps per day"},
    {"data.input_len", "12", "input window T"},
    {"data.horizon", "12", "forecast horizon H"},
    {"data.output_dim", "1", "forecast channels F"},
    {"split.ratios", "6:2:2", "train:val:test proportions"},
    {"model.preset", "tiny", "pems03|pems04|pems07|pems08|metr-la|pems-bay|tiny"},
    {"model.embed_dim", "", "overrides the preset d_e"},
    {"model.selector_hidden", "", "overrides the preset d_h"},
    {"model.selector_modes", "", "retained frequency modes; default d_h/2"},
    {"model.layers", "", "overrides the preset layer count"},
    {"model.hidden", "", "overrides the preset d_hid"},
    {"model.tau", "", "overrides the preset tau"},
    {"selector.weight_mode", "softmax", "softmax|raw"},
    {"ablation.selection", "fft", "fft|random|latest"},
    {"ablation.temporal_norm", "true", "normalize inputs before scoring"},
    {"ablation.dynamic_spatial", "true", "per-step spatial graphs"},
    {"ablation.dynamic_temporal", "true", "learned temporal connection graphs"},
    {"ablation.cross_graph", "true", "cross-graph branch"},
    {"train.lr", "0.003", "Adam learning rate"},
    {"train.batch_size", "64", "windows per step"},
    {"train.epochs", "100", "training epochs"},
    {"train.clip", "0", "gradient norm cap; 0 disables"},
    {"train.log_seconds", "none", "none|wall: seconds column of the epoch log"},
    {"seed", "", "run seed; falls back to DSTCGCN_SEED, then 0"},
    {"out.dir", "out", "output directory"},
    {"eval.split", "test", "train|val|test"},
    {"eval.mape_threshold", "0.001", "MAPE ignores |truth| at or below this"},
    {"eval.checkpoint", "", "checkpoint to evaluate; default out.dir/checkpoint.ckpt"},
    {"inspect.sample", "0", "window index in the test split"},
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, const std::string& value, const char* kind) {
  throw ConfigError(std::string(key) + ": expected " + kind + ", got '" + value + "'");
}

std::optional<std::uint64_t> parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

}  // namespace

std::span<const ConfigKey> config_keys() { return kKeys; }

RunConfig::RunConfig() {
  for (const ConfigKey& k : kKeys) {
    values_[std::string(k.name)] = std::string(k.default_value);
    explicit_[std::string(k.name)] = false;
  }
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second = trim(value);
  explicit_.find(key)->second = true;
}

void RunConfig::merge_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    set(trim(body.substr(0, eq)), body.substr(eq + 1));
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  merge_text(buf.str());
}

bool RunConfig::is_set(std::string_view key) const {
  const auto it = explicit_.find(key);
  if (it == explicit_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return it->second && !values_.find(key)->second.empty();
}

const std::string& RunConfig::get(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return it->second;
}

Index RunConfig::get_index(std::string_view key) const {
  const std::string& v = get(key);
  Index out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

double RunConfig::get_double(std::string_view key) const {
  const std::string& v = get(key);
  const auto d = parse_double(v);
  if (!d || !std::isfinite(*d)) bad_value(key, v, "a number");
  return *d;
}

bool RunConfig::get_bool(std::string_view key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  bad_value(key, v, "true or false");
}

std::uint64_t RunConfig::seed() const {
  if (is_set("seed")) {
    const auto v = parse_u64(get("seed"));
    if (!v) bad_value("seed", get("seed"), "a non-negative integer");
    return *v;
  }
  if (const char* env = std::getenv("DSTCGCN_SEED"); env && *env) {
    const auto v = parse_u64(env);
    if (!v) bad_value("DSTCGCN_SEED", env, "a non-negative integer");
    return *v;
  }
  return 0;
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const ConfigKey& k : kKeys) {
    std::string v = values_.find(k.name)->second;
    if (k.name == "seed") v = std::to_string(seed());
    if (k.name == "data.synthetic.seed") v = std::to_string(synth_seed(*this));
    out.emplace_back(std::string(k.name), std::move(v));
  }
  return out;
}

data::SynthConfig synth_config(const RunConfig& c) {
  data::SynthConfig s;
  s.noise = c.get_double("data.synthetic.noise");
  s.ar = c.get_double("data.synthetic.ar");
  s.coupling = c.get_double("data.synthetic.coupling");
  s.lag = c.get_index("data.synthetic.lag");
  s.amplitude = c.get_double("data.synthetic.amplitude");
  s.base = c.get_double("data.synthetic.base");
  s.period = c.get_index("data.synthetic.period");
  if (s.noise < 0) throw ConfigError("data.synthetic.noise must be non-negative");
  if (s.lag < 0) throw ConfigError("data.synthetic.lag must be non-negative");
  if (s.period < 1) throw ConfigError("data.synthetic.period must be positive");
  return s;
}

std::uint64_t synth_seed(const RunConfig& c) {
  if (!c.is_set("data.synthetic.seed")) return c.seed();
  const auto v = parse_u64(c.get("data.synthetic.seed"));
  if (!v) bad_value("data.synthetic.seed", c.get("data.synthetic.seed"), "a non-negative integer");
  return *v;
}

ModelConfig model_config(const RunConfig& c, Index nodes, Index channels) {
  ModelConfig m;
  m.nodes = nodes;
  m.in_channels = channels;
  m.input_len = c.get_index("data.input_len");
  m.horizon = c.get_index("data.horizon");
  m.out_channels = c.get_index("data.output_dim");
  apply_preset(m, find_preset(c.get("model.preset")));
  if (c.is_set("model.embed_dim")) m.embed_dim = c.get_index("model.embed_dim");
  if (c.is_set("model.layers")) m.layers = c.get_index("model.layers");
  if (c.is_set("model.hidden")) m.hidden = c.get_index("model.hidden");
  if (c.is_set("model.tau")) m.tau = c.get_index("model.tau");
  if (c.is_set("model.selector_hidden")) {
    m.selector_hidden = c.get_index("model.selector_hidden");
    m.selector_modes = m.selector_hidden / 2;
  }
  if (c.is_set("model.selector_modes")) m.selector_modes = c.get_index("model.selector_modes");
  m.weight_mode = parse_weight_mode(c.get("selector.weight_mode"));
  m.ablation.selection = parse_selection_mode(c.get("ablation.selection"));
  m.ablation.temporal_norm = c.get_bool("ablation.temporal_norm");
  m.ablation.dynamic_spatial = c.get_bool("ablation.dynamic_spatial");
  m.ablation.dynamic_temporal = c.get_bool("ablation.dynamic_temporal");
  m.ablation.cross_graph = c.get_bool("ablation.cross_graph");
  m.validate();
  return m;
}

TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.lr = c.get_double("train.lr");
  t.batch_size = c.get_index("train.batch_size");
  t.epochs = c.get_index("train.epochs");
  t.clip = c.get_double("train.clip");
  t.seed = c.seed();
  const std::string& log = c.get("train.log_seconds");
  if (log == "wall") {
    t.log_wall_time = true;
  } else if (log != "none") {
    throw ConfigError("train.log_seconds: expected none or wall, got '" + log + "'");
  }
  if (t.clip < 0) throw ConfigError("train.clip must be non-negative");
  return t;
}

}  // namespace dstcgcn
