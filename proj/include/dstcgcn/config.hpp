#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dstcgcn/dataio.hpp"
#include "dstcgcn/model.hpp"
#include "dstcgcn/training.hpp"

namespace dstcgcn {

struct ConfigKey {
  std::string_view name;
  std::string_view default_value;  // empty: derived from another key
  std::string_view help;
};

// Every accepted key, in display order.
std::span<const ConfigKey> config_keys();

// Flat key=value settings. Unknown keys and malformed values raise
// ConfigError naming the key.
class RunConfig {
 public:
  RunConfig();

  void set(std::string_view key, std::string_view value);
  // One "key=value" per line; '#' starts a comment.
  void merge_text(std::string_view text);
  void merge_file(const std::filesystem::path& path);

  bool is_set(std::string_view key) const;
  const std::string& get(std::string_view key) const;
  Index get_index(std::string_view key) const;
  double get_double(std::string_view key) const;
  bool get_bool(std::string_view key) const;

  // Explicit seed, else the DSTCGCN_SEED environment variable, else 0.
  std::uint64_t seed() const;

  // Every key with its effective value, in display order.
  std::vector<std::pair<std::string, std::string>> entries() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
  std::map<std::string, bool, std::less<>> explicit_;
};

data::SynthConfig synth_config(const RunConfig& config);
std::uint64_t synth_seed(const RunConfig& config);

// Preset first, then any explicit model.* keys; validated.
ModelConfig model_config(const RunConfig& config, Index nodes, Index channels);

TrainConfig train_config(const RunConfig& config);

}  // namespace dstcgcn
