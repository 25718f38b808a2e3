#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dstcgcn/commands.hpp"

namespace {

std::string key_listing() {
  std::string s = "Config keys (key = default):\n";
  for (const dstcgcn::ConfigKey& k : dstcgcn::config_keys()) {
    const std::string def = k.default_value.empty() ? "(unset)" : std::string(k.default_value);
    char line[256];
    std::snprintf(line, sizeof line, "  %-26s = %-10s %s\n", std::string(k.name).c_str(), def.c_str(),
                  std::string(k.help).c_str());
    s += line;
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traffic forecasting with dynamic spatial-temporal cross graphs"};
  app.footer(key_listing());
  app.require_subcommand(1);

  std::string config_file;
  std::vector<std::string> overrides;
  using Command = void (*)(const dstcgcn::RunConfig&, std::ostream&);
  Command command = nullptr;
  const std::pair<const char*, Command> commands[] = {
      {"synth", dstcgcn::cmd_synth},
      {"train", dstcgcn::cmd_train},
      {"eval", dstcgcn::cmd_eval},
      {"inspect", dstcgcn::cmd_inspect},
  };
  const char* descriptions[] = {
      "write a synthetic dataset to out.dir",
      "train and write a checkpoint plus epoch log to out.dir",
      "score a checkpoint on eval.split, with baselines",
      "dump spatial graphs and selector output for one test window",
  };
  for (std::size_t i = 0; i < std::size(commands); ++i) {
    CLI::App* sub = app.add_subcommand(commands[i].first, descriptions[i]);
    sub->add_option("-c,--config", config_file, "key=value config file");
    sub->add_option("-s,--set", overrides, "key=value override, repeatable (applied after --config)");
    sub->footer(key_listing());
    sub->callback([&command, fn = commands[i].second] { command = fn; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    dstcgcn::RunConfig config;
    if (!config_file.empty()) config.merge_file(config_file);
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw dstcgcn::ConfigError("--set expects key=value, got '" + kv + "'");
      config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    command(config, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return dstcgcn::exit_code_for(e);
  }
  return 0;
}
