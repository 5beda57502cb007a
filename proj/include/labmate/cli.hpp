#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "labmate/reasoning.hpp"
#include "labmate/rules.hpp"
#include "labmate/sim.hpp"

namespace labmate {

inline constexpr const char* kConfigEnv = "LABMATE_CONFIG";

/// Everything a subcommand can be configured with. Resolved as defaults, then
/// the config file, then command-line flags.
struct GlobalConfig {
  RuleConfig rules{};
  BackendConfig backend{};
  ScenarioSpec sim{};
  EpisodeConfig episode{};
  std::string dataset_path;
  std::string report_path;
  std::string out_path;
  int verbosity = 0;
};

/// Applies an INI-style config (`[rules]`, `[backend]`, `[sim]`, `[episode]`,
/// `[paths]` sections) on top of `base`. Unknown sections or keys throw
/// ConfigError.
GlobalConfig parse_global_config(std::string_view text, GlobalConfig base = {});
GlobalConfig load_global_config(const std::string& path, GlobalConfig base = {});

std::array<double, 3> parse_class_mix(std::string_view text);
std::vector<std::string> parse_reply_script(std::string_view json_array);

/// Runs the `labmate` command line. Exit codes: 0 success, 1 domain error,
/// 2 usage or configuration error.
int dispatch(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
             std::ostream& err);

}  // namespace labmate
