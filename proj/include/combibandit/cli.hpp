#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace combibandit {

enum class Command { simulate, resettle, bound, lemmas, infer };

std::string to_string(Command command);
Command parse_command(std::string_view name);

struct RunManifest {
  Command command = Command::bound;
  std::filesystem::path config_path;  // empty: defaults only
  std::filesystem::path output_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replications;
  // "section.key=value" entries applied after the config file.
  std::vector<std::string> overrides;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;  // a validator or lemma check failed
inline constexpr int kExitBadInput = 2;     // config, case file or argument error
inline constexpr int kExitRuntime = 3;

// Runs one command, writing CSV/text outputs, the resolved configuration
// (config.ini) and manifest.json to output_dir. Progress lines go to `log`;
// failures are reported to `err` as one JSON object.
int run_command(const RunManifest& manifest, std::ostream& log, std::ostream& err);

}  // namespace combibandit
