#pragma once

// Subcommands behind the `ems` tool. Each returns a process exit code and
// writes diagnostics to `err`.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string_view>

namespace ems {

inline constexpr std::string_view kToolVersion = "1.0.0";

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2 };

struct CommandOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> out_dir;  // overrides output_dir
  std::optional<std::uint64_t> seed;             // overrides seeds
  std::size_t workers = 1;
  bool trace = false;  // learn: also write the last episode's step trace
};

int cmd_learn(const CommandOptions& options, std::ostream& out, std::ostream& err);
int cmd_sweep(const CommandOptions& options, std::ostream& out, std::ostream& err);
int cmd_eval(const CommandOptions& options, std::ostream& out, std::ostream& err);
int cmd_dp(const CommandOptions& options, std::ostream& out, std::ostream& err);
int cmd_validate(const CommandOptions& options, std::ostream& out, std::ostream& err);

}  // namespace ems
