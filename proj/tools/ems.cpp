#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "ems/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Energy management learning experiments for a series-hybrid tractor"};
  app.set_version_flag("--version", std::string(ems::kToolVersion));
  app.require_subcommand(1);

  ems::CommandOptions opts;
  std::string out_dir;
  std::optional<std::uint64_t> seed;

  auto add = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opts.config, "Run config (JSON)")->required();
    if (std::string_view(name) != "validate") {
      sub->add_option("--out", out_dir, "Output directory, overrides output_dir");
      sub->add_option("--seed", seed, "Seed, overrides seeds");
      sub->add_option("--workers", opts.workers, "Parallel runs")->check(CLI::PositiveNumber);
    }
    return sub;
  };
  auto* learn = add("learn", "Train and write the learning curve, Q-table snapshots and manifest");
  learn->add_flag("--trace", opts.trace, "Also write the last episode's step trace");
  add("sweep", "Weighted-policy proportion sweep");
  add("eval", "Exploitation-only evaluation of saved snapshots on the evaluation cycles");
  add("dp", "Dynamic-programming reference cost");
  add("validate", "Check a config without running anything");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ems::kExitValidation;
  }

  auto* sub = app.get_subcommands().front();
  if (!out_dir.empty()) opts.out_dir = out_dir;
  opts.seed = seed;

  const std::string name = sub->get_name();
  if (name == "learn") return ems::cmd_learn(opts, std::cout, std::cerr);
  if (name == "sweep") return ems::cmd_sweep(opts, std::cout, std::cerr);
  if (name == "eval") return ems::cmd_eval(opts, std::cout, std::cerr);
  if (name == "dp") return ems::cmd_dp(opts, std::cout, std::cerr);
  return ems::cmd_validate(opts, std::cout, std::cerr);
}
