#pragma once

// Run configuration file: a JSON object, every key optional, unknown keys
// rejected. Missing keys take the library defaults.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ems/experiment.hpp"

namespace ems {

struct CycleSource {
  enum class Kind { kBuiltin, kFile, kSynth };
  Kind kind = Kind::kBuiltin;
  std::string builtin = "PRDC-1";
  std::filesystem::path file;  // resolved against the config directory
  SynthSpec synth;
};

struct RunConfig {
  ExperimentConfig experiment;  // cycle already loaded, seed = seeds.front()
  CycleSource cycle_source;
  std::vector<std::uint64_t> seeds{1};

  std::vector<DriveCycle> eval_cycles;  // default PRDC-2..4
  std::vector<double> eval_initial_socs{0.3, 0.5, 0.7};
  std::optional<std::filesystem::path> snapshot_dir;  // default: output dir

  std::vector<double> sweep_proportions = default_proportions();
  std::size_t sweep_repeats = 25;

  std::optional<DriveCycle> dp_cycle;  // default: the learning cycle
  DpOptions dp;

  std::filesystem::path output_dir = "out";
  nlohmann::json source;  // the file as read, with file paths made absolute
};

struct ConfigParse {
  std::optional<RunConfig> config;  // set only when violations is empty
  std::vector<std::string> violations;
};

ConfigParse parse_run_config(std::string_view text, const std::filesystem::path& base_dir = ".");
ConfigParse load_run_config(const std::filesystem::path& path);

// Learner used to train the exploitation baseline: agent B's settings with an
// exponential schedule.
LearnerConfig baseline_learner(const ExperimentConfig& config);

}  // namespace ems
