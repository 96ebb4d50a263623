#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ems/powertrain.hpp"

namespace ems {

// Upper bound of the power-demand state axis.
inline constexpr double kMaxDemand = 253'000.0;

struct DriveCycle {
  double dt = 1.0;               // s
  std::vector<double> demand;    // W, one sample per step
  std::string label;

  std::size_t size() const { return demand.size(); }
  double duration() const { return dt * static_cast<double>(demand.size()); }
  double energy() const;  // J
};

struct CycleViolation {
  std::optional<std::size_t> index;  // sample index, empty for cycle-level issues
  std::string message;
};

class CycleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<CycleViolation> validate_cycle(const DriveCycle& cycle);

// CSV with header `t_s,p_dem_w`. Rows must be uniformly spaced in time; dt is
// inferred from the first two rows (1 s for a single row).
DriveCycle parse_cycle_csv(std::string_view text, std::string label = {});
DriveCycle load_cycle(const std::filesystem::path& path);
std::string format_cycle_csv(const DriveCycle& cycle);
void save_cycle(const DriveCycle& cycle, const std::filesystem::path& path);

// Longitudinal dynamics: P = (m·g·Cr·v + ½·ρ·Cd·A·v³ + m·a·v) / η with a
// backward-difference acceleration (zero at the first sample). Negative
// power is clamped to zero: the motor runs in traction mode only.
DriveCycle speed_to_power(std::span<const double> speeds, double dt, const VehicleParams& params);

struct SynthSegment {
  double level;  // W
  double hold;   // s
};

struct SynthSpec {
  std::optional<double> duration;  // s; segments repeat until it is filled
  double dt = 1.0;
  std::vector<SynthSegment> segments;
  double noise = 0.0;  // W, uniform ±noise on nonzero levels
  std::uint64_t seed = 0;
  std::string label = "synthetic";
};

DriveCycle synth_cycle(const SynthSpec& spec);

// Synthetic stand-ins for the four manufacturer cycles: "PRDC-1" (learning
// cycle) through "PRDC-4". Labels carry a "-synthetic" suffix.
const std::vector<std::string>& builtin_cycle_names();
SynthSpec builtin_cycle_spec(std::string_view name);
DriveCycle builtin_cycle(std::string_view name);

}  // namespace ems
