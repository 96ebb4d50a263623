#pragma once

#include <cstddef>
#include <optional>

#include "ems/powertrain.hpp"

namespace ems {

// Per-episode energy accounting.
//
// OEC (overall energy consumption) is fuel energy plus the net energy drawn
// from the battery, where the battery draw includes its internal loss:
//
//   oec = fuel + battery_terminal + battery_loss
//       = traction_output + engine_loss + battery_loss + motor_loss
//
// Vehicle energy efficiency is traction_output / oec. Absolute values depend
// on this accounting choice; compare runs, not numbers from other sources.
struct EpisodeMetrics {
  std::optional<double> energy_efficiency;
  double oec = 0.0;                 // J
  double start_soc = 0.0;
  double end_soc = 0.0;
  double traction_output = 0.0;     // J
  double total_loss = 0.0;          // J, engine + battery + motor
  double engine_loss = 0.0;
  double battery_loss = 0.0;
  double motor_loss = 0.0;
  double fuel_energy = 0.0;
  double net_battery_energy = 0.0;  // J, terminal + internal loss
  // ΔSoC converted with the voltage curve at the mean of start and end SoC.
  double net_battery_energy_soc_estimate = 0.0;
  double shortfall_energy = 0.0;
  double total_reward = 0.0;
  std::size_t forced_charge_steps = 0;
  std::size_t steps = 0;

  double controllable_loss() const { return engine_loss + battery_loss; }
  // |oec - (traction + total_loss)| / oec, 0 for an idle episode.
  double bookkeeping_residual() const;
};

// Absent when the episode demanded no energy or consumed none.
std::optional<double> energy_efficiency(const PlantState& state);

EpisodeMetrics make_metrics(const PlantState& final_state, double start_soc, const BatteryModel& battery,
                            double total_reward);

// Relative energy saving of `candidate` against `baseline`.
double savings(double ef_baseline, double ef_candidate);

}  // namespace ems
