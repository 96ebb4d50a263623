#include "ems/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ems {

namespace {

double net_battery_draw(const PlantState& s) { return s.battery_terminal_energy + s.cumulative_battery_loss; }

}  // namespace

double EpisodeMetrics::bookkeeping_residual() const {
  const double scale = std::max(std::abs(oec), std::abs(traction_output) + total_loss);
  if (scale == 0.0) return 0.0;
  return std::abs(oec - (traction_output + total_loss)) / scale;
}

std::optional<double> energy_efficiency(const PlantState& state) {
  const double input = state.cumulative_fuel_energy + net_battery_draw(state);
  if (state.cumulative_demand_energy <= 0.0 || !(input > 0.0)) return std::nullopt;
  return state.cumulative_traction_output / input;
}

EpisodeMetrics make_metrics(const PlantState& s, double start_soc, const BatteryModel& battery,
                            double total_reward) {
  EpisodeMetrics m;
  m.energy_efficiency = energy_efficiency(s);
  m.fuel_energy = s.cumulative_fuel_energy;
  m.net_battery_energy = net_battery_draw(s);
  m.oec = m.fuel_energy + m.net_battery_energy;
  m.start_soc = start_soc;
  m.end_soc = s.soc;
  m.traction_output = s.cumulative_traction_output;
  m.engine_loss = s.cumulative_engine_loss;
  m.battery_loss = s.cumulative_battery_loss;
  m.motor_loss = s.cumulative_motor_loss;
  m.total_loss = m.engine_loss + m.battery_loss + m.motor_loss;
  m.net_battery_energy_soc_estimate = (start_soc - s.soc) * battery.energy_per_soc(0.5 * (start_soc + s.soc));
  m.shortfall_energy = s.cumulative_shortfall;
  m.total_reward = total_reward;
  m.forced_charge_steps = s.forced_charge_steps;
  m.steps = s.steps;
  return m;
}

double savings(double ef_baseline, double ef_candidate) {
  if (!(ef_baseline > 0.0)) throw std::invalid_argument("savings: baseline energy must be positive");
  return (ef_baseline - ef_candidate) / ef_baseline;
}

}  // namespace ems
