#pragma once

// Component models of the series-hybrid towing tractor: traction motor,
// engine-generator unit (EGU), battery pack, DC-link balance and the per-step
// merit signal. All quantities are SI (W, J, s, N·m, rpm); SoC is a fraction.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace ems {

inline constexpr double kGravity = 9.81;

struct VehicleParams {
  double mass = 16000.0;                 // kg
  double frontal_area = 6.8;             // m²
  double drag_coeff = 0.8;
  double rolling_friction_coeff = 0.02;
  double gear_ratio = 25.0;
  double driveline_efficiency = 0.95;
  double air_density = 1.225;            // kg/m³

  void validate() const;
};

// Piecewise-linear curve over SoC. Values outside the breakpoint range hold
// the nearest end value.
class SocCurve {
 public:
  SocCurve() = default;
  explicit SocCurve(std::vector<std::pair<double, double>> points);

  double operator()(double soc) const;
  const std::vector<std::pair<double, double>>& points() const { return points_; }

 private:
  std::vector<std::pair<double, double>> points_;
};

// Motor loss is a quadratic in torque. When only an output power is known the
// torque is taken at the rated speed.
struct TractionMotorModel {
  double nominal_power = 245'000.0;  // W
  double rated_speed = 2000.0;       // rpm
  // Defaults give ~0.95 efficiency at rated torque and ~0.85 at 10 % torque.
  double c2 = 0.006326;  // W/(N·m)²
  double c1 = 0.0;       // W/(N·m)
  double c0 = 4237.0;    // W

  double loss(double torque) const { return (c2 * torque + c1) * torque + c0; }
  double torque_at_power(double power_w) const;
  // Zero output power means a de-energized motor with no loss.
  double loss_at_power(double power_w) const;
  // Inverse of power + loss_at_power(power). Returns 0 when the link power
  // cannot cover the constant loss term.
  double power_for_link(double link_w) const;

  void validate() const;
};

struct QuadraticCoeffs {
  double b2 = 0.0;
  double b1 = 0.0;
  double b0 = 0.0;

  double operator()(double x) const { return (b2 * x + b1) * x + b0; }
};

struct FuelPoint {
  double p_egu;   // W electrical output
  double p_fuel;  // W equivalent fuel power
};

struct EguModel {
  double max_power = 86'200.0;          // W
  QuadraticCoeffs fuel;                 // P_ef(P_egu)
  double fuel_density = 0.87;           // kg/L
  double fuel_heating_value = 44.0e6;   // J/kg

  void validate() const;
};

struct BatteryModel {
  double cell_capacity = 2.45;  // A·h
  std::size_t num_cells = 8200;
  SocCurve cell_voltage{{{0.2, 3.4}, {0.5, 3.6}, {0.8, 3.9}}};
  SocCurve cell_resistance{{{0.2, 0.03}, {0.8, 0.03}}};
  double soc_min = 0.2;
  double soc_max = 0.8;
  double max_charge_power = 150'000.0;     // W, pack level
  double max_discharge_power = 150'000.0;  // W, pack level

  // Terminal energy per unit SoC at the given state, J.
  double energy_per_soc(double soc) const;
  void validate() const;
};

struct ChargeSustainParams {
  double threshold = 0.28;
  double release_margin = 0.005;
};

struct MeritParams {
  double r_ini = 0.0;
  double soc_ref = 0.28;
  double penalty_coeff = 500.0;
};

struct PowertrainModels {
  VehicleParams vehicle;
  TractionMotorModel motor;
  EguModel egu;
  BatteryModel battery;
  ChargeSustainParams charge_sustain;
  MeritParams merit;

  void validate() const;
};

// EGU calibrated on the 50/75/100 % load fuel rates of the JCB unit.
EguModel default_egu_model();
PowertrainModels default_models();

struct PlantState {
  double soc = 0.5;
  bool charge_sustain_active = false;

  double cumulative_fuel_energy = 0.0;
  double cumulative_battery_loss = 0.0;
  double cumulative_engine_loss = 0.0;
  double cumulative_motor_loss = 0.0;
  double cumulative_traction_output = 0.0;
  double cumulative_demand_energy = 0.0;
  double cumulative_egu_output = 0.0;
  double cumulative_shortfall = 0.0;
  // Signed: positive when the pack delivered net energy at its terminals.
  double battery_terminal_energy = 0.0;

  std::size_t steps = 0;
  std::size_t forced_charge_steps = 0;

  static PlantState initial(double soc) {
    PlantState s;
    s.soc = soc;
    return s;
  }
};

struct StepOutcome {
  double p_dem = 0.0;
  double p_trm = 0.0;         // delivered traction power
  double p_motor_loss = 0.0;
  double p_link = 0.0;        // realized DC-link power
  double p_egu_applied = 0.0;
  double p_fuel = 0.0;
  double p_batt = 0.0;        // > 0 discharge, < 0 charge
  double cell_current = 0.0;
  double engine_loss = 0.0;
  double battery_loss = 0.0;
  double p_loss_total = 0.0;  // engine + battery
  double shortfall = 0.0;     // p_dem not delivered
  double reward = 0.0;
  double soc_before = 0.0;
  double soc_after = 0.0;
  bool forced_charging = false;
  bool soc_saturated = false;
};

// Returns watts; the underlying relation T·n/9550 yields kW.
double traction_power(double torque, double speed_rpm);
double traction_efficiency(const TractionMotorModel& model, double torque, double speed_rpm);

double fuel_rate_to_power(double rate_lph, const EguModel& model);
// Least-squares quadratic through (P_egu, P_ef) points; exact for three.
QuadraticCoeffs fit_egu_quadratic(std::span<const FuelPoint> points);
double egu_fuel_power(const EguModel& model, double p_egu);
double egu_efficiency(const EguModel& model, double p_egu);

// Per-cell current; positive while discharging.
double battery_current(const BatteryModel& model, double p_batt, double soc);

struct SocUpdate {
  double soc;
  bool saturated;
};
SocUpdate soc_step(const BatteryModel& model, double soc, double current, double dt);

struct PowerLosses {
  double engine_loss;
  double battery_loss;
};
PowerLosses power_losses(const BatteryModel& battery, double p_egu, double fuel_power,
                         double current, double soc);

double merit(double reward_baseline, double p_loss_total, double soc, double soc_ref,
             double penalty_coeff);

struct PlantStepResult {
  PlantState state;
  StepOutcome outcome;
};

// Advances the plant by one step. Infeasible demand is served as far as the
// sources allow and the remainder is reported as shortfall.
PlantStepResult plant_step(const PlantState& state, double p_dem, double p_egu_cmd, double dt,
                           const PowertrainModels& models);

}  // namespace ems
