#include "ems/powertrain.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ems {

namespace {

void require(bool condition, const char* what) {
  if (!condition) throw std::invalid_argument(what);
}

}  // namespace

void VehicleParams::validate() const {
  require(mass > 0.0, "vehicle.mass must be positive");
  require(frontal_area > 0.0, "vehicle.frontal_area must be positive");
  require(drag_coeff >= 0.0, "vehicle.drag_coeff must be nonnegative");
  require(rolling_friction_coeff >= 0.0, "vehicle.rolling_friction_coeff must be nonnegative");
  require(gear_ratio >= 0.0, "vehicle.gear_ratio must be nonnegative");
  require(driveline_efficiency > 0.0 && driveline_efficiency <= 1.0,
          "vehicle.driveline_efficiency must be in (0, 1]");
  require(air_density >= 0.0, "vehicle.air_density must be nonnegative");
}

SocCurve::SocCurve(std::vector<std::pair<double, double>> points) : points_(std::move(points)) {
  require(!points_.empty(), "SoC curve needs at least one point");
  for (std::size_t i = 1; i < points_.size(); ++i) {
    require(points_[i].first > points_[i - 1].first, "SoC curve breakpoints must be strictly ascending");
  }
}

double SocCurve::operator()(double soc) const {
  if (points_.empty()) return 0.0;
  if (soc <= points_.front().first) return points_.front().second;
  if (soc >= points_.back().first) return points_.back().second;
  auto hi = std::upper_bound(points_.begin(), points_.end(), soc,
                             [](double s, const auto& p) { return s < p.first; });
  auto lo = hi - 1;
  const double w = (soc - lo->first) / (hi->first - lo->first);
  return lo->second + w * (hi->second - lo->second);
}

// ---------------------------------------------------------------------------
// Traction motor

double TractionMotorModel::torque_at_power(double power_w) const {
  return power_w / 1000.0 * 9550.0 / rated_speed;
}

double TractionMotorModel::loss_at_power(double power_w) const {
  if (power_w <= 0.0) return 0.0;
  return loss(torque_at_power(power_w));
}

double TractionMotorModel::power_for_link(double link_w) const {
  if (link_w <= c0) return 0.0;
  // P + c2·(kP)² + c1·kP + c0 = link, with T = kP.
  const double k = 9550.0 / (1000.0 * rated_speed);
  const double a = c2 * k * k;
  const double b = 1.0 + c1 * k;
  const double c = c0 - link_w;
  if (a == 0.0) return -c / b;
  // Numerically stable positive root.
  return (2.0 * -c) / (b + std::sqrt(b * b - 4.0 * a * c));
}

void TractionMotorModel::validate() const {
  require(nominal_power > 0.0, "motor.nominal_power must be positive");
  require(rated_speed > 0.0, "motor.rated_speed must be positive");
  require(c2 >= 0.0, "motor.c2 must be nonnegative");
  // Convex quadratic: nonnegative on [0, T_max] iff both ends and the vertex are.
  const double t_max = torque_at_power(nominal_power);
  require(loss(0.0) >= 0.0 && loss(t_max) >= 0.0, "motor loss must be nonnegative over the torque range");
  if (c2 > 0.0) {
    const double vertex = -c1 / (2.0 * c2);
    if (vertex > 0.0 && vertex < t_max) {
      require(loss(vertex) >= 0.0, "motor loss must be nonnegative over the torque range");
    }
  }
}

double traction_power(double torque, double speed_rpm) {
  if (torque < 0.0 || speed_rpm < 0.0) {
    throw std::invalid_argument("traction_power: torque and speed must be nonnegative");
  }
  return torque * speed_rpm / 9550.0 * 1000.0;
}

double traction_efficiency(const TractionMotorModel& model, double torque, double speed_rpm) {
  const double p = traction_power(torque, speed_rpm);
  if (p <= 0.0) throw std::domain_error("traction_efficiency: undefined at zero output power");
  return p / (p + model.loss(torque));
}

// ---------------------------------------------------------------------------
// Engine-generator unit

double fuel_rate_to_power(double rate_lph, const EguModel& model) {
  if (rate_lph < 0.0) throw std::invalid_argument("fuel_rate_to_power: negative fuel rate");
  return rate_lph * model.fuel_density * model.fuel_heating_value / 3600.0;
}

QuadraticCoeffs fit_egu_quadratic(std::span<const FuelPoint> points) {
  if (points.size() < 3) throw std::invalid_argument("fit_egu_quadratic: need at least 3 points");
  std::vector<double> xs;
  for (const auto& p : points) xs.push_back(p.p_egu);
  std::sort(xs.begin(), xs.end());
  if (std::unique(xs.begin(), xs.end()) - xs.begin() < 3) {
    throw std::invalid_argument("fit_egu_quadratic: need at least 3 distinct P_egu values");
  }

  // Fit in a centred, scaled variable u = (x - m) / s for conditioning.
  double m = 0.0;
  for (const auto& p : points) m += p.p_egu;
  m /= static_cast<double>(points.size());
  double s = 0.0;
  for (const auto& p : points) s = std::max(s, std::abs(p.p_egu - m));

  std::array<std::array<double, 4>, 3> a{};  // augmented normal equations
  for (const auto& p : points) {
    const double u = (p.p_egu - m) / s;
    const std::array<double, 3> basis{u * u, u, 1.0};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) a[r][c] += basis[r] * basis[c];
      a[r][3] += basis[r] * p.p_fuel;
    }
  }
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 3; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    if (std::abs(a[pivot][col]) < 1e-12) throw std::invalid_argument("fit_egu_quadratic: singular system");
    std::swap(a[col], a[pivot]);
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (int c = col; c < 4; ++c) a[r][c] -= f * a[col][c];
    }
  }
  const double a2 = a[0][3] / a[0][0];
  const double a1 = a[1][3] / a[1][1];
  const double a0 = a[2][3] / a[2][2];

  QuadraticCoeffs q;
  q.b2 = a2 / (s * s);
  q.b1 = a1 / s - 2.0 * a2 * m / (s * s);
  q.b0 = a0 - a1 * m / s + a2 * m * m / (s * s);
  return q;
}

double egu_fuel_power(const EguModel& model, double p_egu) {
  if (p_egu < 0.0 || p_egu > model.max_power) {
    throw std::invalid_argument("egu_fuel_power: setpoint outside [0, max_power]");
  }
  return model.fuel(p_egu);
}

double egu_efficiency(const EguModel& model, double p_egu) {
  if (p_egu < 0.0) throw std::invalid_argument("egu_efficiency: negative setpoint");
  if (p_egu == 0.0) return 0.0;
  return p_egu / egu_fuel_power(model, p_egu);
}

void EguModel::validate() const {
  require(max_power > 0.0, "egu.max_power must be positive");
  require(fuel_density > 0.0 && fuel_heating_value > 0.0, "egu fuel properties must be positive");
  // Quadratic: monotone on [0, max] iff the derivative is positive at both ends.
  const auto slope = [&](double x) { return 2.0 * fuel.b2 * x + fuel.b1; };
  require(slope(0.0) > 0.0 && slope(max_power) > 0.0, "egu fuel curve must increase on [0, max_power]");
  // P_ef - P_egu is quadratic too; check ends and interior vertex.
  const auto margin = [&](double x) { return fuel(x) - x; };
  require(margin(0.0) >= 0.0 && margin(max_power) > 0.0, "egu fuel power must exceed output power");
  if (fuel.b2 > 0.0) {
    const double vertex = -(fuel.b1 - 1.0) / (2.0 * fuel.b2);
    if (vertex > 0.0 && vertex < max_power) {
      require(margin(vertex) > 0.0, "egu fuel power must exceed output power");
    }
  }
}

EguModel default_egu_model() {
  EguModel egu;
  const double p_max = egu.max_power;
  const std::array<FuelPoint, 3> anchors{{
      {0.50 * p_max, fuel_rate_to_power(13.00, egu)},
      {0.75 * p_max, fuel_rate_to_power(18.60, egu)},
      {1.00 * p_max, fuel_rate_to_power(24.10, egu)},
  }};
  egu.fuel = fit_egu_quadratic(anchors);
  return egu;
}

// ---------------------------------------------------------------------------
// Battery

double BatteryModel::energy_per_soc(double soc) const {
  return cell_capacity * 3600.0 * cell_voltage(soc) * static_cast<double>(num_cells);
}

void BatteryModel::validate() const {
  require(cell_capacity > 0.0, "battery.cell_capacity must be positive");
  require(num_cells > 0, "battery.num_cells must be positive");
  require(soc_min < soc_max, "battery.soc_min must be below soc_max");
  require(soc_min >= 0.0 && soc_max <= 1.0, "battery SoC window must lie in [0, 1]");
  require(!cell_voltage.points().empty() && !cell_resistance.points().empty(),
          "battery curves must be defined");
  for (const auto& [s, v] : cell_voltage.points()) require(v > 0.0, "battery voltage must be positive");
  require(cell_voltage(soc_min) > 0.0 && cell_voltage(soc_max) > 0.0, "battery voltage must be positive");
  for (const auto& [s, r] : cell_resistance.points()) require(r >= 0.0, "battery resistance must be nonnegative");
  require(max_charge_power >= 0.0 && max_discharge_power >= 0.0, "battery power limits must be nonnegative");
}

double battery_current(const BatteryModel& model, double p_batt, double soc) {
  if (soc < model.soc_min || soc > model.soc_max) {
    throw std::invalid_argument("battery_current: soc outside [soc_min, soc_max]");
  }
  return p_batt / (model.cell_voltage(soc) * static_cast<double>(model.num_cells));
}

SocUpdate soc_step(const BatteryModel& model, double soc, double current, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("soc_step: dt must be positive");
  const double next = soc - current * dt / (model.cell_capacity * 3600.0);
  if (next < model.soc_min) return {model.soc_min, true};
  if (next > model.soc_max) return {model.soc_max, true};
  return {next, false};
}

PowerLosses power_losses(const BatteryModel& battery, double p_egu, double fuel_power,
                         double current, double soc) {
  const double engine_loss = fuel_power - p_egu;
  if (engine_loss < 0.0) {
    throw std::logic_error("power_losses: fuel power below EGU output (invalid EGU model)");
  }
  const double battery_loss =
      battery.cell_resistance(soc) * current * current * static_cast<double>(battery.num_cells);
  return {engine_loss, battery_loss};
}

double merit(double reward_baseline, double p_loss_total, double soc, double soc_ref,
             double penalty_coeff) {
  const double loss_kw = p_loss_total / 1000.0;
  if (soc >= soc_ref) return reward_baseline - loss_kw;
  return reward_baseline - loss_kw - penalty_coeff * std::abs(soc_ref - soc);
}

void PowertrainModels::validate() const {
  vehicle.validate();
  motor.validate();
  egu.validate();
  battery.validate();
  require(merit.penalty_coeff >= 0.0, "merit.penalty_coeff must be nonnegative");
  require(charge_sustain.release_margin >= 0.0, "charge_sustain.release_margin must be nonnegative");
}

PowertrainModels default_models() {
  PowertrainModels m;
  m.egu = default_egu_model();
  return m;
}

// ---------------------------------------------------------------------------
// Plant step

PlantStepResult plant_step(const PlantState& state, double p_dem, double p_egu_cmd, double dt,
                           const PowertrainModels& models) {
  const auto& egu = models.egu;
  const auto& bat = models.battery;
  if (p_dem < 0.0) throw std::invalid_argument("plant_step: negative power demand");
  if (p_egu_cmd < 0.0 || p_egu_cmd > egu.max_power) {
    throw std::invalid_argument("plant_step: EGU command outside [0, max_power]");
  }
  if (!(dt > 0.0)) throw std::invalid_argument("plant_step: dt must be positive");

  PlantStepResult result{state, {}};
  PlantState& next = result.state;
  StepOutcome& out = result.outcome;
  const double soc = state.soc;
  out.p_dem = p_dem;
  out.soc_before = soc;

  // Charge sustain with release hysteresis.
  bool sustain = state.charge_sustain_active;
  if (soc < models.charge_sustain.threshold) {
    sustain = true;
  } else if (sustain && soc >= models.charge_sustain.threshold + models.charge_sustain.release_margin) {
    sustain = false;
  }
  next.charge_sustain_active = sustain;
  out.forced_charging = sustain;

  double p_egu = sustain ? egu.max_power : p_egu_cmd;
  const double link_request = p_dem + models.motor.loss_at_power(p_dem);

  // Battery window from power limits and the SoC bounds over this step.
  const double e_per_soc = bat.energy_per_soc(soc);
  double discharge_cap = std::min(bat.max_discharge_power, std::max(0.0, (soc - bat.soc_min) * e_per_soc / dt));
  const double charge_cap = std::min(bat.max_charge_power, std::max(0.0, (bat.soc_max - soc) * e_per_soc / dt));
  if (sustain) discharge_cap = 0.0;

  // The EGU absorbs whatever the battery window cannot take.
  const double unclamped = link_request - p_egu;
  if (unclamped > discharge_cap) {
    p_egu = std::min(egu.max_power, link_request - discharge_cap);
  } else if (unclamped < -charge_cap) {
    p_egu = link_request + charge_cap;
  }
  const double p_batt = std::clamp(link_request - p_egu, -charge_cap, discharge_cap);
  const double p_link = p_egu + p_batt;

  double p_trm = p_dem;
  if (link_request - p_link > 1e-9 * std::max(1.0, link_request)) {
    p_trm = std::min(p_dem, models.motor.power_for_link(p_link));
  }
  out.p_trm = p_trm;
  out.p_motor_loss = p_link - p_trm;
  out.shortfall = p_dem - p_trm;
  out.p_link = p_link;
  out.p_egu_applied = p_egu;
  out.p_batt = p_batt;

  // Engine off at zero setpoint: no fuel.
  out.p_fuel = p_egu > 0.0 ? egu_fuel_power(egu, p_egu) : 0.0;
  out.cell_current = battery_current(bat, p_batt, soc);
  const auto losses = power_losses(bat, p_egu, out.p_fuel, out.cell_current, soc);
  out.engine_loss = losses.engine_loss;
  out.battery_loss = losses.battery_loss;
  out.p_loss_total = losses.engine_loss + losses.battery_loss;

  const auto update = soc_step(bat, soc, out.cell_current, dt);
  out.soc_after = update.soc;
  out.soc_saturated = update.saturated;
  next.soc = update.soc;

  out.reward = merit(models.merit.r_ini, out.p_loss_total, next.soc, models.merit.soc_ref,
                     models.merit.penalty_coeff);

  next.cumulative_fuel_energy += out.p_fuel * dt;
  next.cumulative_engine_loss += out.engine_loss * dt;
  next.cumulative_battery_loss += out.battery_loss * dt;
  next.cumulative_motor_loss += out.p_motor_loss * dt;
  next.cumulative_traction_output += p_trm * dt;
  next.cumulative_demand_energy += p_dem * dt;
  next.cumulative_egu_output += p_egu * dt;
  next.cumulative_shortfall += out.shortfall * dt;
  next.battery_terminal_energy += p_batt * dt;
  next.steps += 1;
  if (sustain) next.forced_charge_steps += 1;
  return result;
}

}  // namespace ems
