#include "ems/drive_cycle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ems/io.hpp"
#include "ems/rng.hpp"

namespace ems {

double DriveCycle::energy() const {
  return std::accumulate(demand.begin(), demand.end(), 0.0) * dt;
}

std::vector<CycleViolation> validate_cycle(const DriveCycle& cycle) {
  std::vector<CycleViolation> out;
  if (!(cycle.dt > 0.0) || !std::isfinite(cycle.dt)) {
    out.push_back({std::nullopt, "dt must be positive and finite, got " + format_double(cycle.dt)});
  }
  if (cycle.demand.empty()) out.push_back({std::nullopt, "cycle has no samples"});
  for (std::size_t i = 0; i < cycle.demand.size(); ++i) {
    const double p = cycle.demand[i];
    if (!std::isfinite(p)) {
      out.push_back({i, "sample " + std::to_string(i) + ": power is not finite"});
    } else if (p < 0.0) {
      out.push_back({i, "sample " + std::to_string(i) + ": negative power " + format_double(p) + " W"});
    } else if (p > kMaxDemand) {
      out.push_back({i, "sample " + std::to_string(i) + ": " + format_double(p) + " W exceeds 253 kW bound"});
    }
  }
  return out;
}

namespace {

std::string_view next_line(std::string_view& text) {
  const auto pos = text.find('\n');
  std::string_view line = text.substr(0, pos);
  text = pos == std::string_view::npos ? std::string_view{} : text.substr(pos + 1);
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw CycleError("line " + std::to_string(line) + ": " + what);
}

}  // namespace

DriveCycle parse_cycle_csv(std::string_view text, std::string label) {
  if (text.empty()) throw CycleError("empty cycle file");
  const auto header = next_line(text);
  if (header != "t_s,p_dem_w") fail(1, "expected header 't_s,p_dem_w'");

  std::vector<double> times;
  DriveCycle cycle;
  cycle.label = std::move(label);
  std::size_t line_no = 1;
  while (!text.empty()) {
    const auto line = next_line(text);
    ++line_no;
    if (line.empty()) {
      if (text.empty()) break;  // trailing newline
      fail(line_no, "empty row");
    }
    const auto comma = line.find(',');
    if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos) {
      fail(line_no, "malformed row, expected two fields");
    }
    const auto t = parse_double(line.substr(0, comma));
    const auto p = parse_double(line.substr(comma + 1));
    if (!t || !p || !std::isfinite(*t) || !std::isfinite(*p)) fail(line_no, "malformed number");
    if (!times.empty() && *t <= times.back()) fail(line_no, "time column not strictly increasing");
    if (times.size() >= 2) {
      const double dt = times[1] - times[0];
      const double expected = times[0] + dt * static_cast<double>(times.size());
      if (std::abs(*t - expected) > 1e-6 * std::max(1.0, std::abs(*t))) {
        fail(line_no, "non-uniform time step");
      }
    }
    if (*p < 0.0) fail(line_no, "negative power " + format_double(*p) + " W");
    if (*p > kMaxDemand) fail(line_no, "power " + format_double(*p) + " W exceeds 253 kW bound");
    times.push_back(*t);
    cycle.demand.push_back(*p);
  }
  if (cycle.demand.empty()) throw CycleError("cycle file has no data rows");
  cycle.dt = times.size() >= 2 ? times[1] - times[0] : 1.0;
  return cycle;
}

DriveCycle load_cycle(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw CycleError("cycle file not found: " + path.string());
  try {
    return parse_cycle_csv(read_file(path), path.stem().string());
  } catch (const CycleError& e) {
    throw CycleError(path.string() + ": " + e.what());
  }
}

std::string format_cycle_csv(const DriveCycle& cycle) {
  std::string out = "t_s,p_dem_w\n";
  for (std::size_t i = 0; i < cycle.demand.size(); ++i) {
    out += format_double(cycle.dt * static_cast<double>(i));
    out += ',';
    out += format_double(cycle.demand[i]);
    out += '\n';
  }
  return out;
}

void save_cycle(const DriveCycle& cycle, const std::filesystem::path& path) {
  atomic_write(path, format_cycle_csv(cycle));
}

DriveCycle speed_to_power(std::span<const double> speeds, double dt, const VehicleParams& params) {
  if (!(dt > 0.0)) throw CycleError("speed_to_power: dt must be positive");
  params.validate();
  DriveCycle cycle;
  cycle.dt = dt;
  cycle.label = "speed-derived";
  cycle.demand.reserve(speeds.size());
  for (std::size_t i = 0; i < speeds.size(); ++i) {
    const double v = speeds[i];
    if (v < 0.0 || !std::isfinite(v)) {
      throw CycleError("speed_to_power: sample " + std::to_string(i) + " has invalid speed");
    }
    const double accel = i == 0 ? 0.0 : (v - speeds[i - 1]) / dt;
    const double rolling = params.mass * kGravity * params.rolling_friction_coeff * v;
    const double aero = 0.5 * params.air_density * params.drag_coeff * params.frontal_area * v * v * v;
    const double inertial = params.mass * accel * v;
    const double p = std::max(0.0, (rolling + aero + inertial) / params.driveline_efficiency);
    if (p > kMaxDemand) {
      throw CycleError("speed_to_power: sample " + std::to_string(i) + " demands " + format_double(p) +
                       " W, exceeds 253 kW bound");
    }
    cycle.demand.push_back(p);
  }
  return cycle;
}

DriveCycle synth_cycle(const SynthSpec& spec) {
  if (!(spec.dt > 0.0)) throw CycleError("synth_cycle: dt must be positive");
  if (spec.segments.empty()) throw CycleError("synth_cycle: no segments");
  if (spec.noise < 0.0) throw CycleError("synth_cycle: negative noise amplitude");
  double pattern = 0.0;
  for (std::size_t i = 0; i < spec.segments.size(); ++i) {
    const auto& seg = spec.segments[i];
    if (!(seg.hold > 0.0)) throw CycleError("synth_cycle: segment " + std::to_string(i) + " has no duration");
    if (seg.level < 0.0 || seg.level > kMaxDemand) {
      throw CycleError("synth_cycle: segment " + std::to_string(i) + " level " + format_double(seg.level) +
                       " W outside [0, 253 kW]");
    }
    pattern += seg.hold;
  }
  const double duration = spec.duration.value_or(pattern);
  if (!(duration > 0.0)) throw CycleError("synth_cycle: duration must be positive");

  DriveCycle cycle;
  cycle.dt = spec.dt;
  cycle.label = spec.label;
  const auto n = static_cast<std::size_t>(std::llround(duration / spec.dt));
  cycle.demand.reserve(n);
  auto rng = Rng::stream(spec.seed, RngStream::kCycleNoise);
  for (std::size_t i = 0; i < n; ++i) {
    double tau = std::fmod(spec.dt * static_cast<double>(i), pattern);
    std::size_t k = 0;
    while (k + 1 < spec.segments.size() && tau >= spec.segments[k].hold) {
      tau -= spec.segments[k].hold;
      ++k;
    }
    double p = spec.segments[k].level;
    if (p > 0.0 && spec.noise > 0.0) {
      p = std::clamp(p + spec.noise * (2.0 * rng.uniform() - 1.0), 0.0, kMaxDemand);
    }
    cycle.demand.push_back(p);
  }
  return cycle;
}

const std::vector<std::string>& builtin_cycle_names() {
  static const std::vector<std::string> names{"PRDC-1", "PRDC-2", "PRDC-3", "PRDC-4"};
  return names;
}

SynthSpec builtin_cycle_spec(std::string_view name) {
  // Repeated towing missions: idle, breakaway/pushback, tow, creep, idle.
  SynthSpec spec;
  spec.dt = 1.0;
  spec.label = std::string(name) + "-synthetic";
  if (name == "PRDC-1") {
    spec.duration = 3600.0;
    spec.segments = {{0.0, 60.0}, {150'000.0, 30.0}, {60'000.0, 240.0},
                     {30'000.0, 90.0}, {0.0, 60.0}, {55'000.0, 120.0}};
    spec.noise = 4000.0;
    spec.seed = 11;
  } else if (name == "PRDC-2") {
    spec.duration = 3000.0;
    spec.segments = {{0.0, 90.0}, {170'000.0, 25.0}, {65'000.0, 300.0}, {25'000.0, 120.0}, {0.0, 65.0}};
    spec.noise = 5000.0;
    spec.seed = 22;
  } else if (name == "PRDC-3") {
    spec.duration = 2400.0;
    spec.segments = {{0.0, 120.0}, {120'000.0, 20.0}, {50'000.0, 260.0}, {20'000.0, 100.0}, {0.0, 100.0}};
    spec.noise = 3000.0;
    spec.seed = 33;
  } else if (name == "PRDC-4") {
    spec.duration = 3600.0;
    spec.segments = {{0.0, 45.0}, {190'000.0, 35.0}, {80'000.0, 330.0}, {35'000.0, 90.0}, {0.0, 100.0}};
    spec.noise = 5000.0;
    spec.seed = 44;
  } else {
    throw CycleError("unknown builtin cycle '" + std::string(name) + "'");
  }
  return spec;
}

DriveCycle builtin_cycle(std::string_view name) { return synth_cycle(builtin_cycle_spec(name)); }

}  // namespace ems
