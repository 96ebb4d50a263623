#include "ems/config.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <initializer_list>

#include "ems/io.hpp"

namespace ems {

namespace {

using nlohmann::json;

class Reader {
 public:
  std::vector<std::string> violations;

  void fail(const std::string& path, const std::string& message) { violations.push_back(path + ": " + message); }

  // Reports keys outside `allowed`. Returns false when `j` is not an object.
  bool object(const json& j, const std::string& path, std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) {
      fail(path.empty() ? "<root>" : path, "expected an object");
      return false;
    }
    for (const auto& [key, value] : j.items()) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        fail(join(path, key), "unknown key");
      }
    }
    return true;
  }

  static std::string join(const std::string& path, std::string_view key) {
    return path.empty() ? std::string(key) : path + "." + std::string(key);
  }

  const json* child(const json& j, std::string_view key) {
    const auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
  }

  void number(const json& j, std::string_view key, const std::string& path, double& out) {
    if (const json* v = child(j, key)) {
      if (v->is_number()) {
        out = v->get<double>();
      } else {
        fail(join(path, key), "expected a number");
      }
    }
  }

  void count(const json& j, std::string_view key, const std::string& path, std::size_t& out) {
    if (const json* v = child(j, key)) {
      if (v->is_number_unsigned() || (v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
        out = v->get<std::size_t>();
      } else {
        fail(join(path, key), "expected a nonnegative integer");
      }
    }
  }

  void seed(const json& v, const std::string& path, std::uint64_t& out) {
    if (v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      out = v.get<std::uint64_t>();
    } else {
      fail(path, "expected a nonnegative integer seed");
    }
  }

  void string(const json& j, std::string_view key, const std::string& path, std::string& out) {
    if (const json* v = child(j, key)) {
      if (v->is_string()) {
        out = v->get<std::string>();
      } else {
        fail(join(path, key), "expected a string");
      }
    }
  }

  std::optional<std::vector<double>> numbers(const json& v, const std::string& path) {
    if (!v.is_array()) {
      fail(path, "expected an array of numbers");
      return std::nullopt;
    }
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) {
        fail(path, "expected an array of numbers");
        return std::nullopt;
      }
      out.push_back(x.get<double>());
    }
    return out;
  }

  std::optional<std::vector<std::pair<double, double>>> pairs(const json& v, const std::string& path) {
    if (!v.is_array()) {
      fail(path, "expected an array of [x, y] pairs");
      return std::nullopt;
    }
    std::vector<std::pair<double, double>> out;
    for (const auto& p : v) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
        fail(path, "expected an array of [x, y] pairs");
        return std::nullopt;
      }
      out.emplace_back(p[0].get<double>(), p[1].get<double>());
    }
    return out;
  }

  // Runs a validate() call and turns its exception into a violation.
  template <typename Fn>
  void check(const std::string& path, Fn&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      fail(path, e.what());
    }
  }
};

std::optional<SocCurve> curve(Reader& r, const json& v, const std::string& path) {
  auto pts = r.pairs(v, path);
  if (!pts) return std::nullopt;
  std::optional<SocCurve> out;
  r.check(path, [&] { out = SocCurve(std::move(*pts)); });
  return out;
}

void read_plant(Reader& r, const json& j, const std::string& path, PowertrainModels& m) {
  if (!r.object(j, path, {"vehicle", "motor", "egu", "battery", "charge_sustain", "merit"})) return;

  if (const json* v = r.child(j, "vehicle")) {
    const auto p = Reader::join(path, "vehicle");
    if (r.object(*v, p, {"mass", "frontal_area", "drag_coeff", "rolling_friction_coeff", "gear_ratio",
                         "driveline_efficiency", "air_density"})) {
      r.number(*v, "mass", p, m.vehicle.mass);
      r.number(*v, "frontal_area", p, m.vehicle.frontal_area);
      r.number(*v, "drag_coeff", p, m.vehicle.drag_coeff);
      r.number(*v, "rolling_friction_coeff", p, m.vehicle.rolling_friction_coeff);
      r.number(*v, "gear_ratio", p, m.vehicle.gear_ratio);
      r.number(*v, "driveline_efficiency", p, m.vehicle.driveline_efficiency);
      r.number(*v, "air_density", p, m.vehicle.air_density);
      r.check(p, [&] { m.vehicle.validate(); });
    }
  }

  if (const json* v = r.child(j, "motor")) {
    const auto p = Reader::join(path, "motor");
    if (r.object(*v, p, {"nominal_power", "rated_speed", "c2", "c1", "c0"})) {
      r.number(*v, "nominal_power", p, m.motor.nominal_power);
      r.number(*v, "rated_speed", p, m.motor.rated_speed);
      r.number(*v, "c2", p, m.motor.c2);
      r.number(*v, "c1", p, m.motor.c1);
      r.number(*v, "c0", p, m.motor.c0);
      r.check(p, [&] { m.motor.validate(); });
    }
  }

  if (const json* v = r.child(j, "egu")) {
    const auto p = Reader::join(path, "egu");
    if (r.object(*v, p, {"max_power", "fuel_density", "heating_value", "fuel_rates_lph", "coeffs"})) {
      r.number(*v, "max_power", p, m.egu.max_power);
      r.number(*v, "fuel_density", p, m.egu.fuel_density);
      r.number(*v, "heating_value", p, m.egu.fuel_heating_value);
      const json* rates = r.child(*v, "fuel_rates_lph");
      const json* coeffs = r.child(*v, "coeffs");
      if (rates && coeffs) {
        r.fail(p, "give either fuel_rates_lph or coeffs, not both");
      } else if (coeffs) {
        if (auto c = r.numbers(*coeffs, Reader::join(p, "coeffs")); c && c->size() == 3) {
          m.egu.fuel = {(*c)[0], (*c)[1], (*c)[2]};
        } else if (c) {
          r.fail(Reader::join(p, "coeffs"), "expected [b2, b1, b0]");
        }
      } else {
        // Refit from rates (given, or the defaults at 50/75/100 % load) so
        // density, heating value and max power overrides stay consistent.
        std::vector<std::pair<double, double>> pts;
        if (rates) {
          if (auto given = r.pairs(*rates, Reader::join(p, "fuel_rates_lph"))) pts = std::move(*given);
        } else {
          pts = {{0.5 * m.egu.max_power, 13.0}, {0.75 * m.egu.max_power, 18.6}, {m.egu.max_power, 24.1}};
        }
        std::vector<FuelPoint> anchors;
        for (const auto& [pw, lph] : pts) anchors.push_back({pw, fuel_rate_to_power(lph, m.egu)});
        if (!anchors.empty()) r.check(Reader::join(p, "fuel_rates_lph"), [&] { m.egu.fuel = fit_egu_quadratic(anchors); });
      }
      r.check(p, [&] { m.egu.validate(); });
    }
  }

  if (const json* v = r.child(j, "battery")) {
    const auto p = Reader::join(path, "battery");
    if (r.object(*v, p, {"cell_capacity_ah", "num_cells", "voltage_curve", "resistance_curve", "soc_min", "soc_max",
                         "max_charge_power", "max_discharge_power"})) {
      r.number(*v, "cell_capacity_ah", p, m.battery.cell_capacity);
      r.count(*v, "num_cells", p, m.battery.num_cells);
      if (const json* c = r.child(*v, "voltage_curve")) {
        if (auto sc = curve(r, *c, Reader::join(p, "voltage_curve"))) m.battery.cell_voltage = *sc;
      }
      if (const json* c = r.child(*v, "resistance_curve")) {
        if (auto sc = curve(r, *c, Reader::join(p, "resistance_curve"))) m.battery.cell_resistance = *sc;
      }
      r.number(*v, "soc_min", p, m.battery.soc_min);
      r.number(*v, "soc_max", p, m.battery.soc_max);
      r.number(*v, "max_charge_power", p, m.battery.max_charge_power);
      r.number(*v, "max_discharge_power", p, m.battery.max_discharge_power);
      r.check(p, [&] { m.battery.validate(); });
    }
  }

  if (const json* v = r.child(j, "charge_sustain")) {
    const auto p = Reader::join(path, "charge_sustain");
    if (r.object(*v, p, {"threshold", "release_margin"})) {
      r.number(*v, "threshold", p, m.charge_sustain.threshold);
      r.number(*v, "release_margin", p, m.charge_sustain.release_margin);
    }
  }

  if (const json* v = r.child(j, "merit")) {
    const auto p = Reader::join(path, "merit");
    if (r.object(*v, p, {"r_ini", "soc_ref", "penalty_coeff"})) {
      r.number(*v, "r_ini", p, m.merit.r_ini);
      r.number(*v, "soc_ref", p, m.merit.soc_ref);
      r.number(*v, "penalty_coeff", p, m.merit.penalty_coeff);
    }
  }
  r.check(path, [&] { m.validate(); });
}

void read_learner(Reader& r, const json& j, const std::string& path, LearnerConfig& l) {
  if (!r.object(j, path, {"learning_rate", "discount", "schedule"})) return;
  r.number(j, "learning_rate", path, l.learning_rate);
  r.number(j, "discount", path, l.discount);
  if (const json* s = r.child(j, "schedule")) {
    const auto p = Reader::join(path, "schedule");
    if (r.object(*s, p, {"kind", "alpha1", "factor", "step_width", "decay_rate"})) {
      std::string kind;
      r.string(*s, "kind", p, kind);
      if (!kind.empty()) r.check(Reader::join(p, "kind"), [&] { l.schedule.kind = parse_schedule_kind(kind); });
      r.number(*s, "alpha1", p, l.schedule.alpha1);
      r.number(*s, "factor", p, l.schedule.factor);
      r.number(*s, "step_width", p, l.schedule.step_width);
      r.number(*s, "decay_rate", p, l.schedule.decay_rate);
    }
  }
  r.check(path, [&] { l.validate(); });
}

std::optional<CycleSource> read_cycle_source(Reader& r, const json& j, const std::string& path,
                                             const std::filesystem::path& base_dir) {
  if (!r.object(j, path, {"builtin", "file", "synth"})) return std::nullopt;
  const int given = static_cast<int>(j.contains("builtin")) + static_cast<int>(j.contains("file")) +
                    static_cast<int>(j.contains("synth"));
  if (given != 1) {
    r.fail(path, "exactly one of builtin, file or synth is required");
    return std::nullopt;
  }
  CycleSource src;
  if (j.contains("builtin")) {
    src.kind = CycleSource::Kind::kBuiltin;
    r.string(j, "builtin", path, src.builtin);
    const auto& names = builtin_cycle_names();
    if (std::find(names.begin(), names.end(), src.builtin) == names.end()) {
      r.fail(Reader::join(path, "builtin"), "unknown builtin cycle '" + src.builtin + "'");
      return std::nullopt;
    }
    return src;
  }
  if (j.contains("file")) {
    src.kind = CycleSource::Kind::kFile;
    std::string file;
    r.string(j, "file", path, file);
    if (file.empty()) return std::nullopt;
    src.file = std::filesystem::path(file).is_absolute() ? std::filesystem::path(file) : base_dir / file;
    src.file = src.file.lexically_normal();
    return src;
  }
  src.kind = CycleSource::Kind::kSynth;
  const auto p = Reader::join(path, "synth");
  const json& s = j["synth"];
  if (!r.object(s, p, {"duration", "dt", "segments", "noise", "seed", "label"})) return std::nullopt;
  if (s.contains("duration")) {
    double d = 0.0;
    r.number(s, "duration", p, d);
    src.synth.duration = d;
  }
  r.number(s, "dt", p, src.synth.dt);
  r.number(s, "noise", p, src.synth.noise);
  if (const json* v = r.child(s, "seed")) r.seed(*v, Reader::join(p, "seed"), src.synth.seed);
  r.string(s, "label", p, src.synth.label);
  if (const json* v = r.child(s, "segments")) {
    if (auto segs = r.pairs(*v, Reader::join(p, "segments"))) {
      for (const auto& [level, hold] : *segs) src.synth.segments.push_back({level, hold});
    }
  } else {
    r.fail(Reader::join(p, "segments"), "required");
  }
  return src;
}

std::optional<DriveCycle> load_source(Reader& r, const CycleSource& src, const std::string& path) {
  std::optional<DriveCycle> out;
  r.check(path, [&] {
    switch (src.kind) {
      case CycleSource::Kind::kBuiltin: out = builtin_cycle(src.builtin); break;
      case CycleSource::Kind::kFile: out = load_cycle(src.file); break;
      case CycleSource::Kind::kSynth: out = synth_cycle(src.synth); break;
    }
  });
  if (out) {
    for (const auto& v : validate_cycle(*out)) r.fail(path, v.message);
  }
  return out;
}

// Same source JSON with relative file paths rewritten against the config
// directory, so the manifest copy is location independent.
void absolutize(json& src, const std::filesystem::path& base_dir) {
  if (src.is_object() && src.contains("file") && src["file"].is_string()) {
    std::filesystem::path f = src["file"].get<std::string>();
    if (!f.is_absolute()) src["file"] = std::filesystem::absolute(base_dir / f).lexically_normal().string();
  }
}

}  // namespace

LearnerConfig baseline_learner(const ExperimentConfig& config) {
  LearnerConfig l = config.mode == RunMode::kEnsemble ? config.agent_b : config.agent_a;
  l.schedule.kind = ScheduleKind::kExponential;
  return l;
}

ConfigParse parse_run_config(std::string_view text, const std::filesystem::path& base_dir) {
  ConfigParse result;
  Reader r;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    result.violations.push_back(std::string("config is not valid JSON: ") + e.what());
    return result;
  }
  if (!r.object(root, "", {"cycle", "plant", "grid", "actions", "agents", "mode", "policy", "episodes",
                           "initial_soc", "seeds", "eval", "sweep", "dp", "output_dir"})) {
    result.violations = std::move(r.violations);
    return result;
  }

  RunConfig cfg;
  ExperimentConfig& ex = cfg.experiment;
  ex = ExperimentConfig{};
  ex.agent_a.schedule.kind = ScheduleKind::kStep;
  ex.agent_b.schedule.kind = ScheduleKind::kExponential;

  if (const json* p = r.child(root, "plant")) read_plant(r, *p, "plant", ex.models);

  if (const json* c = r.child(root, "cycle")) {
    if (auto src = read_cycle_source(r, *c, "cycle", base_dir)) cfg.cycle_source = *src;
  }
  if (auto cycle = load_source(r, cfg.cycle_source, "cycle")) ex.cycle = std::move(*cycle);

  if (const json* g = r.child(root, "grid")) {
    if (r.object(*g, "grid", {"p_dem_bins", "soc_bins"})) {
      std::size_t pb = ex.grid.p_dem_bins();
      std::size_t sb = ex.grid.soc_bins();
      r.count(*g, "p_dem_bins", "grid", pb);
      r.count(*g, "soc_bins", "grid", sb);
      if (pb < 2 || sb < 2) {
        r.fail("grid", "each axis needs at least 2 bins");
      } else {
        ex.grid = StateGrid::uniform(pb, sb);
      }
    }
  }
  if (const json* a = r.child(root, "actions")) {
    if (r.object(*a, "actions", {"levels"})) {
      std::size_t n = ex.actions.size();
      r.count(*a, "levels", "actions", n);
      r.check("actions.levels", [&] { ex.actions = ActionGrid::uniform(ex.models.egu.max_power, n); });
    }
  } else if (ex.models.egu.max_power != ActionGrid::uniform().levels.back()) {
    r.check("actions", [&] { ex.actions = ActionGrid::uniform(ex.models.egu.max_power, ex.actions.size()); });
  }

  if (const json* a = r.child(root, "agents")) {
    if (r.object(*a, "agents", {"A", "B"})) {
      if (const json* v = r.child(*a, "A")) read_learner(r, *v, "agents.A", ex.agent_a);
      if (const json* v = r.child(*a, "B")) read_learner(r, *v, "agents.B", ex.agent_b);
    }
  }

  if (const json* m = r.child(root, "mode")) {
    if (*m == "single") {
      ex.mode = RunMode::kSingle;
    } else if (*m == "ensemble") {
      ex.mode = RunMode::kEnsemble;
    } else {
      r.fail("mode", "expected \"single\" or \"ensemble\"");
    }
  }

  if (const json* p = r.child(root, "policy")) {
    if (r.object(*p, "policy", {"kind", "threshold", "mu", "delta"})) {
      std::string kind;
      r.string(*p, "kind", "policy", kind);
      if (!kind.empty()) r.check("policy.kind", [&] { ex.policy.kind = parse_policy_kind(kind); });
      r.number(*p, "threshold", "policy", ex.policy.threshold);
      const bool has_mu = p->contains("mu");
      const bool has_delta = p->contains("delta");
      r.number(*p, "mu", "policy", ex.policy.mu);
      r.number(*p, "delta", "policy", ex.policy.delta);
      if (has_mu && !has_delta) ex.policy.delta = 1.0 - ex.policy.mu;
      if (has_delta && !has_mu) ex.policy.mu = 1.0 - ex.policy.delta;
      r.check("policy", [&] { ex.policy.validate(); });
    }
  }

  r.count(root, "episodes", "", ex.episodes);
  if (ex.episodes == 0) r.fail("episodes", "must be positive");
  r.number(root, "initial_soc", "", ex.initial_soc);
  if (!(ex.initial_soc >= ex.models.battery.soc_min && ex.initial_soc <= ex.models.battery.soc_max)) {
    r.fail("initial_soc", "outside the battery SoC window");
  }

  if (const json* s = r.child(root, "seeds")) {
    if (s->is_array() && !s->empty()) {
      cfg.seeds.clear();
      for (std::size_t i = 0; i < s->size(); ++i) {
        std::uint64_t v = 0;
        r.seed((*s)[i], "seeds[" + std::to_string(i) + "]", v);
        cfg.seeds.push_back(v);
      }
    } else {
      r.fail("seeds", "expected a nonempty array of integers");
    }
  }
  ex.seed = cfg.seeds.front();

  if (const json* e = r.child(root, "eval")) {
    if (r.object(*e, "eval", {"cycles", "initial_socs", "snapshot_dir"})) {
      if (const json* cs = r.child(*e, "cycles")) {
        if (cs->is_array()) {
          for (std::size_t i = 0; i < cs->size(); ++i) {
            const auto p = "eval.cycles[" + std::to_string(i) + "]";
            if (auto src = read_cycle_source(r, (*cs)[i], p, base_dir)) {
              if (auto c = load_source(r, *src, p)) cfg.eval_cycles.push_back(std::move(*c));
            }
          }
        } else {
          r.fail("eval.cycles", "expected an array of cycle sources");
        }
      }
      if (const json* s = r.child(*e, "initial_socs")) {
        if (auto v = r.numbers(*s, "eval.initial_socs")) cfg.eval_initial_socs = *v;
      }
      std::string dir;
      r.string(*e, "snapshot_dir", "eval", dir);
      if (!dir.empty()) cfg.snapshot_dir = std::filesystem::path(dir).is_absolute() ? std::filesystem::path(dir) : base_dir / dir;
    }
  }
  if (cfg.eval_cycles.empty() && !(root.contains("eval") && root["eval"].is_object() && root["eval"].contains("cycles"))) {
    for (const char* name : {"PRDC-2", "PRDC-3", "PRDC-4"}) cfg.eval_cycles.push_back(builtin_cycle(name));
  }
  for (double s : cfg.eval_initial_socs) {
    if (!(s >= ex.models.battery.soc_min && s <= ex.models.battery.soc_max)) {
      r.fail("eval.initial_socs", "value " + format_double(s) + " outside the battery SoC window");
    }
  }

  if (const json* s = r.child(root, "sweep")) {
    if (r.object(*s, "sweep", {"proportions", "repeats"})) {
      if (const json* p = r.child(*s, "proportions")) {
        if (auto v = r.numbers(*p, "sweep.proportions")) cfg.sweep_proportions = *v;
      }
      r.count(*s, "repeats", "sweep", cfg.sweep_repeats);
      if (cfg.sweep_repeats == 0) r.fail("sweep.repeats", "must be positive");
      for (double mu : cfg.sweep_proportions) {
        if (!(mu >= 0.0 && mu <= 1.0)) r.fail("sweep.proportions", "value " + format_double(mu) + " outside [0, 1]");
      }
    }
  }

  if (const json* d = r.child(root, "dp")) {
    if (r.object(*d, "dp", {"cycle", "soc_nodes", "initial_soc"})) {
      if (const json* c = r.child(*d, "cycle")) {
        if (auto src = read_cycle_source(r, *c, "dp.cycle", base_dir)) cfg.dp_cycle = load_source(r, *src, "dp.cycle");
      }
      r.count(*d, "soc_nodes", "dp", cfg.dp.soc_nodes);
      if (cfg.dp.soc_nodes < 3) r.fail("dp.soc_nodes", "need at least 3 nodes");
      cfg.dp.initial_soc = ex.initial_soc;
      r.number(*d, "initial_soc", "dp", cfg.dp.initial_soc);
    }
  } else {
    cfg.dp.initial_soc = ex.initial_soc;
  }

  std::string out;
  r.string(root, "output_dir", "", out);
  if (!out.empty()) cfg.output_dir = out;
  if (cfg.output_dir.is_relative()) cfg.output_dir = (base_dir / cfg.output_dir).lexically_normal();

  if (r.violations.empty()) r.check("config", [&] { ex.validate(); });

  if (!r.violations.empty()) {
    result.violations = std::move(r.violations);
    return result;
  }

  cfg.source = root;
  if (cfg.source.contains("cycle")) absolutize(cfg.source["cycle"], base_dir);
  if (cfg.source.contains("dp") && cfg.source["dp"].contains("cycle")) absolutize(cfg.source["dp"]["cycle"], base_dir);
  if (cfg.source.contains("eval") && cfg.source["eval"].contains("cycles") && cfg.source["eval"]["cycles"].is_array()) {
    for (auto& c : cfg.source["eval"]["cycles"]) absolutize(c, base_dir);
  }
  if (cfg.snapshot_dir) cfg.source["eval"]["snapshot_dir"] = std::filesystem::absolute(*cfg.snapshot_dir).string();
  result.config = std::move(cfg);
  return result;
}

ConfigParse load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    return {std::nullopt, {std::string("config: ") + e.what()}};
  }
  return parse_run_config(text, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

}  // namespace ems
