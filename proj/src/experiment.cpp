#include "ems/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "ems/io.hpp"

namespace ems {

void ExperimentConfig::validate() const {
  if (const auto v = validate_cycle(cycle); !v.empty()) {
    throw std::invalid_argument("cycle '" + cycle.label + "': " + v.front().message);
  }
  models.validate();
  grid.validate();
  actions.validate(models.egu.max_power);
  agent_a.validate();
  if (mode == RunMode::kEnsemble) {
    agent_b.validate();
    policy.validate();
  }
  if (episodes == 0) throw std::invalid_argument("episodes must be positive");
  if (!(initial_soc >= models.battery.soc_min && initial_soc <= models.battery.soc_max)) {
    throw std::invalid_argument("initial_soc outside the battery SoC window");
  }
}

ExperimentConfig default_experiment() {
  ExperimentConfig cfg;
  cfg.cycle = builtin_cycle("PRDC-1");
  cfg.agent_a.schedule.kind = ScheduleKind::kStep;
  cfg.agent_b.schedule.kind = ScheduleKind::kExponential;
  return cfg;
}

namespace {

class Canon {
 public:
  Canon& operator()(std::string_view key, double v) {
    s_ += key;
    s_ += '=';
    s_ += format_double(v);
    s_ += ';';
    return *this;
  }
  Canon& operator()(std::string_view key, std::string_view v) {
    s_ += key;
    s_ += '=';
    s_ += v;
    s_ += ';';
    return *this;
  }
  Canon& list(std::string_view key, const std::vector<double>& xs) {
    s_ += key;
    s_ += "=[";
    for (double x : xs) {
      s_ += format_double(x);
      s_ += ',';
    }
    s_ += "];";
    return *this;
  }
  Canon& curve(std::string_view key, const SocCurve& c) {
    s_ += key;
    s_ += "=[";
    for (const auto& [x, y] : c.points()) {
      s_ += format_double(x) + ':' + format_double(y) + ',';
    }
    s_ += "];";
    return *this;
  }
  const std::string& str() const { return s_; }

 private:
  std::string s_;
};

void canon_learner(Canon& c, std::string_view prefix, const LearnerConfig& l) {
  const std::string p(prefix);
  c(p + ".lr", l.learning_rate)(p + ".gamma", l.discount)(p + ".kind", to_string(l.schedule.kind))(
      p + ".alpha1", l.schedule.alpha1)(p + ".F", l.schedule.factor)(p + ".D", l.schedule.step_width)(
      p + ".r", l.schedule.decay_rate);
}

}  // namespace

std::uint64_t fingerprint(const ExperimentConfig& cfg) {
  Canon c;
  c("cycle.label", cfg.cycle.label)("cycle.dt", cfg.cycle.dt).list("cycle.demand", cfg.cycle.demand);
  const auto& m = cfg.models;
  c("veh.mass", m.vehicle.mass)("veh.area", m.vehicle.frontal_area)("veh.cd", m.vehicle.drag_coeff)(
      "veh.cr", m.vehicle.rolling_friction_coeff)("veh.gear", m.vehicle.gear_ratio)(
      "veh.eta", m.vehicle.driveline_efficiency)("veh.rho", m.vehicle.air_density);
  c("mot.pn", m.motor.nominal_power)("mot.n", m.motor.rated_speed)("mot.c2", m.motor.c2)("mot.c1", m.motor.c1)(
      "mot.c0", m.motor.c0);
  c("egu.max", m.egu.max_power)("egu.b2", m.egu.fuel.b2)("egu.b1", m.egu.fuel.b1)("egu.b0", m.egu.fuel.b0)(
      "egu.rho", m.egu.fuel_density)("egu.hf", m.egu.fuel_heating_value);
  c("bat.cap", m.battery.cell_capacity)("bat.n", static_cast<double>(m.battery.num_cells))
      .curve("bat.u", m.battery.cell_voltage)
      .curve("bat.r", m.battery.cell_resistance)("bat.min", m.battery.soc_min)("bat.max", m.battery.soc_max)(
          "bat.pch", m.battery.max_charge_power)("bat.pdis", m.battery.max_discharge_power);
  c("cs.th", m.charge_sustain.threshold)("cs.margin", m.charge_sustain.release_margin);
  c("merit.rini", m.merit.r_ini)("merit.ref", m.merit.soc_ref)("merit.k", m.merit.penalty_coeff);
  c.list("grid.p", cfg.grid.p_dem_edges).list("grid.soc", cfg.grid.soc_edges).list("actions", cfg.actions.levels);
  canon_learner(c, "A", cfg.agent_a);
  c("mode", cfg.mode == RunMode::kEnsemble ? "ensemble" : "single");
  if (cfg.mode == RunMode::kEnsemble) {
    canon_learner(c, "B", cfg.agent_b);
    c("policy", to_string(cfg.policy.kind))("T", cfg.policy.threshold)("mu", cfg.policy.mu)("delta", cfg.policy.delta);
  }
  c("episodes", static_cast<double>(cfg.episodes))("soc0", cfg.initial_soc)("seed", std::to_string(cfg.seed));
  return fnv1a64(c.str());
}

RunResult run_learning(const ExperimentConfig& cfg, bool trace_last_episode) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const Environment env{cfg.models, cfg.grid, cfg.actions};

  LearnerConfig cfg_a = cfg.agent_a;
  cfg_a.rng_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(RngStream::kAgentA));
  LearnerConfig cfg_b = cfg.agent_b;
  cfg_b.rng_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(RngStream::kAgentB));
  Agent a = Agent::create(cfg_a, cfg.grid, cfg.actions);
  Agent b = Agent::create(cfg_b, cfg.grid, cfg.actions);
  Rng automaton = Rng::stream(cfg.seed, RngStream::kAutomaton);
  const bool ensemble = cfg.mode == RunMode::kEnsemble;

  RunResult result;
  result.seed = cfg.seed;
  result.config_fingerprint = fingerprint(cfg);
  result.episodes.reserve(cfg.episodes);
  for (std::uint64_t k = 1; k <= cfg.episodes; ++k) {
    EpisodeOptions opt;
    opt.episode_index = k;
    opt.initial_soc = cfg.initial_soc;
    opt.record_trace = trace_last_episode && k == cfg.episodes;
    auto ep = ensemble ? run_ensemble_episode(cfg.cycle, a, b, cfg.policy, automaton, env, opt)
                       : run_single_episode(cfg.cycle, a, env, opt);
    result.balance_violations += ep.balance_violations;
    result.max_link_residual = std::max(result.max_link_residual, ep.max_link_residual);
    result.episodes.push_back(ep.metrics);
    if (opt.record_trace) result.last_trace = std::move(ep.trace);
  }

  if (ensemble) {
    result.controller.method = std::string(to_string(cfg.policy.kind));
    result.controller.tables = {std::move(a.table), std::move(b.table)};
    result.controller.policy = cfg.policy;
  } else {
    result.controller.method = std::string(to_string(cfg.agent_a.schedule.kind));
    result.controller.tables = {std::move(a.table)};
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& job) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<double> default_proportions() {
  std::vector<double> p;
  for (int i = 1; i <= 9; ++i) p.push_back(i / 10.0);
  return p;
}

std::vector<SweepRow> sweep_weights(const ExperimentConfig& config, std::span<const double> proportions,
                                    std::size_t repeats, std::size_t workers) {
  if (config.mode != RunMode::kEnsemble || config.policy.kind != PolicyKind::kWeighted) {
    throw std::invalid_argument("sweep_weights requires an ensemble run with the weighted policy");
  }
  if (repeats == 0) throw std::invalid_argument("sweep_weights: repeats must be positive");
  const std::size_t n = proportions.size() * repeats;
  std::vector<double> finals(n, 0.0);
  parallel_for(n, workers, [&](std::size_t job) {
    ExperimentConfig cfg = config;
    cfg.policy.mu = proportions[job / repeats];
    cfg.policy.delta = 1.0 - cfg.policy.mu;
    cfg.seed = config.seed + job % repeats;
    const auto run = run_learning(cfg);
    finals[job] = run.last().energy_efficiency.value_or(std::numeric_limits<double>::quiet_NaN());
  });

  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < proportions.size(); ++i) {
    SweepRow row;
    row.mu = proportions[i];
    row.delta = 1.0 - proportions[i];
    row.repeats = repeats;
    const auto first = finals.begin() + static_cast<std::ptrdiff_t>(i * repeats);
    const auto last = first + static_cast<std::ptrdiff_t>(repeats);
    row.mean_eff = std::accumulate(first, last, 0.0) / static_cast<double>(repeats);
    if (repeats > 1) {
      double ss = 0.0;
      for (auto it = first; it != last; ++it) ss += (*it - row.mean_eff) * (*it - row.mean_eff);
      row.std_eff = std::sqrt(ss / static_cast<double>(repeats - 1));
    }
    rows.push_back(row);
  }
  return rows;
}

std::string format_sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "mu,delta,mean_eff,std_eff,repeats\n";
  for (const auto& r : rows) {
    out += format_double(r.mu) + ',' + format_double(r.delta) + ',' + format_double(r.mean_eff) + ',' +
           format_double(r.std_eff) + ',' + std::to_string(r.repeats) + '\n';
  }
  return out;
}

std::string format_learning_curve_csv(std::span<const EpisodeMetrics> episodes) {
  std::string out = "episode,efficiency,oec_j,end_soc\n";
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const auto& m = episodes[i];
    out += std::to_string(i + 1) + ',' + (m.energy_efficiency ? format_double(*m.energy_efficiency) : "") + ',' +
           format_double(m.oec) + ',' + format_double(m.end_soc) + '\n';
  }
  return out;
}

EpisodeResult evaluate_controller(const TrainedController& controller, const DriveCycle& cycle, double initial_soc,
                                  const ExperimentConfig& base, bool record_trace) {
  const Environment env{base.models, base.grid, base.actions};
  EpisodeOptions opt;
  opt.initial_soc = initial_soc;
  opt.learn = false;
  opt.theta = 0.0;
  opt.record_trace = record_trace;
  for (const auto& t : controller.tables) {
    if (t.states() != base.grid.size() || t.actions() != base.actions.size()) {
      throw std::invalid_argument("evaluate_controller: table dimensions do not match the grids");
    }
  }
  // Greedy selection ignores the draws, but the streams stay seeded for the
  // random automaton policy.
  auto make_agent = [&](const QTable& table, RngStream stream) {
    LearnerConfig lc;
    lc.rng_seed = derive_seed(base.seed, static_cast<std::uint64_t>(stream));
    return Agent{lc, table, Rng(lc.rng_seed)};
  };
  if (controller.tables.size() == 1) {
    Agent a = make_agent(controller.tables[0], RngStream::kAgentA);
    return run_single_episode(cycle, a, env, opt);
  }
  if (controller.tables.size() != 2 || !controller.policy) {
    throw std::invalid_argument("evaluate_controller: ensemble controller needs two tables and a policy");
  }
  Agent a = make_agent(controller.tables[0], RngStream::kAgentA);
  Agent b = make_agent(controller.tables[1], RngStream::kAgentB);
  Rng automaton = Rng::stream(base.seed, RngStream::kAutomaton);
  return run_ensemble_episode(cycle, a, b, *controller.policy, automaton, env, opt);
}

std::vector<RobustnessRow> robustness_eval(const TrainedController& baseline, const TrainedController& candidate,
                                           std::span<const DriveCycle> cycles, std::span<const double> initial_socs,
                                           const ExperimentConfig& base, std::size_t workers) {
  const std::size_t cases = cycles.size() * initial_socs.size();
  std::vector<RobustnessRow> rows(2 * cases);
  parallel_for(2 * cases, workers, [&](std::size_t job) {
    const std::size_t c = job / 2;
    const auto& cycle = cycles[c / initial_socs.size()];
    const double soc0 = initial_socs[c % initial_socs.size()];
    const auto& ctl = job % 2 == 0 ? baseline : candidate;
    const auto ep = evaluate_controller(ctl, cycle, soc0, base);
    RobustnessRow& row = rows[job];
    row.cycle = cycle.label;
    row.init_soc = soc0;
    row.method = ctl.method;
    row.end_soc = ep.metrics.end_soc;
    row.oec_mj = ep.metrics.oec / 1e6;
    row.metrics = ep.metrics;
    row.balance_violations = ep.balance_violations;
  });
  for (std::size_t c = 0; c < cases; ++c) {
    rows[2 * c + 1].savings = savings(rows[2 * c].metrics.oec, rows[2 * c + 1].metrics.oec);
  }
  return rows;
}

std::string format_robustness_csv(std::span<const RobustnessRow> rows) {
  std::string out = "cycle,init_soc,method,end_soc,oec_mj,savings_pct\n";
  for (const auto& r : rows) {
    out += r.cycle + ',' + format_double(r.init_soc) + ',' + r.method + ',' + format_double(r.end_soc) + ',' +
           format_double(r.oec_mj) + ',' + (r.savings ? format_fixed(*r.savings * 100.0, 4) : "") + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dynamic programming reference

namespace {

struct SocNodes {
  double lo;
  double hi;
  std::size_t n;

  double at(std::size_t j) const {
    return j + 1 == n ? hi : lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(n - 1);
  }
  double cell() const { return (hi - lo) / static_cast<double>(n - 1); }
};

// values laid out as [latch][node]
double interpolate(const std::vector<double>& values, const SocNodes& nodes, double soc, bool latch) {
  const double* v = values.data() + (latch ? nodes.n : 0);
  const double x = std::clamp((soc - nodes.lo) / (nodes.hi - nodes.lo), 0.0, 1.0) * static_cast<double>(nodes.n - 1);
  const auto i = std::min(static_cast<std::size_t>(x), nodes.n - 2);
  const double w = x - static_cast<double>(i);
  return v[i] + w * (v[i + 1] - v[i]);
}

}  // namespace

DpResult dp_baseline(const DriveCycle& cycle, const ActionGrid& actions, const PowertrainModels& models,
                     const DpOptions& options) {
  if (const auto v = validate_cycle(cycle); !v.empty()) throw std::invalid_argument("dp_baseline: " + v.front().message);
  if (options.soc_nodes < 3) throw std::invalid_argument("dp_baseline: need at least 3 SoC nodes");
  models.validate();
  actions.validate(models.egu.max_power);
  const SocNodes nodes{models.battery.soc_min, models.battery.soc_max, options.soc_nodes};
  const double soc_ref = models.merit.soc_ref;
  const std::size_t horizon = cycle.size();
  const std::size_t width = 2 * nodes.n;
  const double price = dp_deficit_price(models);

  {
    PlantState s = PlantState::initial(options.initial_soc);
    for (std::size_t t = 0; t < horizon; ++t) {
      s = plant_step(s, cycle.demand[t], models.egu.max_power, cycle.dt, models).state;
    }
    if (s.soc < soc_ref - 1e-9) {
      throw std::runtime_error("dp_baseline: terminal SoC constraint infeasible (best reachable end SoC " +
                               format_double(s.soc) + ")");
    }
  }

  std::vector<std::vector<double>> value(horizon + 1, std::vector<double>(width, 0.0));
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t j = 0; j < nodes.n; ++j) {
      value[horizon][l * nodes.n + j] = price * std::max(0.0, soc_ref - nodes.at(j));
    }
  }

  auto stage = [&](const PlantState& s, std::size_t t, ActionIndex a, const std::vector<double>& next) {
    const auto r = plant_step(s, cycle.demand[t], actions.level(a), cycle.dt, models);
    return r.outcome.p_loss_total * cycle.dt + interpolate(next, nodes, r.state.soc, r.state.charge_sustain_active);
  };

  for (std::size_t t = horizon; t-- > 0;) {
    for (std::size_t l = 0; l < 2; ++l) {
      for (std::size_t j = 0; j < nodes.n; ++j) {
        PlantState s = PlantState::initial(nodes.at(j));
        s.charge_sustain_active = l == 1;
        double best = std::numeric_limits<double>::infinity();
        for (ActionIndex a = 0; a < actions.size(); ++a) best = std::min(best, stage(s, t, a, value[t + 1]));
        value[t][l * nodes.n + j] = best;
      }
    }
  }

  DpResult result;
  PlantState s = PlantState::initial(options.initial_soc);
  double total_reward = 0.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    ActionIndex best_a = 0;
    double best = std::numeric_limits<double>::infinity();
    for (ActionIndex a = 0; a < actions.size(); ++a) {
      const double c = stage(s, t, a, value[t + 1]);
      if (c < best) {
        best = c;
        best_a = a;
      }
    }
    const auto r = plant_step(s, cycle.demand[t], actions.level(best_a), cycle.dt, models);
    s = r.state;
    result.cost += r.outcome.p_loss_total * cycle.dt;
    total_reward += r.outcome.reward;
    result.actions.push_back(best_a);
    result.soc_path.push_back(s.soc);
  }
  result.end_soc = s.soc;
  result.path_loss = result.cost;
  result.deficit_charge = price * std::max(0.0, soc_ref - s.soc);
  result.cost += result.deficit_charge;
  result.metrics = make_metrics(s, options.initial_soc, models.battery, total_reward);
  return result;
}

double dp_deficit_price(const PowertrainModels& models) {
  const auto& f = models.egu.fuel;
  const double slope = std::min(f.b1, f.b1 + 2.0 * f.b2 * models.egu.max_power);
  return std::max(0.0, slope - 1.0) * models.battery.energy_per_soc(models.merit.soc_ref);
}

double deficit_adjusted_loss(const EpisodeMetrics& m, const PowertrainModels& models) {
  return m.controllable_loss() + dp_deficit_price(models) * std::max(0.0, models.merit.soc_ref - m.end_soc);
}

double dp_cell_slack(const ActionGrid& actions, const PowertrainModels& models, const DpOptions& options) {
  const SocNodes nodes{models.battery.soc_min, models.battery.soc_max, options.soc_nodes};
  double best_eff = 0.0;
  for (double p : actions.levels) best_eff = std::max(best_eff, egu_efficiency(models.egu, p));
  const double cell_energy = nodes.cell() * models.battery.energy_per_soc(models.merit.soc_ref);
  return cell_energy * (1.0 / best_eff - 1.0);
}

std::string format_dp_csv(const DriveCycle& cycle, const ActionGrid& actions, const DpResult& result) {
  std::string out = "t_s,action,p_egu_cmd_w,soc\n";
  for (std::size_t t = 0; t < result.actions.size(); ++t) {
    out += format_double(cycle.dt * static_cast<double>(t)) + ',' + std::to_string(result.actions[t]) + ',' +
           format_double(actions.level(result.actions[t])) + ',' + format_double(result.soc_path[t]) + '\n';
  }
  return out;
}

}  // namespace ems
