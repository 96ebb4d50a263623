#include "ems/commands.hpp"

#include <ostream>

#include "ems/config.hpp"
#include "ems/io.hpp"

namespace ems {

namespace {

using nlohmann::json;

struct Loaded {
  RunConfig config;
  std::filesystem::path out_dir;
};

std::optional<Loaded> load(const CommandOptions& options, std::ostream& err) {
  auto parsed = load_run_config(options.config);
  if (!parsed.config) {
    for (const auto& v : parsed.violations) err << "error: " << v << '\n';
    return std::nullopt;
  }
  Loaded l{std::move(*parsed.config), {}};
  if (options.seed) {
    l.config.seeds = {*options.seed};
    l.config.experiment.seed = *options.seed;
  }
  l.config.source["seeds"] = l.config.seeds;
  l.out_dir = options.out_dir.value_or(l.config.output_dir);
  l.config.source["output_dir"] = l.out_dir.string();
  return l;
}

class Artifacts {
 public:
  explicit Artifacts(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  void write(const std::string& name, const std::string& content) {
    atomic_write(dir_ / name, content);
    hashes_[name] = hex64(fnv1a64(content));
  }

  void manifest(std::string_view command, const Loaded& l, json extra = json::object()) {
    json m;
    m["tool"] = "ems";
    m["version"] = kToolVersion;
    m["command"] = command;
    m["seeds"] = l.config.seeds;
    m["config_fingerprint"] = hex64(fingerprint(l.config.experiment));
    m["config"] = l.config.source;
    m["artifacts"] = hashes_;
    for (auto& [k, v] : extra.items()) m[k] = v;
    const std::string name = "manifest_" + std::string(command) + ".json";
    atomic_write(dir_ / name, m.dump(2) + '\n');
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  json hashes_ = json::object();
};

QSnapshot snapshot_of(const ExperimentConfig& ex, const LearnerConfig& learner, QTable table) {
  return QSnapshot{ex.grid, ex.actions, learner.schedule, std::move(table)};
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
  }
  return kExitRuntime;
}

}  // namespace

int cmd_validate(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  auto parsed = load_run_config(options.config);
  if (!parsed.config) {
    for (const auto& v : parsed.violations) err << "violation: " << v << '\n';
    return kExitValidation;
  }
  out << "config OK: " << options.config.string() << '\n';
  return kExitOk;
}

int cmd_learn(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  auto l = load(options, err);
  if (!l) return kExitValidation;
  return guarded(err, [&] {
    const auto& ex = l->config.experiment;
    auto run = run_learning(ex, options.trace);
    Artifacts art(l->out_dir);
    art.write("learning_curve.csv", format_learning_curve_csv(run.episodes));
    art.write("qtable_A.qtab", format_snapshot(snapshot_of(ex, ex.agent_a, run.controller.tables[0])));
    if (ex.mode == RunMode::kEnsemble) {
      art.write("qtable_B.qtab", format_snapshot(snapshot_of(ex, ex.agent_b, run.controller.tables[1])));
      ExperimentConfig base = ex;
      base.mode = RunMode::kSingle;
      base.agent_a = baseline_learner(ex);
      auto baseline = run_learning(base);
      art.write("baseline.qtab", format_snapshot(snapshot_of(base, base.agent_a, baseline.controller.tables[0])));
    }
    if (options.trace) art.write("trace.csv", format_trace_csv(run.last_trace));
    art.manifest("learn", *l, {{"method", run.controller.method}});

    const auto& first = run.first();
    const auto& last = run.last();
    out << "learn: " << run.episodes.size() << " episodes on " << ex.cycle.label << ", seed " << ex.seed << '\n';
    if (first.energy_efficiency && last.energy_efficiency) {
      out << "efficiency first " << format_fixed(*first.energy_efficiency, 5) << " last "
          << format_fixed(*last.energy_efficiency, 5) << '\n';
    }
    out << "end SoC " << format_fixed(last.end_soc, 4) << ", OEC " << format_fixed(last.oec / 1e6, 2) << " MJ, "
        << format_fixed(run.wall_seconds, 2) << " s\n";
    if (run.balance_violations != 0) {
      err << "error: DC-link balance violated at " << run.balance_violations << " steps\n";
      return int{kExitRuntime};
    }
    return int{kExitOk};
  });
}

int cmd_sweep(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  auto l = load(options, err);
  if (!l) return kExitValidation;
  const auto& ex = l->config.experiment;
  if (ex.mode != RunMode::kEnsemble || ex.policy.kind != PolicyKind::kWeighted) {
    err << "error: sweep needs mode \"ensemble\" with the weighted policy\n";
    return kExitValidation;
  }
  return guarded(err, [&] {
    const auto rows = sweep_weights(ex, l->config.sweep_proportions, l->config.sweep_repeats, options.workers);
    Artifacts art(l->out_dir);
    art.write("sweep.csv", format_sweep_csv(rows));
    art.manifest("sweep", *l, {{"repeats", l->config.sweep_repeats}});
    for (const auto& r : rows) {
      out << "mu " << format_fixed(r.mu, 2) << " delta " << format_fixed(r.delta, 2) << " mean eff "
          << format_fixed(r.mean_eff, 5) << " std " << format_fixed(r.std_eff, 5) << '\n';
    }
    return int{kExitOk};
  });
}

int cmd_eval(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  auto l = load(options, err);
  if (!l) return kExitValidation;
  return guarded(err, [&] {
    const auto& ex = l->config.experiment;
    const auto dir = l->config.snapshot_dir.value_or(l->out_dir);

    TrainedController candidate;
    candidate.tables.push_back(restore_snapshot(dir / "qtable_A.qtab", ex.grid, ex.actions));
    if (ex.mode == RunMode::kEnsemble) {
      candidate.tables.push_back(restore_snapshot(dir / "qtable_B.qtab", ex.grid, ex.actions));
      candidate.policy = ex.policy;
      candidate.method = std::string(to_string(ex.policy.kind));
    } else {
      candidate.method = std::string(to_string(ex.agent_a.schedule.kind));
    }
    TrainedController baseline;
    baseline.method = "exponential";
    baseline.tables.push_back(restore_snapshot(dir / "baseline.qtab", ex.grid, ex.actions));

    const auto rows =
        robustness_eval(baseline, candidate, l->config.eval_cycles, l->config.eval_initial_socs, ex, options.workers);
    Artifacts art(l->out_dir);
    art.write("robustness.csv", format_robustness_csv(rows));
    json inputs = json::object();
    for (const char* name : {"qtable_A.qtab", "qtable_B.qtab", "baseline.qtab"}) {
      if (std::filesystem::exists(dir / name)) inputs[name] = hex64(fnv1a64(read_file(dir / name)));
    }
    art.manifest("eval", *l, {{"snapshots", inputs}, {"snapshot_dir", dir.string()}});
    for (const auto& r : rows) {
      out << r.cycle << " soc0 " << format_fixed(r.init_soc, 2) << ' ' << r.method << " end SoC "
          << format_fixed(r.end_soc, 4) << " OEC " << format_fixed(r.oec_mj, 2) << " MJ";
      if (r.savings) out << " savings " << format_fixed(*r.savings * 100.0, 2) << " %";
      out << '\n';
    }
    return int{kExitOk};
  });
}

int cmd_dp(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  auto l = load(options, err);
  if (!l) return kExitValidation;
  return guarded(err, [&] {
    const auto& ex = l->config.experiment;
    const DriveCycle& cycle = l->config.dp_cycle ? *l->config.dp_cycle : ex.cycle;
    const auto result = dp_baseline(cycle, ex.actions, ex.models, l->config.dp);
    Artifacts art(l->out_dir);
    art.write("dp.csv", format_dp_csv(cycle, ex.actions, result));
    art.manifest("dp", *l,
                 {{"cost_j", result.cost}, {"path_loss_j", result.path_loss}, {"deficit_charge_j", result.deficit_charge}, {"soc_nodes", l->config.dp.soc_nodes}, {"cycle", cycle.label}});
    out << "dp cost: " << format_double(result.cost) << " J (end SoC " << format_fixed(result.end_soc, 4) << ", "
        << cycle.size() << " steps)\n";
    return int{kExitOk};
  });
}

}  // namespace ems
