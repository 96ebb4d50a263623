#pragma once

// Experiment harness: learning runs, weighted-proportion sweeps, robustness
// evaluation on unseen cycles and a dynamic-programming reference.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ems/drive_cycle.hpp"
#include "ems/ensemble.hpp"
#include "ems/metrics.hpp"
#include "ems/powertrain.hpp"
#include "ems/qlearn.hpp"

namespace ems {

enum class RunMode { kSingle, kEnsemble };

struct ExperimentConfig {
  DriveCycle cycle;
  PowertrainModels models = default_models();
  StateGrid grid = StateGrid::uniform();
  ActionGrid actions = ActionGrid::uniform();
  LearnerConfig agent_a;  // the only agent in single mode
  LearnerConfig agent_b;
  RunMode mode = RunMode::kEnsemble;
  EnsemblePolicy policy;
  std::size_t episodes = 125;
  double initial_soc = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

// PRDC-1 learning cycle, agent A on step decay, agent B on exponential decay,
// weighted 50/50 automaton.
ExperimentConfig default_experiment();

// Stable hash over every field that influences a run.
std::uint64_t fingerprint(const ExperimentConfig& config);

// Frozen knowledge bases ready for exploitation-only evaluation.
struct TrainedController {
  std::string method;
  std::vector<QTable> tables;            // one (single agent) or two (ensemble)
  std::optional<EnsemblePolicy> policy;  // set for ensembles
};

struct RunResult {
  std::vector<EpisodeMetrics> episodes;
  std::uint64_t config_fingerprint = 0;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  TrainedController controller;
  std::size_t balance_violations = 0;
  double max_link_residual = 0.0;
  std::vector<StepTrace> last_trace;  // filled when requested

  const EpisodeMetrics& first() const { return episodes.front(); }
  const EpisodeMetrics& last() const { return episodes.back(); }
};

RunResult run_learning(const ExperimentConfig& config, bool trace_last_episode = false);

// Runs `count` independent jobs on up to `workers` threads. Job i writes only
// to slot i of whatever the caller collects into.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& job);

struct SweepRow {
  double mu = 0.0;
  double delta = 0.0;
  double mean_eff = 0.0;
  double std_eff = 0.0;  // sample standard deviation, 0 for one repeat
  std::size_t repeats = 0;
};

// 0.1, 0.2, ..., 0.9
std::vector<double> default_proportions();

// Weighted-policy runs for each mu in `proportions` (delta = 1 - mu), repeat r
// using seed `config.seed + r`. Rows follow the order of `proportions`.
std::vector<SweepRow> sweep_weights(const ExperimentConfig& config, std::span<const double> proportions,
                                    std::size_t repeats, std::size_t workers = 1);
std::string format_sweep_csv(std::span<const SweepRow> rows);
std::string format_learning_curve_csv(std::span<const EpisodeMetrics> episodes);

// Exploitation-only episode (θ = 0, no learning) with the frozen tables.
EpisodeResult evaluate_controller(const TrainedController& controller, const DriveCycle& cycle, double initial_soc,
                                  const ExperimentConfig& base, bool record_trace = false);

struct RobustnessRow {
  std::string cycle;
  double init_soc = 0.0;
  std::string method;
  double end_soc = 0.0;
  double oec_mj = 0.0;
  std::optional<double> savings;  // fraction; empty on baseline rows
  EpisodeMetrics metrics;
  std::size_t balance_violations = 0;
};

// For every (cycle, initial SoC): a baseline row then a candidate row.
std::vector<RobustnessRow> robustness_eval(const TrainedController& baseline, const TrainedController& candidate,
                                           std::span<const DriveCycle> cycles, std::span<const double> initial_socs,
                                           const ExperimentConfig& base, std::size_t workers = 1);
std::string format_robustness_csv(std::span<const RobustnessRow> rows);

struct DpOptions {
  std::size_t soc_nodes = 121;
  double initial_soc = 0.5;
};

struct DpResult {
  double cost = 0.0;  // J, path_loss + deficit_charge
  double path_loss = 0.0;       // J, engine + battery loss along the optimal path
  double deficit_charge = 0.0;  // J, priced end-SoC shortfall below the reference
  std::vector<ActionIndex> actions;
  std::vector<double> soc_path;  // SoC after each step
  double end_soc = 0.0;
  EpisodeMetrics metrics;
};

// Backward induction over (time, SoC node, charge-sustain latch) with the
// same plant step and linear interpolation between SoC nodes, then a forward
// pass from the exact initial state.
//
// The end-SoC ≥ merit.soc_ref constraint is relaxed into a linear charge on
// the shortfall at dp_deficit_price. A hard penalty leaks into feasible nodes
// through the interpolation and makes the result conservative; the relaxed
// problem stays a lower bound for any episode that meets the constraint.
// Throws std::runtime_error if even running the EGU flat out cannot reach
// the reference.
DpResult dp_baseline(const DriveCycle& cycle, const ActionGrid& actions, const PowertrainModels& models,
                     const DpOptions& options = {});

// J per unit SoC: the cheapest marginal engine loss of storing energy, at the
// terminal energy density of the reference SoC.
double dp_deficit_price(const PowertrainModels& models);

// Episode loss plus the same shortfall charge the DP applies.
double deficit_adjusted_loss(const EpisodeMetrics& m, const PowertrainModels& models);

// Loss allowance worth one DP SoC cell: the cell's energy times the engine
// loss incurred to regenerate it at the best EGU efficiency on the grid.
double dp_cell_slack(const ActionGrid& actions, const PowertrainModels& models, const DpOptions& options = {});

std::string format_dp_csv(const DriveCycle& cycle, const ActionGrid& actions, const DpResult& result);

}  // namespace ems
