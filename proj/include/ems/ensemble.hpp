#pragma once

// Learning automata module: two base learners propose an EGU setpoint each
// step, the automaton merges the proposals into one executed action, and the
// single observed reward updates both knowledge bases.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ems/drive_cycle.hpp"
#include "ems/metrics.hpp"
#include "ems/powertrain.hpp"
#include "ems/qlearn.hpp"
#include "ems/rng.hpp"

namespace ems {

enum class PolicyKind { kMaximum, kRandom, kWeighted };

std::string_view to_string(PolicyKind kind);
PolicyKind parse_policy_kind(std::string_view name);

struct EnsemblePolicy {
  PolicyKind kind = PolicyKind::kWeighted;
  double threshold = 0.5;  // random: deciding variable T
  double mu = 0.5;         // weighted: share of agent A
  double delta = 0.5;      // weighted: share of agent B

  void validate() const;
};

enum class Chooser { kA, kB, kBlend, kMaxA, kMaxB };
std::string_view to_string(Chooser chooser);

// Each agent's proposal is scored by its own estimate Q_X(s, a_X); ties go to A.
ActionIndex combine_max(ActionIndex a_A, double v_A, ActionIndex a_B, double v_B);
// Y ~ U[0,1): a_A when Y ≥ T, otherwise a_B.
ActionIndex combine_random(ActionIndex a_A, ActionIndex a_B, double threshold, Rng& rng);
// Blends the two setpoints in power space and snaps to the nearest grid
// level, preferring the lower level on a tie.
ActionIndex combine_weighted(ActionIndex a_A, ActionIndex a_B, double mu, double delta, const ActionGrid& grid);

struct Agent {
  LearnerConfig config;
  QTable table;
  Rng rng;

  // Zero-initialized table; the exploration stream is seeded from config.rng_seed.
  static Agent create(const LearnerConfig& config, const StateGrid& grid, const ActionGrid& actions) {
    return Agent{config, QTable(grid.size(), actions.size()), Rng(config.rng_seed)};
  }
};

// Immutable pieces shared by every step of a run.
struct Environment {
  const PowertrainModels& models;
  const StateGrid& grid;
  const ActionGrid& actions;
};

struct StepTrace {
  double t = 0.0;
  StateIndex state = 0;
  ActionIndex a_A = 0;
  std::optional<ActionIndex> a_B;  // empty for single-agent runs
  ActionIndex a_final = 0;
  Chooser chooser = Chooser::kA;
  double reward = 0.0;
  double soc = 0.0;  // after the step
  double p_egu = 0.0;
  double p_batt = 0.0;
  bool forced = false;

  bool operator==(const StepTrace&) const = default;
};

struct StepArgs {
  double p_dem = 0.0;
  std::optional<double> next_demand;  // empty on the last step of a cycle
  double dt = 1.0;
  double t = 0.0;
  bool learn = true;
};

struct StepResult {
  StepTrace trace;
  StepOutcome outcome;
};

StepResult ensemble_step(Agent& a, Agent& b, PlantState& plant, const StepArgs& args,
                         const EnsemblePolicy& policy, double theta_a, double theta_b, Rng& automaton_rng,
                         const Environment& env);

StepResult single_agent_step(Agent& agent, PlantState& plant, const StepArgs& args, double theta,
                             const Environment& env);

struct EpisodeOptions {
  std::uint64_t episode_index = 1;
  double initial_soc = 0.5;
  bool learn = true;
  // Replaces the schedule value for every agent (evaluation uses 0).
  std::optional<double> theta;
  bool record_trace = false;
};

struct EpisodeResult {
  EpisodeMetrics metrics;
  std::vector<StepTrace> trace;
  // Steps where P_lk != P_egu + P_bd - P_cg, compared with ==.
  std::size_t balance_violations = 0;
  // Largest |P_lk - (P_trm + P_loss,trm)| / max(1 W, P_lk) over the episode.
  double max_link_residual = 0.0;
};

EpisodeResult run_ensemble_episode(const DriveCycle& cycle, Agent& a, Agent& b, const EnsemblePolicy& policy,
                                   Rng& automaton_rng, const Environment& env, const EpisodeOptions& options);

EpisodeResult run_single_episode(const DriveCycle& cycle, Agent& agent, const Environment& env,
                                 const EpisodeOptions& options);

// `t_s,state_idx,a_A,a_B,a_final,chooser,reward,soc,p_egu_w,p_batt_w,forced`
std::string format_trace_csv(std::span<const StepTrace> trace);

}  // namespace ems
