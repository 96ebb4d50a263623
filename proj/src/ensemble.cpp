#include "ems/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ems/io.hpp"

namespace ems {

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kMaximum: return "maximum";
    case PolicyKind::kRandom: return "random";
    case PolicyKind::kWeighted: return "weighted";
  }
  return "unknown";
}

PolicyKind parse_policy_kind(std::string_view name) {
  if (name == "maximum" || name == "max") return PolicyKind::kMaximum;
  if (name == "random") return PolicyKind::kRandom;
  if (name == "weighted" || name == "WBD") return PolicyKind::kWeighted;
  throw std::invalid_argument("unknown ensemble policy '" + std::string(name) + "'");
}

void EnsemblePolicy::validate() const {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw std::invalid_argument("policy threshold T must be in [0, 1]");
  if (!(mu >= 0.0 && delta >= 0.0)) throw std::invalid_argument("policy mu and delta must be nonnegative");
  if (std::abs(mu + delta - 1.0) > 1e-9) throw std::invalid_argument("policy mu + delta must equal 1");
}

std::string_view to_string(Chooser chooser) {
  switch (chooser) {
    case Chooser::kA: return "A";
    case Chooser::kB: return "B";
    case Chooser::kBlend: return "blend";
    case Chooser::kMaxA: return "max-A";
    case Chooser::kMaxB: return "max-B";
  }
  return "?";
}

ActionIndex combine_max(ActionIndex a_A, double v_A, ActionIndex a_B, double v_B) {
  return v_A >= v_B ? a_A : a_B;
}

ActionIndex combine_random(ActionIndex a_A, ActionIndex a_B, double threshold, Rng& rng) {
  return rng.uniform() >= threshold ? a_A : a_B;
}

ActionIndex combine_weighted(ActionIndex a_A, ActionIndex a_B, double mu, double delta, const ActionGrid& grid) {
  const double p = mu * grid.level(a_A) + delta * grid.level(a_B);
  const auto& lv = grid.levels;
  const auto hi = std::lower_bound(lv.begin(), lv.end(), p);
  if (hi == lv.begin()) return 0;
  if (hi == lv.end()) return lv.size() - 1;
  const auto upper = static_cast<ActionIndex>(hi - lv.begin());
  const ActionIndex lower = upper - 1;
  return (p - lv[lower] <= lv[upper] - p) ? lower : upper;
}

namespace {

StepResult execute(PlantState& plant, StateIndex s, ActionIndex a_final, const StepArgs& args,
                   const Environment& env) {
  auto step = plant_step(plant, args.p_dem, env.actions.level(a_final), args.dt, env.models);
  plant = step.state;
  StepResult r;
  r.outcome = step.outcome;
  r.trace.t = args.t;
  r.trace.state = s;
  r.trace.a_final = a_final;
  r.trace.reward = step.outcome.reward;
  r.trace.soc = step.outcome.soc_after;
  r.trace.p_egu = step.outcome.p_egu_applied;
  r.trace.p_batt = step.outcome.p_batt;
  r.trace.forced = step.outcome.forced_charging;
  return r;
}

void learn_from(Agent& agent, StateIndex s, ActionIndex a, double reward, const PlantState& plant,
                const StepArgs& args, const Environment& env) {
  if (args.next_demand) {
    q_update(agent.table, s, a, reward, discretize(env.grid, *args.next_demand, plant.soc), agent.config);
  } else {
    q_update_terminal(agent.table, s, a, reward, agent.config);
  }
}

}  // namespace

StepResult ensemble_step(Agent& a, Agent& b, PlantState& plant, const StepArgs& args,
                         const EnsemblePolicy& policy, double theta_a, double theta_b, Rng& automaton_rng,
                         const Environment& env) {
  const StateIndex s = discretize(env.grid, args.p_dem, plant.soc);
  const ActionIndex a_A = select_action(a.table, s, theta_a, a.rng);
  const ActionIndex a_B = select_action(b.table, s, theta_b, b.rng);

  ActionIndex a_final = a_A;
  Chooser chooser = Chooser::kA;
  switch (policy.kind) {
    case PolicyKind::kMaximum:
      a_final = combine_max(a_A, a.table(s, a_A), a_B, b.table(s, a_B));
      chooser = a.table(s, a_A) >= b.table(s, a_B) ? Chooser::kMaxA : Chooser::kMaxB;
      break;
    case PolicyKind::kRandom: {
      const double y = automaton_rng.uniform();
      a_final = y >= policy.threshold ? a_A : a_B;
      chooser = y >= policy.threshold ? Chooser::kA : Chooser::kB;
      break;
    }
    case PolicyKind::kWeighted:
      a_final = combine_weighted(a_A, a_B, policy.mu, policy.delta, env.actions);
      chooser = Chooser::kBlend;
      break;
  }

  auto result = execute(plant, s, a_final, args, env);
  result.trace.a_A = a_A;
  result.trace.a_B = a_B;
  result.trace.chooser = chooser;
  if (args.learn) {
    // Both knowledge bases learn from the executed action.
    learn_from(a, s, a_final, result.trace.reward, plant, args, env);
    learn_from(b, s, a_final, result.trace.reward, plant, args, env);
  }
  return result;
}

StepResult single_agent_step(Agent& agent, PlantState& plant, const StepArgs& args, double theta,
                             const Environment& env) {
  const StateIndex s = discretize(env.grid, args.p_dem, plant.soc);
  const ActionIndex a = select_action(agent.table, s, theta, agent.rng);
  auto result = execute(plant, s, a, args, env);
  result.trace.a_A = a;
  result.trace.chooser = Chooser::kA;
  if (args.learn) learn_from(agent, s, a, result.trace.reward, plant, args, env);
  return result;
}

namespace {

template <typename StepFn>
EpisodeResult run_episode(const DriveCycle& cycle, const Environment& env, const EpisodeOptions& options,
                          StepFn&& step_fn) {
  if (!validate_cycle(cycle).empty()) throw CycleError("run_episode: invalid cycle '" + cycle.label + "'");
  EpisodeResult result;
  PlantState plant = PlantState::initial(options.initial_soc);
  double total_reward = 0.0;
  if (options.record_trace) result.trace.reserve(cycle.size());
  for (std::size_t i = 0; i < cycle.size(); ++i) {
    StepArgs args;
    args.p_dem = cycle.demand[i];
    if (i + 1 < cycle.size()) args.next_demand = cycle.demand[i + 1];
    args.dt = cycle.dt;
    args.t = cycle.dt * static_cast<double>(i);
    args.learn = options.learn;
    const StepResult r = step_fn(plant, args);
    const auto& o = r.outcome;
    if (o.p_link != o.p_egu_applied + std::max(o.p_batt, 0.0) - std::max(-o.p_batt, 0.0)) {
      ++result.balance_violations;
    }
    result.max_link_residual = std::max(
        result.max_link_residual, std::abs(o.p_link - (o.p_trm + o.p_motor_loss)) / std::max(1.0, o.p_link));
    total_reward += o.reward;
    if (options.record_trace) result.trace.push_back(r.trace);
  }
  result.metrics = make_metrics(plant, options.initial_soc, env.models.battery, total_reward);
  return result;
}

}  // namespace

EpisodeResult run_ensemble_episode(const DriveCycle& cycle, Agent& a, Agent& b, const EnsemblePolicy& policy,
                                   Rng& automaton_rng, const Environment& env, const EpisodeOptions& options) {
  const double theta_a = options.theta.value_or(e2e_value(a.config.schedule, options.episode_index));
  const double theta_b = options.theta.value_or(e2e_value(b.config.schedule, options.episode_index));
  return run_episode(cycle, env, options, [&](PlantState& plant, const StepArgs& args) {
    return ensemble_step(a, b, plant, args, policy, theta_a, theta_b, automaton_rng, env);
  });
}

EpisodeResult run_single_episode(const DriveCycle& cycle, Agent& agent, const Environment& env,
                                 const EpisodeOptions& options) {
  const double theta = options.theta.value_or(e2e_value(agent.config.schedule, options.episode_index));
  return run_episode(cycle, env, options, [&](PlantState& plant, const StepArgs& args) {
    return single_agent_step(agent, plant, args, theta, env);
  });
}

std::string format_trace_csv(std::span<const StepTrace> trace) {
  std::string out = "t_s,state_idx,a_A,a_B,a_final,chooser,reward,soc,p_egu_w,p_batt_w,forced\n";
  for (const auto& t : trace) {
    out += format_double(t.t) + ',' + std::to_string(t.state) + ',' + std::to_string(t.a_A) + ',';
    if (t.a_B) out += std::to_string(*t.a_B);
    out += ',' + std::to_string(t.a_final) + ',' + std::string(to_string(t.chooser)) + ',' + format_double(t.reward) +
           ',' + format_double(t.soc) + ',' + format_double(t.p_egu) + ',' + format_double(t.p_batt) + ',' +
           (t.forced ? "1" : "0") + '\n';
  }
  return out;
}

}  // namespace ems
