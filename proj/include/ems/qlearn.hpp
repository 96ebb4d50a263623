#pragma once

// Tabular Q-learning core: state discretization over (power demand, SoC),
// the EGU action grid, exploration-to-exploitation (E2E) decay schedules,
// ε-greedy selection and the one-step value update.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ems/rng.hpp"

namespace ems {

using StateIndex = std::size_t;
using ActionIndex = std::size_t;

struct StateGrid {
  std::vector<double> p_dem_edges;  // W, ascending, spans [0, 253 kW]
  std::vector<double> soc_edges;    // fraction, ascending, spans [0.2, 0.8]

  static StateGrid uniform(std::size_t p_dem_bins = 23, std::size_t soc_bins = 25);

  std::size_t p_dem_bins() const { return p_dem_edges.size() - 1; }
  std::size_t soc_bins() const { return soc_edges.size() - 1; }
  std::size_t size() const { return p_dem_bins() * soc_bins(); }
  void validate() const;

  bool operator==(const StateGrid&) const = default;
};

// Row-major over (p_dem bin, soc bin). Bins are left-closed, right-open,
// except the last bin on each axis which is closed. Out-of-span inputs clamp
// to the boundary bins.
StateIndex discretize(const StateGrid& grid, double p_dem, double soc);

struct ActionGrid {
  std::vector<double> levels;  // W, EGU setpoints

  static ActionGrid uniform(double max_power = 86'200.0, std::size_t count = 11);

  std::size_t size() const { return levels.size(); }
  double level(ActionIndex a) const { return levels.at(a); }
  void validate(double max_power) const;

  bool operator==(const ActionGrid&) const = default;
};

class QTable {
 public:
  QTable() = default;
  QTable(std::size_t states, std::size_t actions, double init = 0.0)
      : states_(states), actions_(actions), values_(states * actions, init) {}

  std::size_t states() const { return states_; }
  std::size_t actions() const { return actions_; }

  double operator()(StateIndex s, ActionIndex a) const { return values_[s * actions_ + a]; }
  double& at(StateIndex s, ActionIndex a) { return values_[s * actions_ + a]; }
  std::span<const double> row(StateIndex s) const {
    return {values_.data() + s * actions_, actions_};
  }

  // Lowest index among the maxima.
  ActionIndex argmax(StateIndex s) const;
  double max_value(StateIndex s) const;

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  bool operator==(const QTable&) const = default;

 private:
  std::size_t states_ = 0;
  std::size_t actions_ = 0;
  std::vector<double> values_;
};

enum class ScheduleKind { kConstant, kExponential, kStep, kReciprocal };

std::string_view to_string(ScheduleKind kind);
// Accepts the long names and the EXD / SBD / RBD abbreviations.
ScheduleKind parse_schedule_kind(std::string_view name);

struct E2ESchedule {
  ScheduleKind kind = ScheduleKind::kExponential;
  double alpha1 = 0.8;       // initial E2E
  double factor = 0.5;       // step: drop factor F
  double step_width = 10.0;  // step: D, iterations per drop
  double decay_rate = 0.1;   // reciprocal: R_decay

  void validate() const;
  bool operator==(const E2ESchedule&) const = default;
};

// θ(k) for learning iteration k:
//   constant     α₁
//   exponential  α₁^k (1 at k = 0; learning runs start at k = 1)
//   step         α₁ · F^round((1 + k) / D), round half away from zero
//   reciprocal   α₁ / (1 + R_decay · k)
double e2e_value(const E2ESchedule& schedule, std::uint64_t k);

struct LearnerConfig {
  double learning_rate = 0.5;
  double discount = 0.95;
  E2ESchedule schedule;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

// ε-greedy: draws T ~ U[0,1); exploits when T ≥ θ, otherwise picks a uniform
// random action.
ActionIndex select_action(const QTable& q, StateIndex s, double theta, Rng& rng);

void q_update(QTable& q, StateIndex s, ActionIndex a, double reward, StateIndex s_next,
              const LearnerConfig& cfg);
// Terminal transition: no bootstrap term.
void q_update_terminal(QTable& q, StateIndex s, ActionIndex a, double reward, const LearnerConfig& cfg);

// ---------------------------------------------------------------------------
// Snapshots

class SnapshotError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QSnapshot {
  StateGrid grid;
  ActionGrid actions;
  E2ESchedule schedule;
  QTable table;
};

std::string format_snapshot(const QSnapshot& snapshot);
QSnapshot parse_snapshot(std::string_view text);
void save_snapshot(const QSnapshot& snapshot, const std::filesystem::path& path);
QSnapshot load_snapshot(const std::filesystem::path& path);
// Loads and checks the grids match the ones the caller will use.
QTable restore_snapshot(const std::filesystem::path& path, const StateGrid& grid, const ActionGrid& actions);

}  // namespace ems
