#include "ems/qlearn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ems/drive_cycle.hpp"
#include "ems/io.hpp"

namespace ems {

namespace {

std::vector<double> uniform_edges(double lo, double hi, std::size_t bins) {
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i < bins; ++i) {
    edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  }
  edges[bins] = hi;
  return edges;
}

void check_edges(const std::vector<double>& edges, double lo, double hi, const char* axis) {
  if (edges.size() < 3) {
    throw std::invalid_argument(std::string("state grid: ") + axis + " needs at least 2 bins");
  }
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) {
      throw std::invalid_argument(std::string("state grid: ") + axis + " edges must be strictly ascending");
    }
  }
  if (edges.front() > lo || edges.back() < hi) {
    throw std::invalid_argument(std::string("state grid: ") + axis + " edges must cover the full range");
  }
}

std::size_t bin_of(const std::vector<double>& edges, double x) {
  const auto it = std::upper_bound(edges.begin(), edges.end(), x);
  if (it == edges.begin()) return 0;
  const auto idx = static_cast<std::size_t>(it - edges.begin()) - 1;
  return std::min(idx, edges.size() - 2);
}

}  // namespace

StateGrid StateGrid::uniform(std::size_t p_dem_bins, std::size_t soc_bins) {
  return {uniform_edges(0.0, kMaxDemand, p_dem_bins), uniform_edges(0.2, 0.8, soc_bins)};
}

void StateGrid::validate() const {
  check_edges(p_dem_edges, 0.0, kMaxDemand, "p_dem");
  check_edges(soc_edges, 0.2, 0.8, "soc");
}

StateIndex discretize(const StateGrid& grid, double p_dem, double soc) {
  return bin_of(grid.p_dem_edges, p_dem) * grid.soc_bins() + bin_of(grid.soc_edges, soc);
}

ActionGrid ActionGrid::uniform(double max_power, std::size_t count) {
  if (count < 2) throw std::invalid_argument("action grid needs at least 2 levels");
  ActionGrid g;
  g.levels = uniform_edges(0.0, max_power, count - 1);
  return g;
}

void ActionGrid::validate(double max_power) const {
  if (levels.size() < 2) throw std::invalid_argument("action grid needs at least 2 levels");
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (!(levels[i] > levels[i - 1])) throw std::invalid_argument("action levels must be strictly ascending");
  }
  if (levels.front() != 0.0 || levels.back() != max_power) {
    throw std::invalid_argument("action levels must include 0 and the EGU max power");
  }
}

ActionIndex QTable::argmax(StateIndex s) const {
  const auto r = row(s);
  return static_cast<ActionIndex>(std::max_element(r.begin(), r.end()) - r.begin());
}

double QTable::max_value(StateIndex s) const {
  const auto r = row(s);
  return *std::max_element(r.begin(), r.end());
}

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kConstant: return "constant";
    case ScheduleKind::kExponential: return "exponential";
    case ScheduleKind::kStep: return "step";
    case ScheduleKind::kReciprocal: return "reciprocal";
  }
  return "unknown";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "constant") return ScheduleKind::kConstant;
  if (name == "exponential" || name == "EXD") return ScheduleKind::kExponential;
  if (name == "step" || name == "SBD") return ScheduleKind::kStep;
  if (name == "reciprocal" || name == "RBD") return ScheduleKind::kReciprocal;
  throw std::invalid_argument("unknown schedule kind '" + std::string(name) + "'");
}

void E2ESchedule::validate() const {
  if (!(alpha1 > 0.0 && alpha1 <= 1.0)) throw std::invalid_argument("schedule alpha1 must be in (0, 1]");
  if (!(factor > 0.0 && factor < 1.0)) throw std::invalid_argument("schedule factor F must be in (0, 1)");
  if (!(step_width >= 1.0)) throw std::invalid_argument("schedule step_width D must be >= 1");
  if (!(decay_rate >= 0.0)) throw std::invalid_argument("schedule decay_rate must be >= 0");
}

double e2e_value(const E2ESchedule& schedule, std::uint64_t k) {
  const double kk = static_cast<double>(k);
  switch (schedule.kind) {
    case ScheduleKind::kConstant:
      return schedule.alpha1;
    case ScheduleKind::kExponential:
      return std::pow(schedule.alpha1, kk);
    case ScheduleKind::kStep:
      return schedule.alpha1 * std::pow(schedule.factor, std::round((1.0 + kk) / schedule.step_width));
    case ScheduleKind::kReciprocal:
      return schedule.alpha1 / (1.0 + schedule.decay_rate * kk);
  }
  return schedule.alpha1;
}

void LearnerConfig::validate() const {
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw std::invalid_argument("learning_rate must be in (0, 1]");
  if (!(discount >= 0.0 && discount <= 1.0)) throw std::invalid_argument("discount must be in [0, 1]");
  schedule.validate();
}

ActionIndex select_action(const QTable& q, StateIndex s, double theta, Rng& rng) {
  const double t = rng.uniform();
  if (t >= theta) return q.argmax(s);
  return rng.index(q.actions());
}

void q_update(QTable& q, StateIndex s, ActionIndex a, double reward, StateIndex s_next,
              const LearnerConfig& cfg) {
  if (!std::isfinite(reward)) throw std::invalid_argument("q_update: non-finite reward");
  double& entry = q.at(s, a);
  entry += cfg.learning_rate * (reward + cfg.discount * q.max_value(s_next) - entry);
}

void q_update_terminal(QTable& q, StateIndex s, ActionIndex a, double reward, const LearnerConfig& cfg) {
  if (!std::isfinite(reward)) throw std::invalid_argument("q_update: non-finite reward");
  double& entry = q.at(s, a);
  entry += cfg.learning_rate * (reward - entry);
}

// ---------------------------------------------------------------------------
// Snapshot format, version 1 (see docs in README):
//
//   ems-qtable 1
//   p_dem_edges <n> <e0> ... <en-1>
//   soc_edges <n> <e0> ...
//   action_levels <n> <l0> ...
//   schedule <kind> <alpha1> <factor> <step_width> <decay_rate>
//   values <states> <actions>
//   <one row of `actions` values per state>
//   end

namespace {

constexpr std::string_view kMagic = "ems-qtable";
constexpr int kVersion = 1;

void append_list(std::string& out, std::string_view key, const std::vector<double>& xs) {
  out += key;
  out += ' ';
  out += std::to_string(xs.size());
  for (double x : xs) {
    out += ' ';
    out += format_double(x);
  }
  out += '\n';
}

class TokenReader {
 public:
  explicit TokenReader(std::string_view text) : in_(std::string(text)) {}

  std::string word(const char* what) {
    std::string w;
    if (!(in_ >> w)) throw SnapshotError(std::string("snapshot truncated, expected ") + what);
    return w;
  }
  void expect(std::string_view keyword) {
    if (word(std::string(keyword).c_str()) != keyword) {
      throw SnapshotError("snapshot corrupt, expected '" + std::string(keyword) + "'");
    }
  }
  double number(const char* what) {
    const auto w = word(what);
    const auto v = parse_double(w);
    if (!v) throw SnapshotError(std::string("snapshot corrupt, bad number for ") + what + ": '" + w + "'");
    if (!std::isfinite(*v)) throw SnapshotError(std::string("snapshot has non-finite ") + what);
    return *v;
  }
  std::size_t count(const char* what) {
    const double v = number(what);
    if (v < 0.0 || v != std::floor(v) || v > 1e9) throw SnapshotError(std::string("snapshot corrupt count for ") + what);
    return static_cast<std::size_t>(v);
  }
  std::vector<double> list(std::string_view key) {
    expect(key);
    const auto n = count(std::string(key).c_str());
    std::vector<double> xs(n);
    for (auto& x : xs) x = number(std::string(key).c_str());
    return xs;
  }

 private:
  std::istringstream in_;
};

}  // namespace

std::string format_snapshot(const QSnapshot& snap) {
  std::string out;
  out += kMagic;
  out += ' ';
  out += std::to_string(kVersion);
  out += '\n';
  append_list(out, "p_dem_edges", snap.grid.p_dem_edges);
  append_list(out, "soc_edges", snap.grid.soc_edges);
  append_list(out, "action_levels", snap.actions.levels);
  out += "schedule ";
  out += to_string(snap.schedule.kind);
  for (double x : {snap.schedule.alpha1, snap.schedule.factor, snap.schedule.step_width, snap.schedule.decay_rate}) {
    out += ' ';
    out += format_double(x);
  }
  out += '\n';
  out += "values " + std::to_string(snap.table.states()) + ' ' + std::to_string(snap.table.actions()) + '\n';
  for (StateIndex s = 0; s < snap.table.states(); ++s) {
    const auto r = snap.table.row(s);
    for (std::size_t a = 0; a < r.size(); ++a) {
      if (a) out += ' ';
      out += format_double(r[a]);
    }
    out += '\n';
  }
  out += "end\n";
  return out;
}

QSnapshot parse_snapshot(std::string_view text) {
  TokenReader in(text);
  in.expect(kMagic);
  const auto version = in.count("version");
  if (version != kVersion) throw SnapshotError("unsupported snapshot version " + std::to_string(version));
  QSnapshot snap;
  snap.grid.p_dem_edges = in.list("p_dem_edges");
  snap.grid.soc_edges = in.list("soc_edges");
  snap.actions.levels = in.list("action_levels");
  in.expect("schedule");
  try {
    snap.schedule.kind = parse_schedule_kind(in.word("schedule kind"));
    snap.grid.validate();
  } catch (const std::invalid_argument& e) {
    throw SnapshotError(std::string("snapshot corrupt: ") + e.what());
  }
  snap.schedule.alpha1 = in.number("alpha1");
  snap.schedule.factor = in.number("factor");
  snap.schedule.step_width = in.number("step_width");
  snap.schedule.decay_rate = in.number("decay_rate");
  in.expect("values");
  const auto states = in.count("states");
  const auto actions = in.count("actions");
  if (states != snap.grid.size() || actions != snap.actions.size()) {
    throw SnapshotError("snapshot value block does not match its own grid metadata");
  }
  snap.table = QTable(states, actions);
  for (auto& v : snap.table.values()) v = in.number("Q value");
  in.expect("end");
  return snap;
}

void save_snapshot(const QSnapshot& snapshot, const std::filesystem::path& path) {
  atomic_write(path, format_snapshot(snapshot));
}

QSnapshot load_snapshot(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw SnapshotError("no Q-table snapshot at " + path.string());
  return parse_snapshot(read_file(path));
}

QTable restore_snapshot(const std::filesystem::path& path, const StateGrid& grid, const ActionGrid& actions) {
  auto snap = load_snapshot(path);
  if (snap.grid.p_dem_bins() != grid.p_dem_bins() || snap.grid.soc_bins() != grid.soc_bins()) {
    throw SnapshotError("snapshot state grid dimensions do not match: " + path.string());
  }
  if (snap.actions.size() != actions.size()) {
    throw SnapshotError("snapshot action count " + std::to_string(snap.actions.size()) + " does not match " +
                        std::to_string(actions.size()) + ": " + path.string());
  }
  if (!(snap.grid == grid) || !(snap.actions == actions)) {
    throw SnapshotError("snapshot grid edges or action levels differ: " + path.string());
  }
  return std::move(snap.table);
}

}  // namespace ems
