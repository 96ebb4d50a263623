#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "ems/commands.hpp"
#include "ems/config.hpp"
#include "ems/io.hpp"

namespace ems {
namespace {

namespace fs = std::filesystem;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / "ems_cli_test" / info->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  fs::path write_config(const std::string& name, const std::string& text) {
    const auto p = dir_ / name;
    atomic_write(p, text);
    return p;
  }

  int run(int (*cmd)(const CommandOptions&, std::ostream&, std::ostream&), const fs::path& config,
          std::optional<fs::path> out = std::nullopt) {
    CommandOptions opt;
    opt.config = config;
    opt.out_dir = out;
    out_.str("");
    err_.str("");
    return cmd(opt, out_, err_);
  }

  static std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

  fs::path dir_;
  std::ostringstream out_, err_;
};

constexpr const char* kMinimal = R"({
  "cycle": {"synth": {"duration": 120, "segments": [[0, 10], [90000, 20], [40000, 30]], "noise": 2000, "seed": 3}},
  "mode": "single",
  "episodes": 5,
  "output_dir": "run"
})";

constexpr const char* kEnsemble = R"({
  "cycle": {"synth": {"duration": 150, "segments": [[0, 10], [120000, 15], [50000, 40]], "noise": 2000, "seed": 4}},
  "episodes": 6,
  "eval": {"cycles": [{"synth": {"duration": 200, "segments": [[0, 20], [80000, 30]], "noise": 1000, "seed": 8}}],
           "initial_socs": [0.3, 0.7]},
  "sweep": {"repeats": 1},
  "dp": {"cycle": {"synth": {"duration": 10, "segments": [[60000, 10]]}}},
  "output_dir": "run"
})";

TEST_F(Cli, ValidateAcceptsDefaults) {
  EXPECT_EQ(run(cmd_validate, write_config("c.json", "{}")), kExitOk);
  EXPECT_EQ(run(cmd_validate, write_config("m.json", kMinimal)), kExitOk);
  EXPECT_EQ(run(cmd_validate, write_config("e.json", kEnsemble)), kExitOk);
}

TEST_F(Cli, ValidateNamesViolations) {
  EXPECT_EQ(run(cmd_validate, write_config("a.json", R"({"policy": {"mu": 0.7, "delta": 0.4}})")), kExitValidation);
  EXPECT_NE(err_.str().find("mu + delta"), std::string::npos) << err_.str();

  EXPECT_EQ(run(cmd_validate, write_config("b.json", R"({"agents": {"A": {"schedule": {"alpha1": 1.3}}}})")),
            kExitValidation);
  EXPECT_NE(err_.str().find("alpha1"), std::string::npos) << err_.str();

  EXPECT_EQ(run(cmd_validate, write_config("c.json", R"({"episods": 3})")), kExitValidation);
  EXPECT_NE(err_.str().find("episods: unknown key"), std::string::npos) << err_.str();

  EXPECT_EQ(run(cmd_validate, write_config("d.json", R"({"agents": {"B": {"schedule": {"kind": "linear"}}}})")),
            kExitValidation);
  EXPECT_NE(err_.str().find("agents.B.schedule.kind"), std::string::npos) << err_.str();

  EXPECT_EQ(run(cmd_validate, write_config("e.json", "{not json")), kExitValidation);
  EXPECT_EQ(run(cmd_validate, dir_ / "absent.json"), kExitValidation);
}

TEST_F(Cli, ValidateListsEveryViolation) {
  const auto p = write_config("x.json", R"({"policy": {"mu": 0.2, "delta": 0.2}, "episodes": 0, "initial_soc": 0.95})");
  EXPECT_EQ(run(cmd_validate, p), kExitValidation);
  EXPECT_EQ(lines(err_.str()), 3u) << err_.str();
}

TEST_F(Cli, ValidateHasNoSideEffects) {
  const auto p = write_config("c.json", kEnsemble);
  EXPECT_EQ(run(cmd_validate, p), kExitOk);
  EXPECT_FALSE(fs::exists(dir_ / "run"));
}

TEST_F(Cli, LearnMinimalWritesThreeArtifacts) {
  const auto p = write_config("c.json", kMinimal);
  const auto before = read_file(p);
  ASSERT_EQ(run(cmd_learn, p), kExitOk) << err_.str();
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir_ / "run")) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  EXPECT_EQ(names, (std::vector<std::string>{"learning_curve.csv", "manifest_learn.json", "qtable_A.qtab"}));
  EXPECT_EQ(lines(read_file(dir_ / "run" / "learning_curve.csv")), 6u);
  EXPECT_EQ(read_file(p), before);
}

TEST_F(Cli, LearnMissingCycleFileNamesPath) {
  const auto p = write_config("c.json", R"({"cycle": {"file": "cycles/nowhere.csv"}})");
  EXPECT_NE(run(cmd_learn, p), kExitOk);
  EXPECT_NE(err_.str().find("nowhere.csv"), std::string::npos) << err_.str();
}

TEST_F(Cli, LearnIsByteDeterministic) {
  const auto p = write_config("c.json", kEnsemble);
  ASSERT_EQ(run(cmd_learn, p, dir_ / "a"), kExitOk) << err_.str();
  ASSERT_EQ(run(cmd_learn, p, dir_ / "b"), kExitOk) << err_.str();
  for (const char* f : {"learning_curve.csv", "qtable_A.qtab", "qtable_B.qtab", "baseline.qtab"}) {
    EXPECT_EQ(read_file(dir_ / "a" / f), read_file(dir_ / "b" / f)) << f;
  }
}

TEST_F(Cli, LearnReadsCycleFileRelativeToConfig) {
  fs::create_directories(dir_ / "cycles");
  atomic_write(dir_ / "cycles" / "c.csv", "t_s,p_dem_w\n0,0\n1,50000\n2,60000\n3,10000\n");
  const auto p = write_config("c.json", R"({"cycle": {"file": "cycles/c.csv"}, "episodes": 2, "mode": "single"})");
  ASSERT_EQ(run(cmd_learn, p, dir_ / "out"), kExitOk) << err_.str();
}

TEST_F(Cli, ManifestReproducesRun) {
  const auto p = write_config("c.json", kEnsemble);
  CommandOptions opt;
  opt.config = p;
  opt.out_dir = dir_ / "first";
  opt.seed = 42;
  ASSERT_EQ(cmd_learn(opt, out_, err_), kExitOk) << err_.str();
  const auto manifest = nlohmann::json::parse(read_file(dir_ / "first" / "manifest_learn.json"));
  EXPECT_EQ(manifest["version"], std::string(kToolVersion));
  EXPECT_EQ(manifest["seeds"], nlohmann::json::array({42}));
  EXPECT_TRUE(manifest.contains("config_fingerprint"));

  // Feed the recorded config back in from a different directory.
  fs::create_directories(dir_ / "elsewhere");
  auto config = manifest["config"];
  config["output_dir"] = (dir_ / "second").string();
  const auto p2 = write_config("elsewhere/replay.json", config.dump());
  ASSERT_EQ(run(cmd_learn, p2), kExitOk) << err_.str();
  EXPECT_EQ(read_file(dir_ / "first" / "learning_curve.csv"), read_file(dir_ / "second" / "learning_curve.csv"));
  EXPECT_EQ(read_file(dir_ / "first" / "qtable_A.qtab"), read_file(dir_ / "second" / "qtable_A.qtab"));
  const auto m2 = nlohmann::json::parse(read_file(dir_ / "second" / "manifest_learn.json"));
  EXPECT_EQ(m2["config_fingerprint"], manifest["config_fingerprint"]);
  EXPECT_EQ(m2["artifacts"], manifest["artifacts"]);
}

TEST_F(Cli, SweepWritesNineRows) {
  const auto p = write_config("c.json", kEnsemble);
  ASSERT_EQ(run(cmd_sweep, p), kExitOk) << err_.str();
  const auto csv = read_file(dir_ / "run" / "sweep.csv");
  EXPECT_EQ(lines(csv), 10u);
  EXPECT_TRUE(fs::exists(dir_ / "run" / "manifest_sweep.json"));
}

TEST_F(Cli, SweepNeedsWeightedPolicy) {
  const auto p = write_config("c.json", R"({"policy": {"kind": "maximum"}, "episodes": 1})");
  EXPECT_EQ(run(cmd_sweep, p), kExitValidation);
}

TEST_F(Cli, EvalWithoutSnapshotsFails) {
  const auto p = write_config("c.json", kEnsemble);
  EXPECT_EQ(run(cmd_eval, p), kExitRuntime);
  EXPECT_NE(err_.str().find("no Q-table snapshot"), std::string::npos) << err_.str();
}

TEST_F(Cli, EvalAfterLearn) {
  const auto p = write_config("c.json", kEnsemble);
  ASSERT_EQ(run(cmd_learn, p), kExitOk) << err_.str();
  ASSERT_EQ(run(cmd_eval, p), kExitOk) << err_.str();
  const auto csv = read_file(dir_ / "run" / "robustness.csv");
  EXPECT_EQ(lines(csv), 1u + 2u * 2u);
  ASSERT_EQ(run(cmd_eval, p, dir_ / "again"), kExitRuntime);  // snapshots live in run/
}

TEST_F(Cli, EvalRejectsMismatchedSnapshot) {
  const auto p = write_config("c.json", kEnsemble);
  ASSERT_EQ(run(cmd_learn, p), kExitOk) << err_.str();
  auto text = read_file(p);
  text.insert(text.find('{') + 1, R"("actions": {"levels": 6},)");
  const auto p2 = write_config("c2.json", text);
  EXPECT_EQ(run(cmd_eval, p2), kExitRuntime);
  EXPECT_NE(err_.str().find("action count"), std::string::npos) << err_.str();
}

TEST_F(Cli, DpPrintsAndWritesCost) {
  const auto p = write_config("c.json", kEnsemble);
  ASSERT_EQ(run(cmd_dp, p), kExitOk) << err_.str();
  EXPECT_NE(out_.str().find("dp cost:"), std::string::npos);
  const auto csv = read_file(dir_ / "run" / "dp.csv");
  EXPECT_EQ(lines(csv), 11u);
  const auto manifest = nlohmann::json::parse(read_file(dir_ / "run" / "manifest_dp.json"));
  EXPECT_GT(manifest["cost_j"].get<double>(), 0.0);
}

TEST(Config, DefaultsMatchDocumentedValues) {
  const auto parsed = parse_run_config("{}");
  ASSERT_TRUE(parsed.config.has_value());
  const auto& ex = parsed.config->experiment;
  EXPECT_EQ(ex.episodes, 125u);
  EXPECT_EQ(ex.initial_soc, 0.5);
  EXPECT_EQ(ex.agent_a.schedule.alpha1, 0.8);
  EXPECT_EQ(ex.agent_b.schedule.alpha1, 0.8);
  EXPECT_EQ(ex.agent_a.schedule.kind, ScheduleKind::kStep);
  EXPECT_EQ(ex.agent_b.schedule.kind, ScheduleKind::kExponential);
  EXPECT_EQ(ex.models.merit.soc_ref, 0.28);
  EXPECT_EQ(ex.cycle.label, "PRDC-1-synthetic");
  EXPECT_EQ(parsed.config->eval_cycles.size(), 3u);
  EXPECT_EQ(parsed.config->sweep_repeats, 25u);
  EXPECT_EQ(parsed.config->sweep_proportions.size(), 9u);
}

TEST(Config, PlantOverridesApply) {
  const auto parsed = parse_run_config(R"({
    "plant": {"motor": {"c0": 1000}, "battery": {"num_cells": 4000, "resistance_curve": [[0.2, 0.05], [0.8, 0.02]]},
              "egu": {"fuel_density": 0.85}, "merit": {"penalty_coeff": 100}},
    "grid": {"p_dem_bins": 10, "soc_bins": 12}, "actions": {"levels": 6}})");
  ASSERT_TRUE(parsed.config.has_value()) << parsed.violations.front();
  const auto& ex = parsed.config->experiment;
  EXPECT_EQ(ex.models.motor.c0, 1000.0);
  EXPECT_EQ(ex.models.battery.num_cells, 4000u);
  EXPECT_NEAR(ex.models.battery.cell_resistance(0.5), 0.035, 1e-12);
  EXPECT_NEAR(egu_fuel_power(ex.models.egu, 86'200.0), 24.1 * 0.85 * 44e6 / 3600.0, 1e-3);
  EXPECT_EQ(ex.models.merit.penalty_coeff, 100.0);
  EXPECT_EQ(ex.grid.size(), 120u);
  EXPECT_EQ(ex.actions.size(), 6u);
}

}  // namespace
}  // namespace ems
