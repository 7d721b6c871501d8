#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "phaseopt/commands.hpp"
#include "test_support.hpp"

namespace phaseopt {
namespace {

namespace fs = std::filesystem;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "phaseopt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("phaseopt_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string out(const std::string& sub) const { return (dir_ / sub).string(); }
  static std::string scen(const std::string& name) { return testing::scenario_path(name); }

  fs::path dir_;
};

std::vector<std::string> lines_of(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

TEST_F(CliTest, PlanWritesTrajectoryAndSummary) {
  const auto r = cli({"plan", "--chain", scen("arm2.chain"), "--task", scen("viapoints.task"),
                      "--steps", "20", "--out", out("run")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = lines_of(out("run/trajectory.csv"));
  ASSERT_EQ(lines.size(), 62u);
  EXPECT_EQ(lines[0], "k,t,phase,q_1,q_2,dq_1,dq_2,u_1,u_2");
  EXPECT_EQ(lines.back().substr(lines.back().size() - 2), ",,");
  EXPECT_TRUE(lines.back().starts_with("60,"));

  const auto summary = nlohmann::ordered_json::parse(testing::read_text(out("run/summary.json")));
  std::vector<std::string> keys;
  for (const auto& item : summary.items()) keys.push_back(item.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"mode", "n", "m", "N", "duration_s",
                                            "phase_end_times_s", "objective",
                                            "max_violation", "iterations", "compute_s",
                                            "status"}));
  EXPECT_EQ(summary["mode"], "joint");
  EXPECT_EQ(summary["m"], 3);
  EXPECT_EQ(summary["N"], 20);
  EXPECT_EQ(summary["status"], "Optimal");
  EXPECT_EQ(summary["phase_end_times_s"].size(), 3u);
  EXPECT_EQ(lines_of(out("run/velocity_normalized.csv")).size(), 62u);
}

TEST_F(CliTest, BaselineModeIsRecorded) {
  const auto r = cli({"plan", "--chain", scen("arm2.chain"), "--task", scen("viapoints.task"),
                      "--mode", "baseline", "--out", out("run")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = parse_summary_json(testing::read_text(out("run/summary.json")));
  EXPECT_EQ(summary.mode, "baseline");
}

TEST_F(CliTest, MissingFileExitsWithTwo) {
  const std::string missing = out("nowhere.chain");
  const auto r = cli({"plan", "--chain", missing, "--task", scen("viapoints.task"), "--out",
                      out("run")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find(missing), std::string::npos);
  EXPECT_FALSE(fs::exists(out("run/summary.json")));
}

TEST_F(CliTest, MalformedTaskNamesFileAndLine) {
  const std::string bad = out("bad.task");
  std::ofstream(bad) << "init q=0,0\nphase p {\n terminal { Hover link=j2 }\n}\n";
  const auto r = cli({"plan", "--chain", scen("arm2.chain"), "--task", bad, "--out", out("run")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find(bad), std::string::npos);
  EXPECT_NE(r.err.find("line 3"), std::string::npos);
}

TEST_F(CliTest, BadFlagsExitWithTwo) {
  EXPECT_EQ(cli({"plan", "--chain", scen("arm2.chain")}).code, 2);
  EXPECT_EQ(cli({"plan", "--chain", scen("arm2.chain"), "--task", scen("viapoints.task"),
                 "--mode", "fast"})
                .code,
            2);
  EXPECT_EQ(cli({"plan", "--chain", scen("arm2.chain"), "--task", scen("viapoints.task"),
                 "--steps", "1", "--out", out("run")})
                .code,
            2);
  EXPECT_EQ(cli({}).code, 2);
}

TEST_F(CliTest, NonOptimalSolveExitsWithOne) {
  // One phase, so the early iterate still has an increasing phase time.
  const auto r = cli({"plan", "--chain", scen("slider.chain"), "--task", scen("move1.task"),
                      "--max-iter", "2", "--out", out("run")});
  EXPECT_EQ(r.code, 1);
  const auto summary = parse_summary_json(testing::read_text(out("run/summary.json")));
  EXPECT_EQ(summary.status, "MaxIterations");
}

TEST_F(CliTest, CompareReportsBothModes) {
  const auto r = cli({"compare", "--chain", scen("arm2.chain"), "--task",
                      scen("viapoints.task"), "--out", out("cmp")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto table = lines_of(out("cmp/compare.csv"));
  ASSERT_EQ(table.size(), 3u);
  EXPECT_EQ(table[0], "task,mode,duration_s,compute_s,max_violation");
  EXPECT_TRUE(table[1].starts_with("viapoints,joint,"));
  EXPECT_TRUE(table[2].starts_with("viapoints,baseline,"));

  const auto report = nlohmann::json::parse(testing::read_text(out("cmp/comparison.json")));
  EXPECT_LE(report["joint_duration_s"].get<double>(),
            report["baseline_duration_s"].get<double>());
  EXPECT_GT(report["improvement_percent"].get<double>(), 0.0);

  const auto bounds = lines_of(out("cmp/boundary_velocities.csv"));
  ASSERT_EQ(bounds.size(), 5u);
  for (std::size_t i = 1; i < bounds.size(); ++i) {
    const auto cells = [&] {
      std::vector<std::string> c;
      std::stringstream s(bounds[i]);
      for (std::string cell; std::getline(s, cell, ',');) c.push_back(cell);
      return c;
    }();
    const double speed = std::stod(cells.back());
    if (cells[1] == "baseline") {
      EXPECT_LE(speed, 1e-9);
    } else {
      EXPECT_GT(speed, 0.05);
    }
  }
  EXPECT_TRUE(fs::exists(out("cmp/joint/trajectory.csv")));
  EXPECT_TRUE(fs::exists(out("cmp/baseline/velocity_normalized.csv")));
}

TEST_F(CliTest, SweepRecordsEveryStepCount) {
  auto r = cli({"sweep", "--chain", scen("arm2.chain"), "--task", scen("viapoints.task"),
                "--steps-list", "10", "--out", out("one")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines_of(out("one/sweep.csv")).size(), 2u);

  r = cli({"sweep", "--chain", scen("arm2.chain"), "--task", scen("viapoints.task"),
           "--steps-list", "5,30", "--out", out("two")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = lines_of(out("two/sweep.csv"));
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0], "N,duration_s,compute_s,status");
  auto field = [](const std::string& line, int index) {
    std::stringstream s(line);
    std::string cell;
    for (int i = 0; i <= index; ++i) std::getline(s, cell, ',');
    return cell;
  };
  EXPECT_EQ(field(lines[1], 0), "5");
  EXPECT_EQ(field(lines[2], 0), "30");
  EXPECT_LE(std::stod(field(lines[2], 1)), std::stod(field(lines[1], 1)));
  EXPECT_LE(std::stod(field(lines[1], 2)), std::stod(field(lines[2], 2)));
  EXPECT_EQ(field(lines[1], 3), "Optimal");
}

TEST_F(CliTest, TrajectoryCsvRoundTripsTheViolation) {
  for (const std::string mode : {"joint", "baseline"}) {
    const auto r = cli({"plan", "--chain", scen("arm2.chain"), "--task", scen("line.task"),
                        "--mode", mode, "--steps", "12", "--out", out(mode)});
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream in(out(mode + "/trajectory.csv"));
    const Trajectory traj = read_trajectory_csv(in);
    EXPECT_EQ(traj.steps, 12u);
    EXPECT_EQ(traj.phase_count(), 2u);
    const auto summary = parse_summary_json(testing::read_text(out(mode + "/summary.json")));
    const auto task = testing::load_task("arm2.chain", "line.task");
    TranscribeParams params;
    params.steps = 12;
    EXPECT_NEAR(trajectory_violation(task, params, traj), summary.max_violation, 1e-9) << mode;
    EXPECT_EQ(traj.duration, summary.duration_s);
  }
}

TEST_F(CliTest, OutputsAreByteDeterministic) {
  for (const char* sub : {"a", "b"}) {
    const auto r = cli({"compare", "--chain", scen("arm2.chain"), "--task",
                        scen("viapoints.task"), "--steps", "10", "--no-timing", "--out",
                        out(sub)});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  int compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir_ / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir_ / "a");
    EXPECT_EQ(testing::read_text(entry.path().string()),
              testing::read_text((dir_ / "b" / rel).string()))
        << rel;
    ++compared;
  }
  EXPECT_EQ(compared, 9);
  const auto summary = parse_summary_json(testing::read_text(out("a/joint/summary.json")));
  EXPECT_EQ(summary.compute_s, 0.0);
}

TEST(TrajectoryCsv, RejectsMalformedInput) {
  std::istringstream empty("");
  EXPECT_THROW(read_trajectory_csv(empty), ParseError);
  std::istringstream header("k,t,phase,q_1\n");
  EXPECT_THROW(read_trajectory_csv(header), ParseError);
  std::istringstream cell("k,t,phase,q_1,dq_1,u_1\n0,0,1,0,0,x\n");
  EXPECT_THROW(read_trajectory_csv(cell), ParseError);
  std::istringstream truncated("k,t,phase,q_1,dq_1,u_1\n0,0,1,0,0,1\n1,0.5,1,0,0,1\n");
  EXPECT_THROW(read_trajectory_csv(truncated), ParseError);
}

}  // namespace
}  // namespace phaseopt
