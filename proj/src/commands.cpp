#include "phaseopt/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "phaseopt/baseline.hpp"

namespace phaseopt {

namespace fs = std::filesystem;

std::string_view to_string(PlanMode mode) {
  return mode == PlanMode::Joint ? "joint" : "baseline";
}

double trajectory_violation(const TaskSpec& task, const TranscribeParams& params,
                            const Trajectory& trajectory) {
  const auto problem = transcribe(task, params);
  return max_violation(problem.nlp, pack_trajectory(problem.layout, trajectory));
}

PlanResult run_plan(const TaskSpec& task, const PlanSettings& settings) {
  PlanResult result;
  result.mode = settings.mode;
  if (settings.mode == PlanMode::Joint) {
    const auto problem = transcribe(task, settings.params);
    const auto guess = default_initial_guess(task, settings.params, problem.layout);
    const Solution sol = solve(problem.nlp, guess, settings.solver);
    if (sol.z.size() != problem.layout.dimension()) {
      throw ExtractionError(fmt::format("solver returned no iterate ({})", sol.message));
    }
    result.trajectory = extract_trajectory(problem, sol.z);
    result.status = sol.status;
    result.objective = sol.objective;
    result.max_violation = max_violation(problem.nlp, sol.z);
    result.iterations = sol.iterations;
    result.compute_s = sol.wall_time;
  } else {
    BaselineResult base = solve_sequential(task, settings.params, settings.solver);
    result.trajectory = std::move(base.trajectory);
    result.status = base.status;
    result.objective = base.objective;
    result.max_violation = trajectory_violation(task, settings.params, result.trajectory);
    result.iterations = base.iterations;
    result.compute_s = base.wall_time;
  }
  if (!settings.timing) result.compute_s = 0.0;
  return result;
}

std::vector<double> boundary_speeds(const Trajectory& traj, const KinematicChain& chain) {
  std::vector<double> speeds;
  const std::size_t n = traj.joints;
  for (std::size_t i = 1; i < traj.phase_count(); ++i) {
    const auto row = static_cast<Eigen::Index>(i * traj.steps);
    double worst = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = traj.states(row, static_cast<Eigen::Index>(n + j));
      worst = std::max(worst, std::abs(v) / chain.joint(j).velocity_limit);
    }
    speeds.push_back(worst);
  }
  return speeds;
}

RunSummary make_summary(const TaskSpec& task, const PlanSettings& settings,
                        const PlanResult& result) {
  RunSummary s;
  s.mode = std::string(to_string(result.mode));
  s.n = task.joint_count();
  s.m = task.phase_count();
  s.steps = static_cast<std::size_t>(settings.params.steps);
  s.duration_s = result.trajectory.duration;
  s.phase_end_times_s = result.trajectory.phase_end_times;
  s.objective = result.objective;
  s.max_violation = result.max_violation;
  s.iterations = result.iterations;
  s.compute_s = result.compute_s;
  s.status = std::string(to_string(result.status));
  return s;
}

namespace {

constexpr int kExitNotOptimal = 1;
constexpr int kExitInput = 2;

// Unreadable or malformed input; the message already names the file.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(fmt::format("cannot read '{}'", path));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

TaskSpec load_task(const std::string& chain_path, const std::string& task_path) {
  const std::string chain_text = read_file(chain_path);
  const std::string task_text = read_file(task_path);
  KinematicChain chain;
  try {
    chain = parse_chain(chain_text);
  } catch (const std::exception& e) {
    throw InputError(fmt::format("{}: {}", chain_path, e.what()));
  }
  try {
    TaskSpec task = parse_task(task_text, chain);
    validate_task(task);
    return task;
  } catch (const std::exception& e) {
    throw InputError(fmt::format("{}: {}", task_path, e.what()));
  }
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(fmt::format("cannot write '{}'", path.string()));
  out << content;
  if (!out) throw InputError(fmt::format("failed writing '{}'", path.string()));
}

void write_run(const fs::path& dir, const TaskSpec& task, const PlanSettings& settings,
               const PlanResult& result) {
  fs::create_directories(dir);
  std::ostringstream traj, vel;
  write_trajectory_csv(traj, result.trajectory);
  write_normalized_velocity_csv(vel, result.trajectory, task.chain);
  write_file(dir / "trajectory.csv", traj.str());
  write_file(dir / "velocity_normalized.csv", vel.str());
  write_file(dir / "summary.json", summary_json(make_summary(task, settings, result)));
}

struct Flags {
  std::string chain;
  std::string task;
  std::string out = "out";
  std::string mode = "joint";
  int steps = TranscribeParams{}.steps;
  double wvel = TranscribeParams{}.w_vel;
  double wacc = TranscribeParams{}.w_acc;
  double dtmin = TranscribeParams{}.min_phase_duration;
  double tol = SolverOptions{}.constraint_tol;
  int max_iter = SolverOptions{}.max_iterations;
  bool no_timing = false;
  int verbose = 0;
  std::vector<int> steps_list;

  PlanSettings settings() const {
    PlanSettings s;
    s.mode = mode == "baseline" ? PlanMode::Baseline : PlanMode::Joint;
    s.params.steps = steps;
    s.params.w_vel = wvel;
    s.params.w_acc = wacc;
    s.params.min_phase_duration = dtmin;
    s.params.phase_time_guess = std::max(s.params.phase_time_guess, dtmin);
    s.solver.constraint_tol = tol;
    s.solver.max_iterations = max_iter;
    s.solver.verbosity = std::min(verbose, 2);
    s.timing = !no_timing;
    s.params.validate();
    s.solver.validate();
    return s;
  }
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--chain", f.chain, "Kinematic chain file")->required();
  cmd->add_option("--task", f.task, "Task scenario file")->required();
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--wvel", f.wvel, "Velocity regularization weight");
  cmd->add_option("--wacc", f.wacc, "Acceleration regularization weight");
  cmd->add_option("--dtmin", f.dtmin, "Minimum phase duration [s]");
  cmd->add_option("--tol", f.tol, "Constraint tolerance");
  cmd->add_option("--max-iter", f.max_iter, "Solver iteration budget");
  cmd->add_flag("--no-timing", f.no_timing, "Report compute_s as 0");
  cmd->add_flag_function(
      "-v,--verbose", [&f](std::int64_t count) { f.verbose = static_cast<int>(count); },
      "Print solver progress to stderr (repeat for more)");
}

int cmd_plan(const Flags& f, std::ostream& out, std::ostream& err) {
  const TaskSpec task = load_task(f.chain, f.task);
  const PlanSettings settings = f.settings();
  PlanResult result;
  try {
    result = run_plan(task, settings);
  } catch (const BaselineError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNotOptimal;
  } catch (const ExtractionError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNotOptimal;
  }
  write_run(f.out, task, settings, result);
  out << fmt::format("{} {}: duration {} s, max violation {:.3g}, {} iterations\n",
                     to_string(result.mode), to_string(result.status),
                     result.trajectory.duration, result.max_violation, result.iterations);
  if (result.status != SolveStatus::Optimal) {
    err << fmt::format("error: solver finished with status {}\n", to_string(result.status));
    return kExitNotOptimal;
  }
  return 0;
}

int cmd_compare(const Flags& f, std::ostream& out, std::ostream& err) {
  const TaskSpec task = load_task(f.chain, f.task);
  const std::string name = fs::path(f.task).stem().string();
  PlanSettings settings = f.settings();
  const fs::path dir(f.out);

  std::vector<PlanResult> results;
  for (PlanMode mode : {PlanMode::Joint, PlanMode::Baseline}) {
    settings.mode = mode;
    try {
      results.push_back(run_plan(task, settings));
    } catch (const BaselineError& e) {
      err << "error: " << e.what() << '\n';
      return kExitNotOptimal;
    } catch (const ExtractionError& e) {
      err << "error: " << to_string(mode) << ": " << e.what() << '\n';
      return kExitNotOptimal;
    }
    write_run(dir / std::string(to_string(mode)), task, settings, results.back());
  }

  std::string table = "task,mode,duration_s,compute_s,max_violation\n";
  std::string boundaries = "task,mode,boundary,t";
  for (std::size_t j = 1; j <= task.joint_count(); ++j) {
    boundaries += fmt::format(",dq_{}", j);
  }
  boundaries += ",max_normalized_speed\n";
  for (const auto& r : results) {
    table += fmt::format("{},{},{},{},{}\n", name, to_string(r.mode), r.trajectory.duration,
                         r.compute_s, r.max_violation);
    const auto speeds = boundary_speeds(r.trajectory, task.chain);
    for (std::size_t i = 1; i <= speeds.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i * r.trajectory.steps);
      std::string line =
          fmt::format("{},{},{},{}", name, to_string(r.mode), i, r.trajectory.times[i * r.trajectory.steps]);
      for (std::size_t j = 0; j < task.joint_count(); ++j) {
        line += fmt::format(",{}", r.trajectory.states(
                                       row, static_cast<Eigen::Index>(task.joint_count() + j)));
      }
      boundaries += line + fmt::format(",{}\n", speeds[i - 1]);
    }
  }
  write_file(dir / "compare.csv", table);
  write_file(dir / "boundary_velocities.csv", boundaries);

  const double joint = results[0].trajectory.duration;
  const double base = results[1].trajectory.duration;
  nlohmann::ordered_json report;
  report["task"] = name;
  report["joint_duration_s"] = joint;
  report["baseline_duration_s"] = base;
  report["improvement_percent"] = 100.0 * (base - joint) / base;
  report["joint_status"] = std::string(to_string(results[0].status));
  report["baseline_status"] = std::string(to_string(results[1].status));
  write_file(dir / "comparison.json", report.dump(2) + "\n");

  out << table;
  out << fmt::format("improvement {:.2f}%\n", 100.0 * (base - joint) / base);
  for (const auto& r : results) {
    if (r.status != SolveStatus::Optimal) {
      err << fmt::format("error: {} solve finished with status {}\n", to_string(r.mode),
                         to_string(r.status));
      return kExitNotOptimal;
    }
  }
  return 0;
}

int cmd_sweep(const Flags& f, std::ostream& out, std::ostream& err) {
  const TaskSpec task = load_task(f.chain, f.task);
  for (int steps : f.steps_list) {
    if (steps < 2) throw CLI::ValidationError("--steps-list", "values must be >= 2");
  }
  std::string table = "N,duration_s,compute_s,status\n";
  bool all_optimal = true;
  for (int steps : f.steps_list) {
    Flags g = f;
    g.steps = steps;
    g.mode = "joint";
    const PlanSettings settings = g.settings();
    std::string row;
    try {
      const PlanResult r = run_plan(task, settings);
      row = fmt::format("{},{},{},{}\n", steps, r.trajectory.duration, r.compute_s,
                        to_string(r.status));
      all_optimal = all_optimal && r.status == SolveStatus::Optimal;
    } catch (const ExtractionError&) {
      row = fmt::format("{},nan,0,{}\n", steps, to_string(SolveStatus::NumericalFailure));
      all_optimal = false;
    }
    out << row;
    table += row;
  }
  fs::create_directories(f.out);
  write_file(fs::path(f.out) / "sweep.csv", table);
  if (!all_optimal) {
    err << "error: some sweep entries did not reach Optimal\n";
    return kExitNotOptimal;
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app("Multi-phase time-optimal trajectory planner", "phaseopt");
  app.require_subcommand(1);
  Flags flags;

  auto* plan = app.add_subcommand("plan", "Plan one task and write the trajectory");
  add_common(plan, flags);
  plan->add_option("--steps", flags.steps, "Steps per phase");
  plan->add_option("--mode", flags.mode, "joint or baseline")
      ->check(CLI::IsMember({"joint", "baseline"}));

  auto* compare = app.add_subcommand("compare", "Run joint and baseline planners");
  add_common(compare, flags);
  compare->add_option("--steps", flags.steps, "Steps per phase");

  auto* sweep = app.add_subcommand("sweep", "Joint planner over several step counts");
  add_common(sweep, flags);
  sweep->add_option("--steps-list", flags.steps_list, "Comma-separated step counts")
      ->delimiter(',')
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }

  try {
    if (plan->parsed()) return cmd_plan(flags, out, err);
    if (compare->parsed()) return cmd_compare(flags, out, err);
    return cmd_sweep(flags, out, err);
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << '\n';
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
  }
  return kExitInput;
}

}  // namespace phaseopt
