#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "phaseopt/robot.hpp"
#include "phaseopt/transcribe.hpp"

namespace phaseopt {

/// Writes `k,t,phase,q_1..q_n,dq_1..dq_n,u_1..u_n`, one row per node. The
/// control columns of the final node are blank. Numbers use the shortest
/// representation that reads back to the same double.
void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory);

/// Reads a file produced by write_trajectory_csv(). Throws ParseError.
Trajectory read_trajectory_csv(std::istream& in);

/// Joint velocities divided by each joint's velocity limit, per node.
void write_normalized_velocity_csv(std::ostream& out, const Trajectory& trajectory,
                                   const KinematicChain& chain);

struct RunSummary {
  std::string mode;
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t steps = 0;
  double duration_s = 0.0;
  std::vector<double> phase_end_times_s;
  double objective = 0.0;
  double max_violation = 0.0;
  int iterations = 0;
  double compute_s = 0.0;
  std::string status;
};

std::string summary_json(const RunSummary& summary);
RunSummary parse_summary_json(const std::string& text);

}  // namespace phaseopt
