#include "phaseopt/trajectory_io.hpp"

#include <istream>
#include <ostream>
#include <string>

#include <fmt/format.h>
#include <json.hpp>

#include "text_util.hpp"

namespace phaseopt {

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  const std::size_t n = traj.joints;
  std::string line = "k,t,phase";
  for (std::size_t j = 1; j <= n; ++j) line += fmt::format(",q_{}", j);
  for (std::size_t j = 1; j <= n; ++j) line += fmt::format(",dq_{}", j);
  for (std::size_t j = 1; j <= n; ++j) line += fmt::format(",u_{}", j);
  out << line << '\n';
  for (std::size_t k = 0; k < traj.node_count(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    line = fmt::format("{},{},{}", k, traj.times[k], traj.node_phase(k));
    for (std::size_t c = 0; c < 2 * n; ++c) {
      line += fmt::format(",{}", traj.states(row, static_cast<Eigen::Index>(c)));
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (k + 1 < traj.node_count()) {
        line += fmt::format(",{}", traj.controls(row, static_cast<Eigen::Index>(j)));
      } else {
        line += ',';
      }
    }
    out << line << '\n';
  }
}

Trajectory read_trajectory_csv(std::istream& in) {
  std::string line;
  int line_no = 1;
  if (!std::getline(in, line)) throw ParseError("empty trajectory file", 1);
  const auto header = text::split(text::trim(line), ',');
  if (header.size() < 6 || (header.size() - 3) % 3 != 0 || header[0] != "k" ||
      header[1] != "t" || header[2] != "phase") {
    throw ParseError("unexpected trajectory header", 1);
  }
  const std::size_t n = (header.size() - 3) / 3;

  std::vector<double> times;
  std::vector<std::size_t> phases;
  std::vector<std::vector<double>> states;
  std::vector<std::vector<double>> controls;
  bool final_row = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    if (final_row) throw ParseError("row after the final node", line_no);
    const auto cells = text::split(text::trim(line), ',');
    if (cells.size() != header.size()) throw ParseError("wrong column count", line_no);
    auto number = [&](std::string_view cell) {
      const auto v = text::parse_double(cell);
      if (!v) throw ParseError(fmt::format("malformed number '{}'", cell), line_no);
      return *v;
    };
    times.push_back(number(cells[1]));
    phases.push_back(static_cast<std::size_t>(number(cells[2])));
    std::vector<double> x;
    for (std::size_t c = 0; c < 2 * n; ++c) x.push_back(number(cells[3 + c]));
    states.push_back(std::move(x));
    if (text::trim(cells[3 + 2 * n]).empty()) {
      final_row = true;
    } else {
      std::vector<double> u;
      for (std::size_t j = 0; j < n; ++j) u.push_back(number(cells[3 + 2 * n + j]));
      controls.push_back(std::move(u));
    }
  }
  if (!final_row || states.size() < 3) throw ParseError("truncated trajectory", line_no);

  Trajectory traj;
  traj.joints = n;
  // Nodes 0..N carry phase 1.
  traj.steps = static_cast<std::size_t>(
                   std::count(phases.begin(), phases.end(), std::size_t{1})) - 1;
  const std::size_t nodes = states.size();
  if (traj.steps < 1 || (nodes - 1) % traj.steps != 0) {
    throw ParseError("node count does not match the phase column", line_no);
  }
  traj.times = times;
  for (std::size_t i = 1; i * traj.steps < nodes; ++i) {
    traj.phase_end_times.push_back(times[i * traj.steps]);
  }
  traj.duration = traj.phase_end_times.back();
  traj.states.resize(static_cast<Eigen::Index>(nodes), static_cast<Eigen::Index>(2 * n));
  for (std::size_t k = 0; k < nodes; ++k) {
    for (std::size_t c = 0; c < 2 * n; ++c) {
      traj.states(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = states[k][c];
    }
  }
  traj.controls.resize(static_cast<Eigen::Index>(controls.size()),
                       static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < controls.size(); ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      traj.controls(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
          controls[k][j];
    }
  }
  return traj;
}

void write_normalized_velocity_csv(std::ostream& out, const Trajectory& traj,
                                   const KinematicChain& chain) {
  const std::size_t n = traj.joints;
  std::string line = "k,t,phase";
  for (std::size_t j = 1; j <= n; ++j) line += fmt::format(",v_{}", j);
  out << line << '\n';
  for (std::size_t k = 0; k < traj.node_count(); ++k) {
    line = fmt::format("{},{},{}", k, traj.times[k], traj.node_phase(k));
    for (std::size_t j = 0; j < n; ++j) {
      const double v = traj.states(static_cast<Eigen::Index>(k),
                                   static_cast<Eigen::Index>(n + j));
      line += fmt::format(",{}", v / chain.joint(j).velocity_limit);
    }
    out << line << '\n';
  }
}

std::string summary_json(const RunSummary& s) {
  nlohmann::ordered_json j;
  j["mode"] = s.mode;
  j["n"] = s.n;
  j["m"] = s.m;
  j["N"] = s.steps;
  j["duration_s"] = s.duration_s;
  j["phase_end_times_s"] = s.phase_end_times_s;
  j["objective"] = s.objective;
  j["max_violation"] = s.max_violation;
  j["iterations"] = s.iterations;
  j["compute_s"] = s.compute_s;
  j["status"] = s.status;
  return j.dump(2) + "\n";
}

RunSummary parse_summary_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  RunSummary s;
  s.mode = j.at("mode").get<std::string>();
  s.n = j.at("n").get<std::size_t>();
  s.m = j.at("m").get<std::size_t>();
  s.steps = j.at("N").get<std::size_t>();
  s.duration_s = j.at("duration_s").get<double>();
  s.phase_end_times_s = j.at("phase_end_times_s").get<std::vector<double>>();
  s.objective = j.at("objective").get<double>();
  s.max_violation = j.at("max_violation").get<double>();
  s.iterations = j.at("iterations").get<int>();
  s.compute_s = j.at("compute_s").get<double>();
  s.status = j.at("status").get<std::string>();
  return s;
}

}  // namespace phaseopt
