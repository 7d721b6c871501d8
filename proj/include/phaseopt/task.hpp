#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "phaseopt/expr_graph.hpp"
#include "phaseopt/nlp.hpp"
#include "phaseopt/robot.hpp"

namespace phaseopt {

// Default tolerances applied when a scenario omits `tol=`.
inline constexpr double kDefaultLineTol = 1e-3;
inline constexpr double kDefaultAxisTol = 1e-2;

/// Link origin within `tol` of `target` in every coordinate.
struct PointAt {
  std::string link;
  Eigen::Vector3d target = Eigen::Vector3d::Zero();
  double tol = 0.0;
  bool operator==(const PointAt&) const = default;
};

/// Every joint speed at most `tol`.
struct VelocityZero {
  double tol = 0.0;
  bool operator==(const VelocityZero&) const = default;
};

/// Every joint within `tol` of `q_target`.
struct JointConfig {
  std::vector<double> q_target;
  double tol = 0.0;
  bool operator==(const JointConfig&) const = default;
};

/// Link origin within `tol` of the infinite line through a and b.
struct LineTrack {
  std::string link;
  Eigen::Vector3d a = Eigen::Vector3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::UnitX();
  double tol = kDefaultLineTol;
  bool operator==(const LineTrack&) const = default;
};

/// Link origin inside the axis-aligned box [lower, upper].
struct BoxRegion {
  std::string link;
  Eigen::Vector3d lower = Eigen::Vector3d::Zero();
  Eigen::Vector3d upper = Eigen::Vector3d::Ones();
  bool operator==(const BoxRegion&) const = default;
};

/// Angle between the link-local axis (in world coordinates) and `world_dir`
/// at most `tol` radians.
struct AxisAlign {
  std::string link;
  Eigen::Vector3d local_axis = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d world_dir = Eigen::Vector3d::UnitZ();
  double tol = kDefaultAxisTol;
  bool operator==(const AxisAlign&) const = default;
};

using ConstraintSpec =
    std::variant<PointAt, VelocityZero, JointConfig, LineTrack, BoxRegion, AxisAlign>;

/// Keyword used for a constraint in scenario files.
std::string_view constraint_keyword(const ConstraintSpec& spec);

struct PhaseSpec {
  std::string name;
  std::vector<ConstraintSpec> terminal;
  /// Phase-local path constraints followed by the task's global ones.
  std::vector<ConstraintSpec> path;
  bool operator==(const PhaseSpec&) const = default;
};

struct TaskSpec {
  KinematicChain chain;
  std::vector<double> q_init;
  std::vector<PhaseSpec> phases;
  std::vector<ConstraintSpec> global_path;

  std::size_t joint_count() const { return chain.size(); }
  std::size_t phase_count() const { return phases.size(); }
};

/// Structural equality (chains compared joint by joint).
bool same_task(const TaskSpec& a, const TaskSpec& b);

/// Parses a scenario file against a chain:
///
///   init q=0,0
///   global { BoxRegion link=tip lower=-2,-2,-1 upper=2,2,1 }
///   phase reach {
///     terminal { PointAt link=tip target=1,1,0 }
///     path { LineTrack link=tip a=0,0,0 b=1,1,0 tol=1e-3 }
///   }
///
/// Throws ParseError with the offending line number.
TaskSpec parse_task(std::string_view text, const KinematicChain& chain);

/// Writes a scenario that parse_task() maps back to the same TaskSpec.
std::string serialize_task(const TaskSpec& task);

/// Throws std::invalid_argument when a constraint breaks its invariants
/// (negative tolerance, empty box, degenerate line, non-unit axis, unknown
/// link, wrong vector size).
void validate_constraint(const ConstraintSpec& spec, const KinematicChain& chain);

/// Throws std::invalid_argument when the task breaks its invariants.
void validate_task(const TaskSpec& task);

/// Number of rows lower_constraint() emits for the variant and joint count.
std::size_t row_count(const ConstraintSpec& spec, std::size_t joint_count);

/// Lowers a constraint on one state (q, qdot) to bounded residual rows.
std::vector<ConstraintRow> lower_constraint(const ConstraintSpec& spec,
                                            ExpressionGraph& graph,
                                            const KinematicChain& chain,
                                            std::span<const ExprRef> q,
                                            std::span<const ExprRef> qdot);

}  // namespace phaseopt
