#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "phaseopt/expr_graph.hpp"

namespace phaseopt {

/// Error raised by the text parsers, carrying a 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, int line)
      : std::runtime_error("line " + std::to_string(line) + ": " + message),
        line_(line) {}

  int line() const { return line_; }

 private:
  int line_;
};

enum class JointKind { Revolute, Prismatic };

struct JointDef {
  std::string name;
  JointKind kind = JointKind::Revolute;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  /// Pose of the link frame relative to the moved joint frame.
  Eigen::Vector3d origin_translation = Eigen::Vector3d::Zero();
  Eigen::Vector3d origin_rpy = Eigen::Vector3d::Zero();
  double lower = 0.0;
  double upper = 0.0;
  double velocity_limit = 1.0;
  double acceleration_limit = 1.0;
};

/// Serial chain, base to tip. Each joint names the link frame it drives.
class KinematicChain {
 public:
  KinematicChain() = default;
  explicit KinematicChain(std::vector<JointDef> joints);

  std::size_t size() const { return joints_.size(); }
  const std::vector<JointDef>& joints() const { return joints_; }
  const JointDef& joint(std::size_t i) const { return joints_.at(i); }
  std::vector<std::string> link_names() const;

  /// Index of the joint whose frame carries the given link name.
  std::optional<std::size_t> find_link(std::string_view name) const;
  /// As find_link() but throws std::out_of_range for unknown links.
  std::size_t link_index(std::string_view name) const;

 private:
  std::vector<JointDef> joints_;
};

/// Parses the line-oriented chain format:
///   joint <name> <revolute|prismatic> axis=x,y,z origin=x,y,z rpy=r,p,y
///         pos=lo,hi vel=v acc=a
/// `origin` and `rpy` default to zero. A joint with lo == hi is rigid.
KinematicChain parse_chain(std::string_view text);

std::string serialize_chain(const KinematicChain& chain);

/// Rotation matrix from roll-pitch-yaw, R = Rz(yaw) Ry(pitch) Rx(roll).
Eigen::Matrix3d rpy_matrix(const Eigen::Vector3d& rpy);

/// Homogeneous transform with scalar type S (double or Expr).
template <typename S>
struct Frame {
  std::array<std::array<S, 3>, 3> rotation;
  std::array<S, 3> position;
};

namespace detail {

// Rotation of `angle` about unit `axis` (Rodrigues), skipping terms whose
// constant coefficient is zero.
template <typename S, typename Lift>
std::array<std::array<S, 3>, 3> axis_rotation(const Eigen::Vector3d& axis,
                                              const S& angle, Lift lift) {
  using std::cos;
  using std::sin;
  const S c = cos(angle);
  const S s = sin(angle);
  const S one_minus_c = lift(1.0) - c;
  Eigen::Matrix3d skew;
  skew << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(),
      0;
  std::array<std::array<S, 3>, 3> r;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      std::optional<S> entry;
      auto accumulate = [&](const S& term) {
        entry = entry ? *entry + term : term;
      };
      if (i == j) accumulate(c);
      if (skew(i, j) != 0.0) accumulate(s * skew(i, j));
      const double outer = axis(i) * axis(j);
      if (outer != 0.0) accumulate(one_minus_c * outer);
      r[i][j] = entry ? *entry : lift(0.0);
    }
  }
  return r;
}

template <typename S>
std::array<std::array<S, 3>, 3> multiply(const std::array<std::array<S, 3>, 3>& a,
                                         const std::array<std::array<S, 3>, 3>& b) {
  std::array<std::array<S, 3>, 3> r;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
    }
  }
  return r;
}

// a * C for a constant matrix C, skipping zero entries of C.
template <typename S, typename Lift>
std::array<std::array<S, 3>, 3> multiply_constant(
    const std::array<std::array<S, 3>, 3>& a, const Eigen::Matrix3d& c,
    Lift lift) {
  std::array<std::array<S, 3>, 3> r;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      std::optional<S> entry;
      for (int k = 0; k < 3; ++k) {
        if (c(k, j) == 0.0) continue;
        const S term = c(k, j) == 1.0 ? a[i][k] : a[i][k] * c(k, j);
        entry = entry ? *entry + term : term;
      }
      r[i][j] = entry ? *entry : lift(0.0);
    }
  }
  return r;
}

// a * v for a constant vector v, skipping zero entries of v.
template <typename S, typename Lift>
std::array<S, 3> apply_constant(const std::array<std::array<S, 3>, 3>& a,
                                const Eigen::Vector3d& v, Lift lift) {
  std::array<S, 3> r;
  for (int i = 0; i < 3; ++i) {
    std::optional<S> entry;
    for (int k = 0; k < 3; ++k) {
      if (v(k) == 0.0) continue;
      const S term = a[i][k] * v(k);
      entry = entry ? *entry + term : term;
    }
    r[i] = entry ? *entry : lift(0.0);
  }
  return r;
}

}  // namespace detail

/// World-frame pose of the link driven by joint `link`, composing for every
/// joint j <= link: joint motion (rotation or translation along the axis)
/// followed by the constant link offset.
template <typename S, typename Lift>
Frame<S> link_frame(const KinematicChain& chain, std::size_t link,
                    std::span<const S> q, Lift lift) {
  if (q.size() != chain.size()) {
    throw std::invalid_argument("configuration size does not match chain");
  }
  std::optional<Frame<S>> frame;
  for (std::size_t j = 0; j <= link; ++j) {
    const JointDef& joint = chain.joint(j);
    Frame<S> next;
    if (!frame) {
      if (joint.kind == JointKind::Revolute) {
        next.rotation = detail::axis_rotation(joint.axis, q[j], lift);
        next.position = {lift(0.0), lift(0.0), lift(0.0)};
      } else {
        for (int r = 0; r < 3; ++r) {
          for (int c = 0; c < 3; ++c) next.rotation[r][c] = lift(r == c ? 1 : 0);
        }
        for (int r = 0; r < 3; ++r) {
          next.position[r] =
              joint.axis(r) == 0.0 ? lift(0.0) : q[j] * joint.axis(r);
        }
      }
    } else {
      next = *frame;
      if (joint.kind == JointKind::Revolute) {
        next.rotation = detail::multiply(
            frame->rotation, detail::axis_rotation(joint.axis, q[j], lift));
      } else {
        const auto shift = detail::apply_constant(frame->rotation, joint.axis, lift);
        for (int r = 0; r < 3; ++r) next.position[r] = next.position[r] + shift[r] * q[j];
      }
    }
    if (!joint.origin_translation.isZero()) {
      const auto offset =
          detail::apply_constant(next.rotation, joint.origin_translation, lift);
      for (int r = 0; r < 3; ++r) next.position[r] = next.position[r] + offset[r];
    }
    if (!joint.origin_rpy.isZero()) {
      next.rotation = detail::multiply_constant(
          next.rotation, rpy_matrix(joint.origin_rpy), lift);
    }
    frame = std::move(next);
  }
  return *frame;
}

/// Forward-kinematics expressions for the origin of a link.
std::array<ExprRef, 3> fk_position(const KinematicChain& chain,
                                   std::string_view link, ExpressionGraph& graph,
                                   std::span<const ExprRef> q_vars);

/// World direction of a link-local unit axis. Throws std::invalid_argument
/// for a non-unit axis.
std::array<ExprRef, 3> fk_axis(const KinematicChain& chain, std::string_view link,
                               const Eigen::Vector3d& local_axis,
                               ExpressionGraph& graph,
                               std::span<const ExprRef> q_vars);

/// Numeric counterparts of fk_position() and fk_axis().
Eigen::Vector3d link_position(const KinematicChain& chain, std::string_view link,
                              std::span<const double> q);
Eigen::Vector3d link_axis(const KinematicChain& chain, std::string_view link,
                          const Eigen::Vector3d& local_axis,
                          std::span<const double> q);

}  // namespace phaseopt
