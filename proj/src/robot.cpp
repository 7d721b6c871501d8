#include "phaseopt/robot.hpp"

#include <algorithm>
#include <set>

#include <Eigen/Geometry>
#include <fmt/format.h>

#include "text_util.hpp"

namespace phaseopt {

namespace {

constexpr double kUnitTolerance = 1e-9;

bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
           c == '-' || c == '.';
  });
}

Eigen::Vector3d vector3(std::string_view value, std::string_view key, int line) {
  const auto list = text::parse_list(value);
  if (!list || list->size() != 3) {
    throw ParseError(fmt::format("'{}' expects three comma-separated numbers",
                                 key),
                     line);
  }
  return {(*list)[0], (*list)[1], (*list)[2]};
}

double positive_scalar(std::string_view value, std::string_view key, int line) {
  const auto v = text::parse_double(value);
  if (!v) throw ParseError(fmt::format("'{}' expects a number", key), line);
  if (!(*v > 0.0)) throw ParseError(fmt::format("'{}' must be positive", key), line);
  return *v;
}

}  // namespace

KinematicChain::KinematicChain(std::vector<JointDef> joints)
    : joints_(std::move(joints)) {
  if (joints_.empty()) {
    throw std::invalid_argument("a kinematic chain needs at least one joint");
  }
  std::set<std::string> names;
  for (const auto& j : joints_) {
    if (!names.insert(j.name).second) {
      throw std::invalid_argument("duplicate joint name '" + j.name + "'");
    }
  }
}

std::vector<std::string> KinematicChain::link_names() const {
  std::vector<std::string> names;
  for (const auto& j : joints_) names.push_back(j.name);
  return names;
}

std::optional<std::size_t> KinematicChain::find_link(std::string_view name) const {
  for (std::size_t i = 0; i < joints_.size(); ++i) {
    if (joints_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t KinematicChain::link_index(std::string_view name) const {
  if (auto i = find_link(name)) return *i;
  throw std::out_of_range("unknown link '" + std::string(name) + "'");
}

KinematicChain parse_chain(std::string_view text) {
  std::vector<JointDef> joints;
  std::set<std::string, std::less<>> names;
  int line_no = 0;
  for (auto raw : text::split(text, '\n')) {
    ++line_no;
    const auto line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto tokens = text::split_whitespace(line);
    if (tokens[0] != "joint") {
      throw ParseError(fmt::format("expected 'joint', found '{}'", tokens[0]),
                       line_no);
    }
    if (tokens.size() < 3) {
      throw ParseError("joint record needs a name and a kind", line_no);
    }
    JointDef joint;
    if (!is_identifier(tokens[1])) {
      throw ParseError(fmt::format("invalid joint name '{}'", tokens[1]), line_no);
    }
    joint.name = std::string(tokens[1]);
    if (tokens[2] == "revolute") {
      joint.kind = JointKind::Revolute;
    } else if (tokens[2] == "prismatic") {
      joint.kind = JointKind::Prismatic;
    } else {
      throw ParseError(fmt::format("unknown joint kind '{}'", tokens[2]), line_no);
    }

    std::set<std::string_view> seen;
    for (std::size_t t = 3; t < tokens.size(); ++t) {
      const auto eq = tokens[t].find('=');
      if (eq == std::string_view::npos) {
        throw ParseError(fmt::format("expected key=value, found '{}'", tokens[t]),
                         line_no);
      }
      const auto key = tokens[t].substr(0, eq);
      const auto value = tokens[t].substr(eq + 1);
      if (!seen.insert(key).second) {
        throw ParseError(fmt::format("repeated key '{}'", key), line_no);
      }
      if (key == "axis") {
        joint.axis = vector3(value, key, line_no);
      } else if (key == "origin") {
        joint.origin_translation = vector3(value, key, line_no);
      } else if (key == "rpy") {
        joint.origin_rpy = vector3(value, key, line_no);
      } else if (key == "pos") {
        const auto list = text::parse_list(value);
        if (!list || list->size() != 2) {
          throw ParseError("'pos' expects lower,upper", line_no);
        }
        joint.lower = (*list)[0];
        joint.upper = (*list)[1];
      } else if (key == "vel") {
        joint.velocity_limit = positive_scalar(value, key, line_no);
      } else if (key == "acc") {
        joint.acceleration_limit = positive_scalar(value, key, line_no);
      } else {
        throw ParseError(fmt::format("unknown key '{}'", key), line_no);
      }
    }
    for (const char* required : {"axis", "pos", "vel", "acc"}) {
      if (!seen.count(required)) {
        throw ParseError(fmt::format("missing key '{}'", required), line_no);
      }
    }
    if (std::abs(joint.axis.norm() - 1.0) > kUnitTolerance) {
      throw ParseError("non-unit axis", line_no);
    }
    if (joint.lower > joint.upper) {
      throw ParseError("inverted position limits", line_no);
    }
    if (!names.insert(joint.name).second) {
      throw ParseError(fmt::format("duplicate joint name '{}'", joint.name),
                       line_no);
    }
    joints.push_back(std::move(joint));
  }
  if (joints.empty()) {
    throw ParseError("chain file defines no joints", line_no);
  }
  return KinematicChain(std::move(joints));
}

std::string serialize_chain(const KinematicChain& chain) {
  std::string out;
  for (const auto& j : chain.joints()) {
    out += fmt::format(
        "joint {} {} axis={},{},{} origin={},{},{} rpy={},{},{} pos={},{} "
        "vel={} acc={}\n",
        j.name, j.kind == JointKind::Revolute ? "revolute" : "prismatic",
        j.axis.x(), j.axis.y(), j.axis.z(), j.origin_translation.x(),
        j.origin_translation.y(), j.origin_translation.z(), j.origin_rpy.x(),
        j.origin_rpy.y(), j.origin_rpy.z(), j.lower, j.upper, j.velocity_limit,
        j.acceleration_limit);
  }
  return out;
}

Eigen::Matrix3d rpy_matrix(const Eigen::Vector3d& rpy) {
  return (Eigen::AngleAxisd(rpy.z(), Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(rpy.y(), Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(rpy.x(), Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

namespace {

Frame<Expr> expr_frame(const KinematicChain& chain, std::string_view link,
                       ExpressionGraph& graph, std::span<const ExprRef> q_vars) {
  const std::size_t index = chain.link_index(link);
  if (q_vars.size() != chain.size()) {
    throw std::invalid_argument("expected one variable per joint");
  }
  std::vector<Expr> q;
  q.reserve(q_vars.size());
  for (auto ref : q_vars) q.emplace_back(&graph, ref);
  auto lift = [&graph](double v) { return Expr(&graph, graph.constant(v)); };
  return link_frame<Expr>(chain, index, q, lift);
}

void require_unit(const Eigen::Vector3d& axis) {
  if (std::abs(axis.norm() - 1.0) > kUnitTolerance) {
    throw std::invalid_argument("non-unit axis");
  }
}

}  // namespace

std::array<ExprRef, 3> fk_position(const KinematicChain& chain,
                                   std::string_view link, ExpressionGraph& graph,
                                   std::span<const ExprRef> q_vars) {
  const auto frame = expr_frame(chain, link, graph, q_vars);
  return {frame.position[0].ref(), frame.position[1].ref(),
          frame.position[2].ref()};
}

std::array<ExprRef, 3> fk_axis(const KinematicChain& chain, std::string_view link,
                               const Eigen::Vector3d& local_axis,
                               ExpressionGraph& graph,
                               std::span<const ExprRef> q_vars) {
  require_unit(local_axis);
  const auto frame = expr_frame(chain, link, graph, q_vars);
  auto lift = [&graph](double v) { return Expr(&graph, graph.constant(v)); };
  const auto dir = detail::apply_constant(frame.rotation, local_axis, lift);
  return {dir[0].ref(), dir[1].ref(), dir[2].ref()};
}

Eigen::Vector3d link_position(const KinematicChain& chain, std::string_view link,
                              std::span<const double> q) {
  const auto frame = link_frame<double>(chain, chain.link_index(link), q,
                                        [](double v) { return v; });
  return {frame.position[0], frame.position[1], frame.position[2]};
}

Eigen::Vector3d link_axis(const KinematicChain& chain, std::string_view link,
                          const Eigen::Vector3d& local_axis,
                          std::span<const double> q) {
  require_unit(local_axis);
  const auto frame = link_frame<double>(chain, chain.link_index(link), q,
                                        [](double v) { return v; });
  Eigen::Vector3d out;
  for (int i = 0; i < 3; ++i) {
    out(i) = frame.rotation[i][0] * local_axis.x() +
             frame.rotation[i][1] * local_axis.y() +
             frame.rotation[i][2] * local_axis.z();
  }
  return out;
}

}  // namespace phaseopt
