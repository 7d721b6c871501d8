#pragma once

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "phaseopt/expr_graph.hpp"
#include "phaseopt/robot.hpp"
#include "phaseopt/task.hpp"

namespace phaseopt::testing {

inline std::string scenario_path(const std::string& name) {
  return std::string(PHASEOPT_SCENARIOS) + "/" + name;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline KinematicChain load_chain(const std::string& name) {
  return parse_chain(read_text(scenario_path(name)));
}

inline TaskSpec load_task(const std::string& chain, const std::string& task) {
  return parse_task(read_text(scenario_path(task)), load_chain(chain));
}

// Random expression built around a fixed evaluation point. Values are kept
// moderate and away from the domain edges of Div and Sqrt, so the point is a
// valid place to compare derivatives.
class RandomExpression {
 public:
  RandomExpression(ExpressionGraph& graph, std::vector<ExprRef> vars,
                   std::vector<double> point, std::mt19937& rng)
      : g_(graph), vars_(std::move(vars)), x_(std::move(point)), rng_(rng) {}

  ExprRef build(int depth) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (depth == 0 || unit(rng_) < 0.2) return leaf();
    const int op = std::uniform_int_distribution<int>(0, 8)(rng_);
    ExprRef out;
    if (op < 5) {
      const ExprRef a = build(depth - 1);
      switch (op) {
        case 0: out = g_.build(Op::Neg, a); break;
        case 1: out = g_.build(Op::Sin, a); break;
        case 2: out = g_.build(Op::Cos, a); break;
        case 3: {
          const ExprRef arg = value(a) >= 0.1
                                  ? a
                                  : g_.build(Op::Add, g_.build(Op::Square, a),
                                             g_.constant(0.25));
          out = g_.build(Op::Sqrt, arg);
          break;
        }
        default: out = g_.build(Op::Square, a); break;
      }
    } else {
      const ExprRef a = build(depth - 1);
      ExprRef b = build(depth - 1);
      switch (op) {
        case 5: out = g_.build(Op::Add, a, b); break;
        case 6: out = g_.build(Op::Sub, a, b); break;
        case 7: out = g_.build(Op::Mul, a, b); break;
        default: {
          const double vb = value(b);
          if (std::abs(vb) < 0.25) {
            b = g_.build(vb >= 0.0 ? Op::Add : Op::Sub, b, g_.constant(0.5));
          }
          out = g_.build(Op::Div, a, b);
          break;
        }
      }
    }
    if (std::abs(value(out)) > 4.0) out = g_.build(Op::Sin, out);
    return out;
  }

  double value(ExprRef r) const {
    const ExprRef roots[] = {r};
    return g_.evaluate(roots, x_)[0];
  }

 private:
  ExprRef leaf() {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng_) < 0.7) {
      return vars_[std::uniform_int_distribution<std::size_t>(0, vars_.size() - 1)(rng_)];
    }
    return g_.constant(std::uniform_real_distribution<double>(-2.0, 2.0)(rng_));
  }

  ExpressionGraph& g_;
  std::vector<ExprRef> vars_;
  std::vector<double> x_;
  std::mt19937& rng_;
};

inline Eigen::MatrixXd central_difference(const ExpressionGraph& g,
                                          const std::vector<ExprRef>& roots,
                                          std::vector<double> x, double h) {
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(roots.size()),
                      static_cast<Eigen::Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double saved = x[j];
    x[j] = saved + h;
    const auto plus = g.evaluate(roots, x);
    x[j] = saved - h;
    const auto minus = g.evaluate(roots, x);
    x[j] = saved;
    for (std::size_t r = 0; r < roots.size(); ++r) {
      jac(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          (plus[r] - minus[r]) / (2.0 * h);
    }
  }
  return jac;
}

// Derivative agreement rule: relative 1e-5 where |d| > 1e-3, else absolute 1e-7.
inline bool derivative_matches(double exact, double reference) {
  if (std::abs(reference) > 1e-3) {
    return std::abs(exact - reference) <= 1e-5 * std::abs(reference);
  }
  return std::abs(exact - reference) <= 1e-7;
}

// Plain Eigen forward kinematics: per joint, motion about/along the axis, then
// the fixed origin translation and roll-pitch-yaw rotation.
inline Eigen::Isometry3d reference_frame(const KinematicChain& chain, std::size_t link,
                                         const std::vector<double>& q) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  for (std::size_t j = 0; j <= link; ++j) {
    const JointDef& joint = chain.joint(j);
    if (joint.kind == JointKind::Revolute) {
      t.rotate(Eigen::AngleAxisd(q[j], joint.axis));
    } else {
      t.translate(q[j] * joint.axis);
    }
    t.translate(joint.origin_translation);
    t.rotate(Eigen::AngleAxisd(joint.origin_rpy.z(), Eigen::Vector3d::UnitZ()) *
             Eigen::AngleAxisd(joint.origin_rpy.y(), Eigen::Vector3d::UnitY()) *
             Eigen::AngleAxisd(joint.origin_rpy.x(), Eigen::Vector3d::UnitX()));
  }
  return t;
}

inline std::vector<double> random_configuration(const KinematicChain& chain,
                                                std::mt19937& rng) {
  std::vector<double> q(chain.size());
  for (std::size_t j = 0; j < chain.size(); ++j) {
    const auto& joint = chain.joint(j);
    q[j] = joint.lower == joint.upper
               ? joint.lower
               : std::uniform_real_distribution<double>(joint.lower, joint.upper)(rng);
  }
  return q;
}

}  // namespace phaseopt::testing
