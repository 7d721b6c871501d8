#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "phaseopt/robot.hpp"
#include "test_support.hpp"

namespace phaseopt {
namespace {

constexpr const char* kArm2 =
    "joint j1 revolute axis=0,0,1 origin=1,0,0 pos=-3,3 vel=1 acc=1\n"
    "joint j2 revolute axis=0,0,1 origin=1,0,0 pos=-3,3 vel=1 acc=1\n";

Eigen::Vector3d fk_via_graph(const KinematicChain& chain, std::string_view link,
                             const std::vector<double>& q) {
  ExpressionGraph g;
  std::vector<ExprRef> vars;
  for (std::size_t j = 0; j < chain.size(); ++j) vars.push_back(g.new_variable());
  const auto p = fk_position(chain, link, g, vars);
  const std::vector<ExprRef> roots(p.begin(), p.end());
  const auto v = g.evaluate(roots, q);
  return {v[0], v[1], v[2]};
}

Eigen::Vector3d axis_via_graph(const KinematicChain& chain, std::string_view link,
                               const Eigen::Vector3d& local, const std::vector<double>& q) {
  ExpressionGraph g;
  std::vector<ExprRef> vars;
  for (std::size_t j = 0; j < chain.size(); ++j) vars.push_back(g.new_variable());
  const auto p = fk_axis(chain, link, local, g, vars);
  const std::vector<ExprRef> roots(p.begin(), p.end());
  const auto v = g.evaluate(roots, q);
  return {v[0], v[1], v[2]};
}

TEST(Robot, ParsesTwoJointArm) {
  const auto chain = parse_chain(kArm2);
  ASSERT_EQ(chain.size(), 2u);
  EXPECT_EQ(chain.joint(1).name, "j2");
  EXPECT_EQ(chain.joint(0).origin_translation, Eigen::Vector3d(1, 0, 0));
  EXPECT_EQ(chain.link_index("j2"), 1u);
  EXPECT_FALSE(chain.find_link("tip").has_value());
  EXPECT_THROW(chain.link_index("tip"), std::out_of_range);
}

TEST(Robot, ParsesNineJointMobileManipulator) {
  EXPECT_EQ(testing::load_chain("mobile9.chain").size(), 9u);
}

TEST(Robot, ParseErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) {
    try {
      parse_chain(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return -1;
  };
  const std::string good = "joint a revolute axis=0,0,1 pos=-1,1 vel=1 acc=1\n";
  EXPECT_EQ(line_of(good + "joint b revolute axis=0,0,2 pos=-1,1 vel=1 acc=1\n"), 2);
  EXPECT_EQ(line_of(good + "joint a revolute axis=0,0,1 pos=-1,1 vel=1 acc=1\n"), 2);
  EXPECT_EQ(line_of("# c\n\njoint b revolute axis=0,0,1 pos=1,-1 vel=1 acc=1\n"), 3);
  EXPECT_EQ(line_of("joint b revolute axis=0,0,1 pos=-1,1 vel=0 acc=1\n"), 1);
  EXPECT_EQ(line_of("joint b hinge axis=0,0,1 pos=-1,1 vel=1 acc=1\n"), 1);
  EXPECT_EQ(line_of("joint b revolute axis=0,1 pos=-1,1 vel=1 acc=1\n"), 1);
  EXPECT_EQ(line_of("joint b revolute axis=0,0,1 pos=-1,1 acc=1\n"), 1);
  EXPECT_EQ(line_of("joint b revolute axis=0,0,1 pos=-1,1 vel=1 acc=1 color=red\n"), 1);
  EXPECT_EQ(line_of("link b\n"), 1);
  EXPECT_EQ(line_of(""), 1);
  try {
    parse_chain("joint b revolute axis=0,0,2 pos=-1,1 vel=1 acc=1\n");
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("non-unit axis"), std::string::npos);
  }
}

TEST(Robot, RigidJointIsAccepted) {
  const auto chain = parse_chain("joint tool revolute axis=0,0,1 origin=0.1,0,0 pos=0,0 vel=1 acc=1\n");
  EXPECT_EQ(chain.joint(0).lower, chain.joint(0).upper);
}

TEST(Robot, SerializeRoundTrips) {
  for (const char* name : {"arm2.chain", "arm3.chain", "mobile9.chain", "planar3.chain"}) {
    const auto chain = testing::load_chain(name);
    const auto again = parse_chain(serialize_chain(chain));
    ASSERT_EQ(again.size(), chain.size());
    for (std::size_t j = 0; j < chain.size(); ++j) {
      EXPECT_EQ(again.joint(j).name, chain.joint(j).name);
      EXPECT_EQ(again.joint(j).axis, chain.joint(j).axis);
      EXPECT_EQ(again.joint(j).origin_translation, chain.joint(j).origin_translation);
      EXPECT_EQ(again.joint(j).origin_rpy, chain.joint(j).origin_rpy);
      EXPECT_EQ(again.joint(j).lower, chain.joint(j).lower);
      EXPECT_EQ(again.joint(j).upper, chain.joint(j).upper);
      EXPECT_EQ(again.joint(j).velocity_limit, chain.joint(j).velocity_limit);
      EXPECT_EQ(again.joint(j).acceleration_limit, chain.joint(j).acceleration_limit);
    }
  }
}

TEST(Robot, PlanarArmPositions) {
  const auto chain = parse_chain(kArm2);
  const Eigen::Vector3d straight = fk_via_graph(chain, "j2", {0, 0});
  EXPECT_NEAR((straight - Eigen::Vector3d(2, 0, 0)).norm(), 0.0, 1e-15);
  const Eigen::Vector3d up = fk_via_graph(chain, "j2", {std::numbers::pi / 2, 0});
  EXPECT_NEAR((up - Eigen::Vector3d(0, 2, 0)).norm(), 0.0, 1e-15);
  const Eigen::Vector3d elbow = fk_via_graph(chain, "j1", {std::numbers::pi / 2, 0.4});
  EXPECT_NEAR((elbow - Eigen::Vector3d(0, 1, 0)).norm(), 0.0, 1e-15);
}

TEST(Robot, PrismaticPositionAndAxis) {
  const auto chain = parse_chain("joint x prismatic axis=1,0,0 pos=-2,2 vel=1 acc=1\n");
  EXPECT_NEAR((fk_via_graph(chain, "x", {0.7}) - Eigen::Vector3d(0.7, 0, 0)).norm(), 0.0,
              1e-15);
  for (double q : {-1.3, 0.0, 0.4}) {
    EXPECT_EQ(axis_via_graph(chain, "x", Eigen::Vector3d::UnitZ(), {q}),
              Eigen::Vector3d::UnitZ());
  }
}

TEST(Robot, RevoluteAxisRotation) {
  const auto chain = parse_chain("joint r revolute axis=0,0,1 pos=-3,3 vel=1 acc=1\n");
  const Eigen::Vector3d a =
      axis_via_graph(chain, "r", Eigen::Vector3d::UnitX(), {std::numbers::pi / 2});
  EXPECT_NEAR((a - Eigen::Vector3d(0, 1, 0)).norm(), 0.0, 1e-15);
  ExpressionGraph g;
  std::vector<ExprRef> vars = {g.new_variable()};
  EXPECT_THROW(fk_axis(chain, "r", Eigen::Vector3d(0, 0, 2), g, vars),
               std::invalid_argument);
  EXPECT_THROW(fk_position(chain, "nope", g, vars), std::out_of_range);
}

class ChainProperty : public ::testing::TestWithParam<const char*> {};

TEST_P(ChainProperty, GraphMatchesEigenReference) {
  const auto chain = testing::load_chain(GetParam());
  std::mt19937 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto q = testing::random_configuration(chain, rng);
    for (std::size_t link = 0; link < chain.size(); ++link) {
      const auto ref = testing::reference_frame(chain, link, q);
      const auto& name = chain.joint(link).name;
      EXPECT_LE((fk_via_graph(chain, name, q) - ref.translation()).norm(), 1e-10);
      EXPECT_LE((link_position(chain, name, q) - ref.translation()).norm(), 1e-10);
      const Eigen::Vector3d local = Eigen::Vector3d(0.3, -0.4, 1.2).normalized();
      EXPECT_LE((axis_via_graph(chain, name, local, q) - ref.linear() * local).norm(),
                1e-10);
    }
  }
}

TEST_P(ChainProperty, AxisDirectionsStayUnit) {
  const auto chain = testing::load_chain(GetParam());
  std::mt19937 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto q = testing::random_configuration(chain, rng);
    for (const Eigen::Vector3d& local :
         {Eigen::Vector3d::UnitX().eval(), Eigen::Vector3d(1, 2, 2).normalized().eval()}) {
      const auto& tip = chain.joints().back().name;
      EXPECT_NEAR(axis_via_graph(chain, tip, local, q).norm(), 1.0, 1e-9);
    }
  }
}

TEST_P(ChainProperty, ConsecutiveRevoluteOriginsKeepTheirDistance) {
  const auto chain = testing::load_chain(GetParam());
  std::mt19937 rng(3);
  for (std::size_t j = 1; j < chain.size(); ++j) {
    if (chain.joint(j).kind != JointKind::Revolute ||
        chain.joint(j - 1).kind != JointKind::Revolute) {
      continue;
    }
    std::vector<double> d;
    for (int trial = 0; trial < 100; ++trial) {
      const auto q = testing::random_configuration(chain, rng);
      d.push_back((fk_via_graph(chain, chain.joint(j).name, q) -
                   fk_via_graph(chain, chain.joint(j - 1).name, q))
                      .norm());
    }
    double mean = 0.0;
    for (double v : d) mean += v / static_cast<double>(d.size());
    double var = 0.0;
    for (double v : d) var += (v - mean) * (v - mean) / static_cast<double>(d.size());
    EXPECT_LE(var, 1e-18) << "joint " << chain.joint(j).name;
  }
}

INSTANTIATE_TEST_SUITE_P(Chains, ChainProperty,
                         ::testing::Values("arm2.chain", "arm3.chain", "planar3.chain",
                                           "mobile9.chain", "slider.chain"));

TEST(Robot, RpyMatrixMatchesEigen) {
  const Eigen::Vector3d rpy(0.3, -0.7, 1.1);
  const Eigen::Matrix3d expected =
      (Eigen::AngleAxisd(rpy.z(), Eigen::Vector3d::UnitZ()) *
       Eigen::AngleAxisd(rpy.y(), Eigen::Vector3d::UnitY()) *
       Eigen::AngleAxisd(rpy.x(), Eigen::Vector3d::UnitX()))
          .toRotationMatrix();
  EXPECT_LE((rpy_matrix(rpy) - expected).norm(), 1e-15);
}

TEST(Robot, OffsetRotationChangesChildFrame) {
  const auto chain = parse_chain(
      "joint a revolute axis=0,0,1 origin=0,0,0.5 rpy=1.5707963267948966,0,0 pos=-3,3 "
      "vel=1 acc=1\n"
      "joint b revolute axis=0,0,1 origin=0.2,0,0 pos=-3,3 vel=1 acc=1\n");
  std::mt19937 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto q = testing::random_configuration(chain, rng);
    EXPECT_LE((link_position(chain, "b", q) -
               testing::reference_frame(chain, 1, q).translation())
                  .norm(),
              1e-12);
  }
}

}  // namespace
}  // namespace phaseopt
