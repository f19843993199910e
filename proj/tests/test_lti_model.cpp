#include "octmpc/lti_model.hpp"

#include "test_systems.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace octmpc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

using fixtures::system1;

TEST(Discretize, ScalarIntegrator) {
  const auto d = forward_euler_discretize(MatrixXd::Zero(1, 1), MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1), 0.1);
  EXPECT_DOUBLE_EQ(d.A(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(d.B(0, 0), 0.1);
}

TEST(Discretize, System1) {
  const auto sys = system1();
  MatrixXd A(2, 2);
  A << 1, 0.1, -0.1, 0.99;
  EXPECT_LT((sys.A - A).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((sys.B - Eigen::Vector2d(0, 2)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((sys.Bw - 0.1 * MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Discretize, IdentityDrift) {
  const auto d = forward_euler_discretize(MatrixXd::Identity(3, 3), MatrixXd::Zero(3, 1), MatrixXd::Zero(3, 1), 0.1);
  EXPECT_LT((d.A - 1.1 * MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Discretize, RejectsNonPositiveSamplingTime) {
  EXPECT_THROW(forward_euler_discretize(MatrixXd::Zero(1, 1), MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1), 0.0),
               ModelError);
  EXPECT_THROW(forward_euler_discretize(MatrixXd::Zero(1, 1), MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1), -1.0),
               ModelError);
}

TEST(Validate, System1IsClean) {
  const auto rep = validate(system1());
  EXPECT_TRUE(rep.issues.empty());
  EXPECT_TRUE(validate(CostWeights{MatrixXd::Identity(2, 2), MatrixXd::Identity(1, 1)}, 2, 1).issues.empty());
}

TEST(Validate, DisturbanceWithoutOrigin) {
  auto sys = system1();
  sys.W = Polytope::box(Eigen::Vector2d(1, -5), Eigen::Vector2d(2, 5));
  const auto rep = validate(sys);
  EXPECT_FALSE(rep.ok());
  EXPECT_TRUE(rep.has("disturbance-origin"));
}

TEST(Validate, UnboundedDisturbance) {
  auto sys = system1();
  MatrixXd D(1, 2);
  D << 1, 0;
  sys.W = Polytope(D, VectorXd::Ones(1));
  EXPECT_TRUE(validate(sys).has("disturbance-unbounded"));
}

TEST(Validate, DimensionMismatch) {
  auto sys = system1();
  sys.B = MatrixXd::Zero(3, 1);
  const auto rep = validate(sys);
  EXPECT_TRUE(rep.has("dimension"));
  EXPECT_FALSE(rep.ok());
}

TEST(Validate, OriginOnBoundaryIsWarning) {
  auto sys = system1();
  sys.b[0] = 0.0;
  const auto rep = validate(sys);
  EXPECT_TRUE(rep.ok());
  EXPECT_TRUE(rep.has("origin-infeasible"));
}

TEST(Validate, Weights) {
  EXPECT_TRUE(validate(CostWeights{MatrixXd::Identity(2, 2), MatrixXd::Zero(1, 1)}, 2, 1).has("weights"));
  MatrixXd Q(2, 2);
  Q << 1, 2, 0, 1;
  EXPECT_TRUE(validate(CostWeights{Q, MatrixXd::Identity(1, 1)}, 2, 1).has("weights"));
  EXPECT_TRUE(validate(CostWeights{MatrixXd::Identity(3, 3), MatrixXd::Identity(1, 1)}, 2, 1).has("dimension"));
}

TEST(Serialization, RoundTripIsBitExact) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    LinearSystem sys = system1();
    sys.A = MatrixXd::NullaryExpr(2, 2, [&] { return ud(rng); });
    sys.B = MatrixXd::NullaryExpr(2, 1, [&] { return ud(rng) / 3.0; });
    sys.F = MatrixXd::NullaryExpr(6, 2, [&] { return ud(rng) * 1e-7; });
    sys.W = Polytope(MatrixXd::NullaryExpr(5, 2, [&] { return ud(rng); }), VectorXd::Ones(5));
    const nlohmann::json j = sys;
    const auto back = nlohmann::json::parse(j.dump()).get<LinearSystem>();
    EXPECT_TRUE(back.A == sys.A);
    EXPECT_TRUE(back.B == sys.B);
    EXPECT_TRUE(back.Bw == sys.Bw);
    EXPECT_TRUE(back.F == sys.F);
    EXPECT_TRUE(back.G == sys.G);
    EXPECT_TRUE(back.b == sys.b);
    EXPECT_TRUE(back.W.normals() == sys.W.normals());
    EXPECT_TRUE(back.W.offsets() == sys.W.offsets());
  }
}
