#include "octmpc/prediction.hpp"

#include "test_systems.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace octmpc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double max_abs(const MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

DisturbanceFeedback random_feedback(int N, int nu, int nx, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  DisturbanceFeedback M;
  for (int m = 1; m < N; ++m) M.blocks.push_back(MatrixXd::NullaryExpr(nu, nx, [&] { return nd(rng); }));
  M.terminal = MatrixXd::NullaryExpr(nu, nx, [&] { return nd(rng); });
  return M;
}

}  // namespace

TEST(Prediction, ScalarIntegrator) {
  const auto sys = fixtures::scalar_system(1, 1, 1, 5, 1, 1);
  const auto pm = build_prediction(sys, 3);
  EXPECT_TRUE(pm.Cxx == MatrixXd::Ones(3, 1));
  MatrixXd Cxu(3, 3);
  Cxu << 0, 0, 0, 1, 0, 0, 1, 1, 0;
  EXPECT_TRUE(pm.Cxu == Cxu);
  EXPECT_EQ(pm.b_bold.size(), 3 * sys.nc());
  for (int i = 0; i < 3; ++i) EXPECT_TRUE(pm.b_bold.segment(i * sys.nc(), sys.nc()) == sys.b);
}

TEST(Prediction, System1PowersAndToeplitz) {
  const auto sys = fixtures::system1();
  const int N = 10;
  const auto pm = build_prediction(sys, N);
  MatrixXd A9 = MatrixXd::Identity(2, 2);
  for (int k = 0; k < 9; ++k) A9 = A9 * sys.A;
  EXPECT_LT(max_abs(pm.Cxx.bottomRows(2) - A9), 1e-14);

  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> pick(0, N - 1);
  for (int trial = 0; trial < 50; ++trial) {
    const int i = pick(rng), j = pick(rng);
    MatrixXd expected_u = MatrixXd::Zero(2, 1), expected_w = MatrixXd::Zero(2, 2);
    if (i > j) {
      MatrixXd P = MatrixXd::Identity(2, 2);
      for (int k = 0; k < i - j - 1; ++k) P = P * sys.A;
      expected_u = P * sys.B;
      expected_w = P;
    }
    EXPECT_LT(max_abs(pm.Cxu.block(2 * i, j, 2, 1) - expected_u), 1e-13);
    EXPECT_LT(max_abs(pm.Cxw.block(2 * i, 2 * j, 2, 2) - expected_w), 1e-13);
    // Kronecker blocks
    const MatrixXd zF = i == j ? sys.F : MatrixXd::Zero(sys.nc(), 2);
    EXPECT_TRUE(pm.F_bold.block(i * sys.nc(), j * 2, sys.nc(), 2) == zF);
    const MatrixXd zG = i == j ? sys.G : MatrixXd::Zero(sys.nc(), 1);
    EXPECT_TRUE(pm.G_bold.block(i * sys.nc(), j, sys.nc(), 1) == zG);
    if (i < N - 1 && j < N - 1) {
      const auto nd = sys.W.num_rows();
      const MatrixXd zD = i == j ? sys.W.normals() : MatrixXd::Zero(nd, 2);
      EXPECT_TRUE(pm.D_bold.block(i * nd, j * 2, nd, 2) == zD);
      const MatrixXd zB = i == j ? sys.Bw : MatrixXd::Zero(2, 2);
      EXPECT_TRUE(pm.Bw_bold_short.block(2 * i, 2 * j, 2, 2) == zB);
    }
  }
  EXPECT_EQ(pm.D_bold.rows(), (N - 1) * sys.W.num_rows());
  EXPECT_EQ(pm.d_bold.size(), (N - 1) * sys.W.num_rows());
}

TEST(Prediction, RejectsShortHorizon) {
  EXPECT_THROW(build_prediction(fixtures::system1(), 1), ModelError);
}

TEST(Prediction, TmpcGainExpansion) {
  const auto sys = fixtures::scalar_system(1, 1, 1, 5, 1, 1);
  EXPECT_EQ(max_abs(expand_tmpc_gain(MatrixXd::Zero(1, 1), sys, 4)), 0.0);

  const MatrixXd Kb = expand_tmpc_gain(MatrixXd::Constant(1, 1, -1.0), sys, 3);
  MatrixXd expected(3, 3);
  expected << 0, 0, 0, -1, 0, 0, 0, -1, 0;
  EXPECT_TRUE(Kb == expected);

  const auto s1 = fixtures::system1();
  MatrixXd K(1, 2);
  K << -0.3, -0.7;
  const MatrixXd K2 = expand_tmpc_gain(K, s1, 2);
  EXPECT_TRUE(K2.block(1, 0, 1, 2) == K);
  EXPECT_EQ(max_abs(K2.topRows(1)), 0.0);
  EXPECT_EQ(max_abs(K2.block(1, 2, 1, 2)), 0.0);

  // blocks depend only on i - j
  const MatrixXd K10 = expand_tmpc_gain(K, s1, 10);
  for (int i = 1; i < 10; ++i) {
    for (int j = 0; j < i; ++j) EXPECT_TRUE(K10.block(i, 2 * j, 1, 2) == K10.block(i - j, 0, 1, 2));
  }
}

TEST(Prediction, ErrorMapScalarExamples) {
  const auto sys = fixtures::scalar_system(1, 1, 1, 5, 1, 1);
  // pure accumulation
  MatrixXd E = error_propagation_map(DisturbanceFeedback::zero(3, 1, 1), sys, 3);
  MatrixXd expected(3, 2);
  expected << 0, 0, 1, 0, 1, 1;
  EXPECT_TRUE(E == expected);
  // deadbeat TMPC
  E = error_propagation_map(tmpc_feedback(MatrixXd::Constant(1, 1, -1.0), sys, 3), sys, 3);
  expected << 0, 0, 1, 0, 0, 1;
  EXPECT_TRUE(E == expected);
  // single M_1 = m: e_2 = w_1 + (A + B m) w_0
  const double m = 0.37;
  DisturbanceFeedback M = DisturbanceFeedback::zero(3, 1, 1);
  M.blocks[0](0, 0) = m;
  E = error_propagation_map(M, sys, 3);
  EXPECT_DOUBLE_EQ(E(2, 0), 1.0 + m);
  EXPECT_DOUBLE_EQ(E(2, 1), 1.0);
  EXPECT_DOUBLE_EQ(E(1, 0), 1.0);
}

TEST(Prediction, StackedEqualsSteppedSimulation) {
  const auto sys = fixtures::system1();
  const int N = 8, nx = 2, nu = 1, nw = 2;
  const auto pm = build_prediction(sys, N);
  std::mt19937_64 rng(42);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 100; ++trial) {
    const auto M = random_feedback(N, nu, nx, rng);
    const VectorXd x0 = VectorXd::NullaryExpr(nx, [&] { return nd(rng); });
    const VectorXd uhat = VectorXd::NullaryExpr(N * nu, [&] { return nd(rng); });
    const VectorXd w = VectorXd::NullaryExpr((N - 1) * nw, [&] { return nd(rng); });
    const MatrixXd Moff = M.expand().leftCols((N - 1) * nx);

    const VectorXd stacked = pm.Cxx * x0 + pm.Cxu * uhat +
                             (pm.Cxw.leftCols((N - 1) * nx) + pm.Cxu * Moff) * pm.Bw_bold_short * w;

    VectorXd x = x0, xhat = x0;
    VectorXd e_map = error_propagation_map(M, sys, N) * w;
    for (int i = 0; i < N; ++i) {
      EXPECT_LT((stacked.segment(i * nx, nx) - x).norm(), 1e-10 * (1.0 + x.norm()));
      EXPECT_LT((e_map.segment(i * nx, nx) - (x - xhat)).norm(), 1e-10 * (1.0 + x.norm()));
      if (i == N - 1) break;
      VectorXd u = uhat.segment(i * nu, nu);
      for (int l = 0; l < i; ++l) u += M.block(i - l) * sys.Bw * w.segment(l * nw, nw);
      const VectorXd wi = w.segment(i * nw, nw);
      x = sys.step(x, u, wi);
      xhat = sys.A * xhat + sys.B * uhat.segment(i * nu, nu);
    }
  }
}

TEST(Prediction, CausalityAndRoundTrip) {
  std::mt19937_64 rng(7);
  const int N = 6, nu = 2, nx = 3;
  const auto M = random_feedback(N, nu, nx, rng);
  const MatrixXd Moff = M.expand();
  for (int i = 0; i < N; ++i) {
    for (int l = i; l < N; ++l) EXPECT_EQ(max_abs(Moff.block(i * nu, l * nx, nu, nx)), 0.0);
  }
  const auto back = DisturbanceFeedback::from_matrix(Moff, nu, nx, M.terminal);
  ASSERT_EQ(back.blocks.size(), M.blocks.size());
  for (std::size_t k = 0; k < M.blocks.size(); ++k) EXPECT_TRUE(back.blocks[k] == M.blocks[k]);

  MatrixXd broken = Moff;
  broken(2 * nu, 0) += 1.0;  // breaks the constant block diagonal
  EXPECT_THROW(DisturbanceFeedback::from_matrix(broken, nu, nx, M.terminal), ModelError);

  const nlohmann::json j = M;
  const auto parsed = nlohmann::json::parse(j.dump()).get<DisturbanceFeedback>();
  for (std::size_t k = 0; k < M.blocks.size(); ++k) EXPECT_TRUE(parsed.blocks[k] == M.blocks[k]);
  EXPECT_TRUE(parsed.terminal == M.terminal);
}

TEST(Prediction, ErrorResponseMatchesTmpcClosedLoop) {
  const auto sys = fixtures::system1();
  MatrixXd K(1, 2);
  K << -0.3, -0.7;
  const auto phi = error_response(tmpc_feedback(K, sys, 5), sys);
  const MatrixXd Acl = sys.A + sys.B * K;
  MatrixXd P = MatrixXd::Identity(2, 2);
  for (const auto& ph : phi) {
    EXPECT_LT(max_abs(ph - P), 1e-13);
    P = Acl * P;
  }
}
