#pragma once

#include "octmpc/lti_model.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <vector>

namespace octmpc {

/**
 * @brief Stacked horizon-N matrices. States x_0..x_{N-1}, inputs u_0..u_{N-1}.
 *
 * The "short" disturbance stack holds w_0..w_{N-2}, the only disturbances that
 * reach the stacked states.
 */
struct PredictionMatrices {
  int N = 0;
  Eigen::MatrixXd Cxx;  // [I; A; ...; A^{N-1}]
  Eigen::MatrixXd Cxu;  // block (i,j) = A^{i-j-1} B for i > j
  Eigen::MatrixXd Cxw;  // block (i,j) = A^{i-j-1} for i > j
  Eigen::MatrixXd Bw_bold;        // I_N (x) Bw
  Eigen::MatrixXd Bw_bold_short;  // I_{N-1} (x) Bw
  Eigen::MatrixXd F_bold, G_bold;  // I_N (x) F, I_N (x) G
  Eigen::VectorXd b_bold;          // 1_N (x) b
  Eigen::MatrixXd D_bold;          // I_{N-1} (x) D
  Eigen::VectorXd d_bold;          // 1_{N-1} (x) d
};

PredictionMatrices build_prediction(const LinearSystem& sys, int N);

/// Disturbance feedback M_1..M_{N-1} (Toeplitz part) and the terminal block M_N.
struct DisturbanceFeedback {
  std::vector<Eigen::MatrixXd> blocks;
  Eigen::MatrixXd terminal;

  int horizon() const { return static_cast<int>(blocks.size()) + 1; }
  /// M_m for m = 1..N (m = N gives the terminal block).
  const Eigen::MatrixXd& block(int m) const;
  /// N*nu x N*nx strictly lower block Toeplitz matrix with block (i,l) = M_{i-l}.
  Eigen::MatrixXd expand() const;
  /// Inverse of expand(); throws if the matrix is not causal block Toeplitz.
  static DisturbanceFeedback from_matrix(const Eigen::MatrixXd& M_off, int nu, int nx, Eigen::MatrixXd terminal,
                                         double tol = 0.0);
  static DisturbanceFeedback zero(int N, int nu, int nx);
};

/// M_m = K (A + B K)^{m-1}, m = 1..N.
DisturbanceFeedback tmpc_feedback(const Eigen::MatrixXd& K, const LinearSystem& sys, int N);

/// Bold K: block (i,j) = K (A+BK)^{i-j-1} for i > j.
Eigen::MatrixXd expand_tmpc_gain(const Eigen::MatrixXd& K, const LinearSystem& sys, int N);

/// Phi_1..Phi_{N+1} with Phi_1 = I and Phi_{m+1} = A Phi_m + B M_m, so that
/// e_i = sum_{l<i} Phi_{i-l} Bw w_l and u_i - uhat_i = sum_{l<i} M_{i-l} Bw w_l.
std::vector<Eigen::MatrixXd> error_response(const DisturbanceFeedback& M, const LinearSystem& sys);

/// Maps (w_0..w_{N-2}) to (e_0..e_{N-1}); equals (Cxw + Cxu M_off) Bw_bold_short.
Eigen::MatrixXd error_propagation_map(const DisturbanceFeedback& M, const LinearSystem& sys, int N);

/// Row j gives the worst-case tightening direction of stacked constraint j:
/// (F_bold (Cxw + Cxu M_off) + G_bold M_off) Bw_bold_short.
Eigen::MatrixXd tightening_row_matrix(const DisturbanceFeedback& M, const LinearSystem& sys,
                                      const PredictionMatrices& pm);

void to_json(nlohmann::json& j, const DisturbanceFeedback& M);
void from_json(const nlohmann::json& j, DisturbanceFeedback& M);

}  // namespace octmpc
