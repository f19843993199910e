#pragma once

#include "octmpc/conic.hpp"
#include "octmpc/lti_model.hpp"
#include "octmpc/polytope.hpp"
#include "octmpc/prediction.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <stdexcept>
#include <string>

namespace octmpc {

class DesignError : public std::runtime_error {
 public:
  enum class Kind { kInvalidInput, kInfeasible, kSolverFailure, kTerminalSet };
  DesignError(Kind kind, const std::string& what) : std::runtime_error(what), kind(kind) {}
  Kind kind;
};

struct TerminalIngredients {
  Eigen::MatrixXd K_f;
  Eigen::MatrixXd P;
  Polytope X_T;  // {x | Y x <= z}
  Eigen::VectorXd c_F;
  Eigen::VectorXd c_Y;

  const Eigen::MatrixXd& Y() const { return X_T.normals(); }
  const Eigen::VectorXd& z() const { return X_T.offsets(); }
};

/**
 * @brief Stage tightenings t_0..t_{N-1} (t_0 = 0) plus the tail t_N.
 *
 * Z is the stacked dual certificate (n_d (N-1) x n_c N): Z' D_bold equals the
 * tightening row matrix and Z' d_bold = t. Lambda1/Lambda2 certify the terminal
 * conditions when a terminal set is attached.
 */
struct TighteningVector {
  int N = 0;
  int nc = 0;
  Eigen::VectorXd t;
  Eigen::VectorXd tail;
  Eigen::MatrixXd Z;
  Eigen::MatrixXd Lambda1;
  Eigen::MatrixXd Lambda2;

  /// t_i for i = 0..N (i = N returns the tail).
  Eigen::VectorXd stage(int i) const;
  double norm() const { return t.norm(); }
};

struct LqrResult {
  Eigen::MatrixXd K;
  Eigen::MatrixXd P;
  int iterations = 0;
  double residual = 0.0;
};

/// Infinite-horizon LQR by Riccati iteration; K = -(R + B'PB)^{-1} B'PA.
LqrResult solve_dare(const LinearSystem& sys, const CostWeights& weights, int max_iter = 10000);
Eigen::MatrixXd lqr_terminal_gain(const LinearSystem& sys, const CostWeights& weights);

/// Solution of A_cl' P A_cl + Q + K'RK = P.
Eigen::MatrixXd terminal_cost(const LinearSystem& sys, const CostWeights& weights, const Eigen::MatrixXd& K_f);
double lyapunov_residual(const LinearSystem& sys, const CostWeights& weights, const Eigen::MatrixXd& K_f,
                         const Eigen::MatrixXd& P);

/// Tightenings induced by a fixed disturbance feedback, one support LP per (stage, row).
TighteningVector tightening_from_feedback(const LinearSystem& sys, const DisturbanceFeedback& M);
TighteningVector tmpc_tightening(const LinearSystem& sys, const Eigen::MatrixXd& K, int N);

struct SupportConstants {
  Eigen::VectorXd c_F;
  Eigen::VectorXd c_Y;
};
SupportConstants terminal_support_constants(const Polytope& X_T, const LinearSystem& sys,
                                            const Eigen::MatrixXd& K_f);

/**
 * @brief Maximal robust invariant set of x+ = (A + B K_f) x + E w, w in W,
 *        inside (F + G K_f) x <= b - t_tail. E = 0 gives the nominal set.
 */
Polytope design_terminal_set(const LinearSystem& sys, const Eigen::MatrixXd& K_f, const Eigen::VectorXd& t_tail,
                             const Eigen::MatrixXd& E, int max_iter = 200);
Polytope design_terminal_set(const LinearSystem& sys, const Eigen::MatrixXd& K_f, const Eigen::VectorXd& t_tail);

enum class Fallback { kNone, kCapByTmpc };
std::string to_string(Fallback f);
Fallback fallback_from_string(const std::string& s);

enum class TerminalImage {
  kTmpcTail,  // disturbance image (A+BK_f)^N Bw W, constraint tightened by the TMPC tail
  kNominal,   // disturbance image {0}, untightened constraint
};
std::string to_string(TerminalImage t);
TerminalImage terminal_image_from_string(const std::string& s);

struct TighteningOptions {
  Fallback fallback = Fallback::kCapByTmpc;
  Eigen::VectorXd weights;  // per stacked row of t (N n_c); empty = uniform
  SolverSettings solver{1e-9, 1e-9, 200};
};

struct TighteningSolution {
  DisturbanceFeedback M;
  TighteningVector t;
  ConicSolution socp;  // raw solver output (status, iterations, residuals)
  double objective = 0.0;
};

/**
 * @brief Minimizes ||t||_2 over the disturbance feedback subject to the dual
 *        tightening constraints, b - t >= 0 and the terminal conditions.
 *
 * `t_cap` (stacked N n_c) is enforced as t <= t_cap when fallback is
 * cap-by-tmpc. Returned t, Z, Lambda1, Lambda2 are recomputed from the optimal
 * feedback by support LPs so certificates are exact.
 */
TighteningSolution optimize_tightening(const LinearSystem& sys, int N, const TerminalIngredients& terminal,
                                       const Eigen::VectorXd& t_cap, const TighteningOptions& options = {});

struct DesignOptions {
  TighteningOptions tightening;
  TerminalImage terminal_image = TerminalImage::kTmpcTail;
  int max_retries = 5;
  double retry_scale = 0.9;
  int max_invariant_iter = 200;
};

struct OfflineDesign {
  int N = 0;
  Fallback fallback = Fallback::kCapByTmpc;
  TerminalIngredients terminal;
  DisturbanceFeedback M;
  TighteningVector t;
  TighteningVector t_tmpc;
  Polytope fpd_terminal_set;
  // solver statistics
  std::string socp_status;
  int socp_iterations = 0;
  double socp_objective = 0.0;
  int retries = 0;
  double z_scale = 1.0;
  double design_seconds = 0.0;
};

/// Offline phase: LQR terminal gain and cost, TMPC tightening, terminal sets,
/// optimized tightening (with z-scaling retries on infeasibility).
OfflineDesign design_offline(const LinearSystem& sys, const CostWeights& weights, int N,
                             const DesignOptions& options = {});

void to_json(nlohmann::json& j, const TighteningVector& t);
void from_json(const nlohmann::json& j, TighteningVector& t);
void to_json(nlohmann::json& j, const OfflineDesign& d);
void from_json(const nlohmann::json& j, OfflineDesign& d);

}  // namespace octmpc
