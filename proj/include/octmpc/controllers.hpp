#pragma once

#include "octmpc/conic.hpp"
#include "octmpc/lti_model.hpp"
#include "octmpc/offline_design.hpp"
#include "octmpc/polytope.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace octmpc {

enum class ControllerKind { kOct, kTmpc, kFpd, kNominal };
std::string to_string(ControllerKind k);
ControllerKind controller_kind_from_string(const std::string& s);

class ControllerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Nominal plan: x is nx x (N+1) with x.col(0) the measured state, u is nu x N.
struct MpcPlan {
  Eigen::MatrixXd x;
  Eigen::MatrixXd u;
};

struct ControlDecision {
  bool feasible = false;
  SolveStatus status = SolveStatus::kInfeasible;
  Eigen::VectorXd u;  // first planned input, empty when infeasible
  MpcPlan plan;
  double objective = 0.0;  // full nominal cost including x_0' Q x_0
  double solve_seconds = 0.0;
  int iterations = 0;
  bool reduced_accuracy = false;
};

struct ProblemSize {
  int variables = 0;
  int equalities = 0;
  int inequalities = 0;  // includes sign constraints on dual multipliers
  int constraints() const { return equalities + inequalities; }
};

/**
 * @brief Receding-horizon controller over a fixed QP template.
 *
 * Variables are [u_0..u_{N-1}, x_1..x_N, extras]; x_0 is substituted by the
 * measurement so only the right-hand sides depend on it. Immutable after
 * construction, step() may be called concurrently.
 */
class MpcController {
 public:
  ControllerKind kind() const { return kind_; }
  std::string name() const { return to_string(kind_); }
  int horizon() const { return N_; }
  int nx() const { return nx_; }
  int nu() const { return nu_; }
  ProblemSize size() const;

  /// QP instance for measurement x; `margin` is subtracted from every inequality bound.
  ConicProblem problem(const Eigen::VectorXd& x, double margin = 0.0) const;

  /// Solves the online problem. Infeasibility is reported in the decision;
  /// a numerical failure throws ControllerError.
  ControlDecision step(const Eigen::VectorXd& x, double margin = 0.0) const;

  /// Largest violation of the problem at x by a nominal plan (extras set to
  /// zero, so only meaningful for controllers without extra variables).
  double plan_violation(const Eigen::VectorXd& x, const MpcPlan& plan) const;

  /// Nominal cost of a plan, stage terms plus terminal cost.
  double plan_cost(const MpcPlan& plan) const;

  const SolverSettings& settings() const { return settings_; }
  void set_settings(const SolverSettings& s) { settings_ = s; }

 private:
  friend MpcController make_tightened_mpc(ControllerKind, const LinearSystem&, const CostWeights&, int,
                                          const Eigen::VectorXd&, const Eigen::MatrixXd&, const Polytope&);
  friend MpcController make_fpd_mpc(const LinearSystem&, const CostWeights&, int, const Eigen::MatrixXd&,
                                    const Polytope&);

  MpcController() = default;
  void load(int n, SparseMatrix H, SparseMatrix Aeq, Eigen::VectorXd beq, Eigen::MatrixXd beq_x, SparseMatrix Ain,
            Eigen::VectorXd bin, Eigen::MatrixXd bin_x, std::vector<int> nonneg);
  Eigen::VectorXd pack(const MpcPlan& plan) const;
  double constant_cost(const Eigen::VectorXd& x) const;

  ControllerKind kind_ = ControllerKind::kOct;
  int N_ = 0, nx_ = 0, nu_ = 0;
  Eigen::MatrixXd Q_, R_, P_;
  ConicProblem qp_;
  Eigen::VectorXd eq_rhs0_, in_rhs0_;
  Eigen::MatrixXd eq_rhs_x_, in_rhs_x_;  // rhs = rhs0 + rhs_x * x
  std::vector<int> empty_rows_;          // inequality rows with no variables
  SolverSettings settings_{1e-9, 1e-9, 100};
};

/// Nominal-cost MPC with stage rows F x_i + G u_i <= b - t_i (t stacked, N n_c) and Y x_N <= z.
MpcController make_tightened_mpc(ControllerKind kind, const LinearSystem& sys, const CostWeights& weights, int N,
                                 const Eigen::VectorXd& t, const Eigen::MatrixXd& P, const Polytope& terminal);

/// Online disturbance-affine feedback with per-entry gains; every stage row and
/// the terminal set are enforced robustly through dual multipliers.
MpcController make_fpd_mpc(const LinearSystem& sys, const CostWeights& weights, int N, const Eigen::MatrixXd& P,
                           const Polytope& terminal);

/// Controllers from an offline design. The nominal controller uses the
/// nominal invariant set of the terminal gain in the untightened constraints.
MpcController make_controller(ControllerKind kind, const LinearSystem& sys, const CostWeights& weights,
                              const OfflineDesign& design);

/// Shifted candidate for the next step after disturbance w: tail of the
/// optimal plan plus the offline feedback response, closed by the terminal gain.
MpcPlan shift_candidate(const LinearSystem& sys, const OfflineDesign& design, const MpcPlan& plan,
                        const Eigen::VectorXd& w);

}  // namespace octmpc
