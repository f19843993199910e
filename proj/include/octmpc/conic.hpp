#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <stdexcept>
#include <string>
#include <vector>

namespace octmpc {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Triplet = Eigen::Triplet<double, int>;

/// Raised when a problem description violates its structural invariants.
class ProblemError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/**
 * @brief Problem description shared by LPs, convex QPs and SOCPs.
 *
 *   minimize    0.5 x' H x + c' x
 *   subject to  A_eq x  = b_eq
 *               A_in x <= b_in
 *               x[k] >= 0                       for k in nonneg
 *               x[i0] >= || x[i1], ..., x[im] || for each cone (i0, ..., im)
 */
struct ConicProblem {
  int num_vars = 0;
  Eigen::VectorXd cost;
  SparseMatrix quadratic;  // empty (0x0) when the objective is linear
  SparseMatrix eq_matrix;
  Eigen::VectorXd eq_rhs;
  SparseMatrix ineq_matrix;
  Eigen::VectorXd ineq_rhs;
  std::vector<std::vector<int>> cones;
  std::vector<int> nonneg;

  explicit ConicProblem(int n = 0);

  bool has_quadratic() const { return quadratic.nonZeros() > 0; }
  bool is_lp() const { return !has_quadratic() && cones.empty(); }

  /// Throws ProblemError describing the first violated invariant.
  void validate() const;
};

enum class SolveStatus { kOptimal, kInfeasible, kUnbounded, kNumericalFailure };

std::string to_string(SolveStatus status);

struct ConicSolution {
  SolveStatus status = SolveStatus::kNumericalFailure;
  Eigen::VectorXd primal;
  Eigen::VectorXd ineq_dual;  // multipliers of the A_in rows, >= 0
  Eigen::VectorXd eq_dual;
  double objective = 0.0;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  bool reduced_accuracy = false;  // status taken from a stalled iterate at looser tolerances

  bool optimal() const { return status == SolveStatus::kOptimal; }
};

struct SolverSettings {
  double feasibility_tol = 1e-8;
  double gap_tol = 1e-8;  // absolute and relative duality gap
  int max_iterations = 100;
};

ConicSolution solve(const ConicProblem& problem, const SolverSettings& settings = {});

/// Solves independent LPs; order of the results matches the input.
std::vector<ConicSolution> solve_lp_batch(const std::vector<ConicProblem>& problems,
                                          const SolverSettings& settings = {},
                                          int jobs = 1);

}  // namespace octmpc
