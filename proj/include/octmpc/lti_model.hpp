#pragma once

#include "octmpc/polytope.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <stdexcept>
#include <string>
#include <vector>

namespace octmpc {

class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/**
 * @brief x+ = A x + B u + Bw w with stage constraint F x + G u <= b and w in W.
 */
struct LinearSystem {
  Eigen::MatrixXd A, B, Bw;
  Eigen::MatrixXd F, G;
  Eigen::VectorXd b;
  Polytope W;

  int nx() const { return static_cast<int>(A.rows()); }
  int nu() const { return static_cast<int>(B.cols()); }
  int nw() const { return static_cast<int>(Bw.cols()); }
  int nc() const { return static_cast<int>(F.rows()); }

  Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& u, const Eigen::VectorXd& w) const {
    return A * x + B * u + Bw * w;
  }
  /// Largest value of F x + G u - b (<= 0 means satisfied).
  double constraint_violation(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
};

struct CostWeights {
  Eigen::MatrixXd Q, R;
};

/// Stage rows for |x_i| bounds and |u_j| bounds given as boxes.
void set_box_constraints(LinearSystem& sys, const Eigen::VectorXd& x_lower, const Eigen::VectorXd& x_upper,
                         const Eigen::VectorXd& u_lower, const Eigen::VectorXd& u_upper);

struct DiscreteMatrices {
  Eigen::MatrixXd A, B, Bw;
};

/// A = I + T Ac, B = T Bc, Bw = T Bwc.
DiscreteMatrices forward_euler_discretize(const Eigen::MatrixXd& Ac, const Eigen::MatrixXd& Bc,
                                          const Eigen::MatrixXd& Bwc, double T);

enum class Severity { kError, kWarning };

struct ValidationIssue {
  Severity severity;
  std::string code;  // "dimension", "disturbance-unbounded", "disturbance-origin", ...
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const;  // no errors (warnings allowed)
  bool has(const std::string& code) const;
};

ValidationReport validate(const LinearSystem& sys);
ValidationReport validate(const CostWeights& w, int nx, int nu);

void to_json(nlohmann::json& j, const LinearSystem& sys);
void from_json(const nlohmann::json& j, LinearSystem& sys);
void to_json(nlohmann::json& j, const CostWeights& w);
void from_json(const nlohmann::json& j, CostWeights& w);

}  // namespace octmpc
