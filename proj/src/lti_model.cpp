#include "octmpc/lti_model.hpp"

#include "octmpc/json_eigen.hpp"

#include <Eigen/Eigenvalues>

#include <limits>
#include <sstream>

namespace octmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double LinearSystem::constraint_violation(const VectorXd& x, const VectorXd& u) const {
  if (nc() == 0) return -std::numeric_limits<double>::infinity();
  return (F * x + G * u - b).maxCoeff();
}

void set_box_constraints(LinearSystem& sys, const VectorXd& x_lower, const VectorXd& x_upper, const VectorXd& u_lower,
                         const VectorXd& u_upper) {
  const Eigen::Index nx = x_lower.size(), nu = u_lower.size();
  if (x_upper.size() != nx || u_upper.size() != nu) throw ModelError("box bounds have inconsistent sizes");
  sys.F = MatrixXd::Zero(2 * (nx + nu), nx);
  sys.G = MatrixXd::Zero(2 * (nx + nu), nu);
  sys.b.resize(2 * (nx + nu));
  sys.F.topRows(nx) = MatrixXd::Identity(nx, nx);
  sys.F.middleRows(nx, nx) = -MatrixXd::Identity(nx, nx);
  sys.G.middleRows(2 * nx, nu) = MatrixXd::Identity(nu, nu);
  sys.G.bottomRows(nu) = -MatrixXd::Identity(nu, nu);
  sys.b << x_upper, -x_lower, u_upper, -u_lower;
}

DiscreteMatrices forward_euler_discretize(const MatrixXd& Ac, const MatrixXd& Bc, const MatrixXd& Bwc, double T) {
  if (!(T > 0.0)) throw ModelError("sampling time must be positive");
  if (Ac.rows() != Ac.cols()) throw ModelError("continuous A must be square");
  if (Bc.rows() != Ac.rows() || Bwc.rows() != Ac.rows()) throw ModelError("continuous B/Bw row count differs from A");
  return {MatrixXd::Identity(Ac.rows(), Ac.cols()) + T * Ac, T * Bc, T * Bwc};
}

bool ValidationReport::ok() const {
  for (const auto& i : issues) {
    if (i.severity == Severity::kError) return false;
  }
  return true;
}

bool ValidationReport::has(const std::string& code) const {
  for (const auto& i : issues) {
    if (i.code == code) return true;
  }
  return false;
}

namespace {

std::string shape(const MatrixXd& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

bool symmetric(const MatrixXd& m) { return m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-10; }

}  // namespace

ValidationReport validate(const LinearSystem& sys) {
  ValidationReport rep;
  auto error = [&](const std::string& code, const std::string& msg) {
    rep.issues.push_back({Severity::kError, code, msg});
  };
  const auto nx = sys.A.rows();
  if (sys.A.cols() != nx) error("dimension", "A must be square, got " + shape(sys.A));
  if (sys.B.rows() != nx) error("dimension", "B must have " + std::to_string(nx) + " rows, got " + shape(sys.B));
  if (sys.Bw.rows() != nx) error("dimension", "Bw must have " + std::to_string(nx) + " rows, got " + shape(sys.Bw));
  if (sys.F.cols() != nx) error("dimension", "F must have " + std::to_string(nx) + " columns, got " + shape(sys.F));
  if (sys.G.cols() != sys.B.cols()) error("dimension", "G column count differs from B: " + shape(sys.G));
  if (sys.F.rows() != sys.G.rows() || sys.F.rows() != sys.b.size()) {
    error("dimension", "F, G, b row counts differ");
  }
  if (sys.W.dim() != sys.Bw.cols()) error("dimension", "W dimension differs from Bw column count");
  if (!rep.ok()) return rep;

  if (sys.W.num_rows() == 0 || !sys.W.is_bounded()) error("disturbance-unbounded", "W is unbounded");
  if (sys.W.num_rows() > 0 && !sys.W.contains(VectorXd::Zero(sys.W.dim()), 0.0)) {
    error("disturbance-origin", "0 is not in W");
  }
  if (sys.nc() > 0 && !(sys.b.array() > 0.0).all()) {
    rep.issues.push_back({Severity::kWarning, "origin-infeasible", "(x, u) = (0, 0) does not strictly satisfy F x + G u <= b"});
  }
  return rep;
}

ValidationReport validate(const CostWeights& w, int nx, int nu) {
  ValidationReport rep;
  auto error = [&](const std::string& code, const std::string& msg) {
    rep.issues.push_back({Severity::kError, code, msg});
  };
  if (w.Q.rows() != nx || w.Q.cols() != nx) error("dimension", "Q must be " + std::to_string(nx) + "x" + std::to_string(nx));
  if (w.R.rows() != nu || w.R.cols() != nu) error("dimension", "R must be " + std::to_string(nu) + "x" + std::to_string(nu));
  if (!rep.ok()) return rep;
  if (!symmetric(w.Q)) error("weights", "Q is not symmetric");
  if (!symmetric(w.R)) error("weights", "R is not symmetric");
  if (!rep.ok()) return rep;
  const double q_min = nx ? Eigen::SelfAdjointEigenSolver<MatrixXd>(w.Q).eigenvalues().minCoeff() : 0.0;
  const double r_min = nu ? Eigen::SelfAdjointEigenSolver<MatrixXd>(w.R).eigenvalues().minCoeff() : 1.0;
  if (q_min < -1e-10) error("weights", "Q is not positive semidefinite");
  if (r_min <= 1e-12) error("weights", "R is not positive definite");
  return rep;
}

void to_json(nlohmann::json& j, const LinearSystem& sys) {
  j = {{"A", matrix_to_json(sys.A)},
       {"B", matrix_to_json(sys.B)},
       {"Bw", matrix_to_json(sys.Bw)},
       {"F", matrix_to_json(sys.F)},
       {"G", matrix_to_json(sys.G)},
       {"b", vector_to_json(sys.b)},
       {"W", sys.W}};
}

void from_json(const nlohmann::json& j, LinearSystem& sys) {
  sys.A = matrix_from_json(j.at("A"));
  sys.B = matrix_from_json(j.at("B"));
  sys.Bw = matrix_from_json(j.at("Bw"));
  sys.F = matrix_from_json(j.at("F"), sys.A.rows());
  sys.G = matrix_from_json(j.at("G"), sys.B.cols());
  sys.b = vector_from_json(j.at("b"));
  sys.W = j.at("W").get<Polytope>();
}

void to_json(nlohmann::json& j, const CostWeights& w) { j = {{"Q", matrix_to_json(w.Q)}, {"R", matrix_to_json(w.R)}}; }

void from_json(const nlohmann::json& j, CostWeights& w) {
  w.Q = matrix_from_json(j.at("Q"));
  w.R = matrix_from_json(j.at("R"));
}

}  // namespace octmpc
