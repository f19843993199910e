#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <random>
#include <stdexcept>
#include <vector>

namespace octmpc {

class PolytopeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyPolytopeError : public PolytopeError {
 public:
  using PolytopeError::PolytopeError;
};

class UnboundedDirectionError : public PolytopeError {
 public:
  using PolytopeError::PolytopeError;
};

/// Halfspace representation {x | A x <= b}. Rows are scaled to unit norm on
/// construction; rows with a zero normal and nonnegative offset are dropped.
class Polytope {
 public:
  Polytope() = default;
  Polytope(Eigen::MatrixXd normals, Eigen::VectorXd offsets);

  static Polytope box(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);
  /// {0} in R^dim, encoded as the degenerate box [0, 0]^dim.
  static Polytope origin(int dim);

  const Eigen::MatrixXd& normals() const { return A_; }
  const Eigen::VectorXd& offsets() const { return b_; }
  int dim() const { return static_cast<int>(A_.cols()); }
  int num_rows() const { return static_cast<int>(A_.rows()); }

  bool contains(const Eigen::VectorXd& x, double tol = 1e-9) const;
  bool is_bounded() const;
  bool is_empty() const;
  /// True when the set is {0} (support along every +-e_i vanishes).
  bool is_origin(double tol = 1e-10) const;

  Polytope intersect(const Polytope& other) const;
  /// Drops duplicate rows and rows implied by the others (one LP per row).
  Polytope remove_redundant(double tol = 1e-9) const;

  /// Center and radius of the largest inscribed ball.
  std::pair<Eigen::VectorXd, double> chebyshev_ball() const;

 private:
  Eigen::MatrixXd A_;
  Eigen::VectorXd b_;
};

struct SupportCertificate {
  double value = 0.0;
  Eigen::VectorXd multiplier;  // >= 0, multiplier' A = direction', multiplier' b = value
};

/// max { direction' x | x in p }
double support(const Polytope& p, const Eigen::VectorXd& direction);
SupportCertificate support_dual_certificate(const Polytope& p, const Eigen::VectorXd& direction);

/// Row-wise support of the image set: [max_{x in p} (M x)_i]_i
Eigen::VectorXd support_rows(const Polytope& p, const Eigen::MatrixXd& M);
std::vector<SupportCertificate> support_rows_certificates(const Polytope& p, const Eigen::MatrixXd& M);

/// Exact vertex set by enumeration of active-row combinations (dim <= 6).
std::vector<Eigen::VectorXd> vertices(const Polytope& p);

/// Hit-and-run samples of a bounded, full-dimensional polytope.
std::vector<Eigen::VectorXd> sample_points(const Polytope& p, int count, std::mt19937_64& rng);

class InvariantSetError : public PolytopeError {
 public:
  InvariantSetError(const std::string& what, Polytope last) : PolytopeError(what), last_iterate(std::move(last)) {}
  Polytope last_iterate;
};

double spectral_radius(const Eigen::MatrixXd& A);

/**
 * @brief Maximal robust positively invariant subset of `constraint` for
 *        x+ = A_cl x + delta, delta in `disturbance_image`.
 *
 * Accumulates rows H A^k x <= h - sum_{j<k} support(delta, (H A^j)') until the
 * newly generated rows are implied by the current iterate. Throws
 * InvariantSetError on an empty result or when max_iter is exhausted.
 */
Polytope max_admissible_invariant_set(const Eigen::MatrixXd& A_cl, const Polytope& constraint,
                                      const Polytope& disturbance_image, int max_iter = 200);

/// Same, with disturbance image E W given implicitly through W and the map E.
Polytope max_admissible_invariant_set(const Eigen::MatrixXd& A_cl, const Polytope& constraint, const Polytope& W,
                                      const Eigen::MatrixXd& E, int max_iter = 200);

void to_json(nlohmann::json& j, const Polytope& p);
void from_json(const nlohmann::json& j, Polytope& p);

}  // namespace octmpc
