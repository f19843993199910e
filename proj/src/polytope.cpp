#include "octmpc/polytope.hpp"

#include "octmpc/conic.hpp"
#include "octmpc/json_eigen.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace octmpc {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kZeroNormal = 1e-12;

const SolverSettings kSupportSettings{1e-11, 1e-11, 100};

ConicSolution solve_support_lp(const MatrixXd& A, const VectorXd& b, const VectorXd& direction) {
  ConicProblem lp(static_cast<int>(A.cols()));
  lp.cost = -direction;
  lp.ineq_matrix = A.sparseView();
  lp.ineq_rhs = b;
  return solve(lp, kSupportSettings);
}

SupportCertificate support_impl(const MatrixXd& A, const VectorXd& b, const VectorXd& direction) {
  if (direction.size() != A.cols()) throw PolytopeError("support: direction has wrong dimension");
  const ConicSolution sol = solve_support_lp(A, b, direction);
  switch (sol.status) {
    case SolveStatus::kOptimal:
      return {-sol.objective, sol.ineq_dual};
    case SolveStatus::kInfeasible:
      throw EmptyPolytopeError("support: polytope is empty");
    case SolveStatus::kUnbounded:
      throw UnboundedDirectionError("support: polytope is unbounded along the direction");
    default:
      throw PolytopeError("support: LP solver failed (" + to_string(sol.status) + ")");
  }
}

}  // namespace

Polytope::Polytope(MatrixXd normals, VectorXd offsets) {
  if (normals.rows() != offsets.size()) throw PolytopeError("polytope: row count of A != length of b");
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < normals.rows(); ++i) {
    const double nrm = normals.row(i).norm();
    if (nrm > kZeroNormal) {
      // already-unit rows are left untouched so serialization round-trips exactly
      if (std::abs(nrm - 1.0) > 8.0 * std::numeric_limits<double>::epsilon()) {
        normals.row(i) /= nrm;
        offsets[i] /= nrm;
      }
      keep.push_back(i);
    } else if (offsets[i] < 0.0) {
      keep.push_back(i);  // 0 <= negative: infeasible marker
    }
  }
  A_.resize(static_cast<Eigen::Index>(keep.size()), normals.cols());
  b_.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    A_.row(static_cast<Eigen::Index>(k)) = normals.row(keep[k]);
    b_[static_cast<Eigen::Index>(k)] = offsets[keep[k]];
  }
}

Polytope Polytope::box(const VectorXd& lower, const VectorXd& upper) {
  if (lower.size() != upper.size()) throw PolytopeError("box: bound dimensions differ");
  const Eigen::Index n = lower.size();
  MatrixXd A(2 * n, n);
  A << MatrixXd::Identity(n, n), -MatrixXd::Identity(n, n);
  VectorXd b(2 * n);
  b << upper, -lower;
  return Polytope(A, b);
}

Polytope Polytope::origin(int dim) { return box(VectorXd::Zero(dim), VectorXd::Zero(dim)); }

bool Polytope::contains(const VectorXd& x, double tol) const {
  if (num_rows() == 0) return true;
  return ((A_ * x - b_).array() <= tol).all();
}

bool Polytope::is_bounded() const {
  for (int i = 0; i < dim(); ++i) {
    for (double sign : {1.0, -1.0}) {
      const ConicSolution sol = solve_support_lp(A_, b_, sign * VectorXd::Unit(dim(), i));
      if (sol.status == SolveStatus::kUnbounded) return false;
      if (sol.status == SolveStatus::kInfeasible) return true;
    }
  }
  return true;
}

bool Polytope::is_empty() const {
  if (num_rows() == 0) return false;
  return solve_support_lp(A_, b_, VectorXd::Zero(dim())).status == SolveStatus::kInfeasible;
}

bool Polytope::is_origin(double tol) const {
  for (int i = 0; i < dim(); ++i) {
    for (double sign : {1.0, -1.0}) {
      const ConicSolution sol = solve_support_lp(A_, b_, sign * VectorXd::Unit(dim(), i));
      if (!sol.optimal() || std::abs(sol.objective) > tol) return false;
    }
  }
  return true;
}

Polytope Polytope::intersect(const Polytope& other) const {
  if (other.dim() != dim()) throw PolytopeError("intersect: dimension mismatch");
  MatrixXd A(num_rows() + other.num_rows(), dim());
  VectorXd b(A.rows());
  A << A_, other.A_;
  b << b_, other.b_;
  return Polytope(A, b);
}

Polytope Polytope::remove_redundant(double tol) const {
  const int m = num_rows();
  std::vector<char> keep(m, 1);
  // identical normals: keep the tightest
  for (int i = 0; i < m; ++i) {
    if (!keep[i]) continue;
    for (int j = i + 1; j < m; ++j) {
      if (keep[j] && (A_.row(i) - A_.row(j)).norm() < 1e-12) {
        if (b_[j] < b_[i]) {
          keep[i] = 0;
          break;
        }
        keep[j] = 0;
      }
    }
  }
  for (int i = 0; i < m; ++i) {
    if (!keep[i]) continue;
    std::vector<int> rows;
    for (int j = 0; j < m; ++j) {
      if (keep[j]) rows.push_back(j);
    }
    MatrixXd A(rows.size(), dim());
    VectorXd b(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      A.row(static_cast<Eigen::Index>(k)) = A_.row(rows[k]);
      b[static_cast<Eigen::Index>(k)] = rows[k] == i ? b_[i] + 1.0 : b_[rows[k]];
    }
    const ConicSolution sol = solve_support_lp(A, b, A_.row(i).transpose());
    if (sol.status == SolveStatus::kInfeasible) throw EmptyPolytopeError("remove_redundant: polytope is empty");
    if (sol.optimal() && -sol.objective <= b_[i] + tol * std::max(1.0, std::abs(b_[i]))) keep[i] = 0;
  }
  std::vector<int> rows;
  for (int j = 0; j < m; ++j) {
    if (keep[j]) rows.push_back(j);
  }
  MatrixXd A(rows.size(), dim());
  VectorXd b(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    A.row(static_cast<Eigen::Index>(k)) = A_.row(rows[k]);
    b[static_cast<Eigen::Index>(k)] = b_[rows[k]];
  }
  Polytope out;
  out.A_ = std::move(A);
  out.b_ = std::move(b);
  return out;
}

std::pair<VectorXd, double> Polytope::chebyshev_ball() const {
  const int n = dim(), m = num_rows();
  // variables (x, r): max r s.t. a_i'x + r <= b_i (unit normals), 0 <= r <= 1e6
  ConicProblem lp(n + 1);
  lp.cost[n] = -1.0;
  MatrixXd G(m + 1, n + 1);
  G.setZero();
  G.topLeftCorner(m, n) = A_;
  for (int i = 0; i < m; ++i) G(i, n) = A_.row(i).norm() > 0.0 ? 1.0 : 0.0;
  G(m, n) = 1.0;
  VectorXd h(m + 1);
  h << b_, 1e6;
  lp.ineq_matrix = G.sparseView();
  lp.ineq_rhs = h;
  lp.nonneg = {n};
  const ConicSolution sol = solve(lp);
  if (sol.status == SolveStatus::kInfeasible) throw EmptyPolytopeError("chebyshev_ball: polytope is empty");
  if (!sol.optimal()) throw PolytopeError("chebyshev_ball: LP solver failed");
  return {sol.primal.head(n), sol.primal[n]};
}

double support(const Polytope& p, const VectorXd& direction) {
  return support_impl(p.normals(), p.offsets(), direction).value;
}

SupportCertificate support_dual_certificate(const Polytope& p, const VectorXd& direction) {
  SupportCertificate cert = support_impl(p.normals(), p.offsets(), direction);
  cert.multiplier = cert.multiplier.cwiseMax(0.0);
  return cert;
}

std::vector<SupportCertificate> support_rows_certificates(const Polytope& p, const MatrixXd& M) {
  if (M.cols() != p.dim()) throw PolytopeError("support_rows: dimension mismatch");
  std::vector<ConicProblem> lps;
  lps.reserve(static_cast<std::size_t>(M.rows()));
  const SparseMatrix A = p.normals().sparseView();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    ConicProblem lp(p.dim());
    lp.cost = -M.row(i).transpose();
    lp.ineq_matrix = A;
    lp.ineq_rhs = p.offsets();
    lps.push_back(std::move(lp));
  }
  const auto sols = solve_lp_batch(lps, kSupportSettings);
  std::vector<SupportCertificate> out;
  out.reserve(sols.size());
  for (const auto& sol : sols) {
    if (sol.status == SolveStatus::kInfeasible) throw EmptyPolytopeError("support: polytope is empty");
    if (sol.status == SolveStatus::kUnbounded) throw UnboundedDirectionError("support: unbounded direction");
    if (!sol.optimal()) throw PolytopeError("support: LP solver failed");
    out.push_back({-sol.objective, sol.ineq_dual.cwiseMax(0.0)});
  }
  return out;
}

VectorXd support_rows(const Polytope& p, const MatrixXd& M) {
  const auto certs = support_rows_certificates(p, M);
  VectorXd out(M.rows());
  for (Eigen::Index i = 0; i < M.rows(); ++i) out[i] = certs[static_cast<std::size_t>(i)].value;
  return out;
}

std::vector<VectorXd> vertices(const Polytope& p) {
  const int n = p.dim(), m = p.num_rows();
  if (n > 6) throw PolytopeError("vertices: enumeration refused for dimension > 6");
  if (n == 0) return {};
  const MatrixXd& A = p.normals();
  const VectorXd& b = p.offsets();
  std::vector<VectorXd> out;
  std::vector<int> idx(n);
  std::function<void(int, int)> rec = [&](int start, int depth) {
    if (depth == n) {
      MatrixXd As(n, n);
      VectorXd bs(n);
      for (int k = 0; k < n; ++k) {
        As.row(k) = A.row(idx[k]);
        bs[k] = b[idx[k]];
      }
      Eigen::FullPivLU<MatrixXd> lu(As);
      if (lu.rank() < n) return;
      const VectorXd x = lu.solve(bs);
      if (!p.contains(x, 1e-9 * std::max(1.0, x.lpNorm<Eigen::Infinity>()))) return;
      for (const auto& v : out) {
        if ((v - x).lpNorm<Eigen::Infinity>() <= 1e-9 * std::max(1.0, x.lpNorm<Eigen::Infinity>())) return;
      }
      out.push_back(x);
      return;
    }
    for (int i = start; i <= m - (n - depth); ++i) {
      idx[depth] = i;
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
  return out;
}

std::vector<VectorXd> sample_points(const Polytope& p, int count, std::mt19937_64& rng) {
  auto [x, radius] = p.chebyshev_ball();
  if (radius <= 0.0) throw PolytopeError("sample_points: polytope has empty interior");
  const MatrixXd& A = p.normals();
  const VectorXd& b = p.offsets();
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr int kBurnIn = 50, kThin = 5;
  std::vector<VectorXd> out;
  for (int step = 0; static_cast<int>(out.size()) < count; ++step) {
    VectorXd d(p.dim());
    for (int i = 0; i < p.dim(); ++i) d[i] = gauss(rng);
    d.normalize();
    double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
    const VectorXd slack = b - A * x;
    const VectorXd ad = A * d;
    for (int i = 0; i < A.rows(); ++i) {
      if (ad[i] > 1e-14) hi = std::min(hi, slack[i] / ad[i]);
      if (ad[i] < -1e-14) lo = std::max(lo, slack[i] / ad[i]);
    }
    if (!std::isfinite(lo) || !std::isfinite(hi)) throw PolytopeError("sample_points: polytope is unbounded");
    x += (lo + (hi - lo) * unit(rng)) * d;
    if (step >= kBurnIn && (step - kBurnIn) % kThin == 0) out.push_back(x);
  }
  return out;
}

double spectral_radius(const MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  return Eigen::EigenSolver<MatrixXd>(A, false).eigenvalues().cwiseAbs().maxCoeff();
}

Polytope max_admissible_invariant_set(const MatrixXd& A_cl, const Polytope& constraint,
                                      const Polytope& disturbance_image, int max_iter) {
  return max_admissible_invariant_set(A_cl, constraint, disturbance_image,
                                      MatrixXd::Identity(constraint.dim(), constraint.dim()), max_iter);
}

Polytope max_admissible_invariant_set(const MatrixXd& A_cl, const Polytope& constraint, const Polytope& W,
                                      const MatrixXd& E, int max_iter) {
  const int n = constraint.dim();
  if (A_cl.rows() != n || A_cl.cols() != n || E.rows() != n || E.cols() != W.dim()) {
    throw PolytopeError("max_admissible_invariant_set: dimension mismatch");
  }
  if (spectral_radius(A_cl) >= 1.0) throw PolytopeError("max_admissible_invariant_set: A_cl is not Schur stable");
  if (!constraint.is_bounded()) throw PolytopeError("max_admissible_invariant_set: constraint set is unbounded");
  const bool nominal = E.isZero(0.0) || W.is_origin();

  const MatrixXd& H = constraint.normals();
  const VectorXd& h = constraint.offsets();
  MatrixXd HA = H;         // H A^k
  VectorXd rhs = h;        // h - sum_{j<k} support(delta, (H A^j)')
  MatrixXd rows = H;
  VectorXd offs = h;
  for (int k = 1; k <= max_iter; ++k) {
    if (!nominal) rhs -= support_rows(W, HA * E);
    HA = HA * A_cl;
    const Polytope current(rows, offs);
    std::vector<Eigen::Index> fresh;
    for (Eigen::Index i = 0; i < HA.rows(); ++i) {
      const double nrm = HA.row(i).norm();
      if (nrm <= kZeroNormal) {
        if (rhs[i] < -1e-9) throw InvariantSetError("max_admissible_invariant_set: set is empty", current);
        continue;
      }
      double value = 0.0;
      try {
        value = support(current, HA.row(i).transpose());
      } catch (const EmptyPolytopeError&) {
        throw InvariantSetError("max_admissible_invariant_set: set is empty", current);
      }
      if (value > rhs[i] + 1e-9 * std::max(1.0, std::abs(rhs[i]))) fresh.push_back(i);
    }
    if (fresh.empty()) {
      const Polytope result = current.remove_redundant();
      if (result.is_empty()) throw InvariantSetError("max_admissible_invariant_set: set is empty", result);
      return result;
    }
    const Eigen::Index old = rows.rows();
    rows.conservativeResize(old + static_cast<Eigen::Index>(fresh.size()), Eigen::NoChange);
    offs.conservativeResize(rows.rows());
    for (std::size_t q = 0; q < fresh.size(); ++q) {
      rows.row(old + static_cast<Eigen::Index>(q)) = HA.row(fresh[q]);
      offs[old + static_cast<Eigen::Index>(q)] = rhs[fresh[q]];
    }
    if (Polytope(rows, offs).is_empty()) {
      throw InvariantSetError("max_admissible_invariant_set: set is empty", Polytope(rows, offs));
    }
  }
  throw InvariantSetError("max_admissible_invariant_set: no convergence within max_iter", Polytope(rows, offs));
}

void to_json(nlohmann::json& j, const Polytope& p) {
  j = nlohmann::json{{"A", matrix_to_json(p.normals())}, {"b", vector_to_json(p.offsets())}};
}

void from_json(const nlohmann::json& j, Polytope& p) {
  const Eigen::VectorXd b = vector_from_json(j.at("b"));
  p = Polytope(matrix_from_json(j.at("A")), b);
}

}  // namespace octmpc
