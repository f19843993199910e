#include "octmpc/conic.hpp"

#include <Eigen/OrderingMethods>
#include <Eigen/SparseLU>
#include <Eigen/SparseQR>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

// Homogeneous self-dual interior-point method for
//
//   minimize c'x  s.t.  A x = b,  G x + s = h,  s in K
//
// with K a product of a nonnegative orthant and second-order cones. Search
// directions use Nesterov-Todd scaling and a Mehrotra predictor-corrector;
// the quasi-definite KKT system is factored with a sparse LDL' and refined
// iteratively. Quadratic objectives are lifted into one epigraph cone per
// connected block of the Hessian.

namespace octmpc {

namespace {

using Eigen::VectorXd;

constexpr double kStepFraction = 0.99;
constexpr double kStaticReg = 1e-9;
constexpr double kSigmaMin = 1e-4;
constexpr double kInaccurateTol = 5e-5;
constexpr int kRefineSteps = 10;

// ---------------------------------------------------------------------------
// Cone algebra

struct SocScaling {
  double eta = 1.0;
  VectorXd wbar;
};

struct Scaling {
  VectorXd lp_w;
  std::vector<SocScaling> soc;
};

class ConeSet {
 public:
  ConeSet(int lp_dim, std::vector<int> soc_dims) : lp_dim_(lp_dim), soc_dims_(std::move(soc_dims)) {
    int offset = lp_dim_;
    for (int d : soc_dims_) {
      soc_offsets_.push_back(offset);
      offset += d;
    }
    dim_ = offset;
  }

  int dim() const { return dim_; }
  int lp_dim() const { return lp_dim_; }
  int num_soc() const { return static_cast<int>(soc_dims_.size()); }
  int soc_dim(int k) const { return soc_dims_[k]; }
  int soc_offset(int k) const { return soc_offsets_[k]; }
  double degree() const { return lp_dim_ + static_cast<double>(soc_dims_.size()); }

  VectorXd identity() const {
    VectorXd e = VectorXd::Zero(dim_);
    e.head(lp_dim_).setOnes();
    for (int k = 0; k < num_soc(); ++k) e[soc_offsets_[k]] = 1.0;
    return e;
  }

  // Smallest "eigenvalue" of v with respect to the cone.
  double min_eig(const VectorXd& v) const {
    double m = std::numeric_limits<double>::infinity();
    if (lp_dim_ > 0) m = v.head(lp_dim_).minCoeff();
    for (int k = 0; k < num_soc(); ++k) {
      const int o = soc_offsets_[k], d = soc_dims_[k];
      m = std::min(m, v[o] - v.segment(o + 1, d - 1).norm());
    }
    return m;
  }

  void shift_into_interior(VectorXd& v) const {
    const double alpha = -min_eig(v);
    if (alpha >= 0.0) v += (1.0 + alpha) * identity();
  }

  // Largest step a with v + a*dv in the cone (infinity when unbounded).
  double max_step(const VectorXd& v, const VectorXd& dv) const {
    double amax = std::numeric_limits<double>::infinity();
    for (int i = 0; i < lp_dim_; ++i) {
      if (dv[i] < 0.0) amax = std::min(amax, -v[i] / dv[i]);
    }
    for (int k = 0; k < num_soc(); ++k) {
      const int o = soc_offsets_[k], d = soc_dims_[k];
      amax = std::min(amax, soc_max_step(v.segment(o, d), dv.segment(o, d)));
    }
    return amax;
  }

  // u o v
  VectorXd jordan(const VectorXd& u, const VectorXd& v) const {
    VectorXd out(dim_);
    out.head(lp_dim_) = u.head(lp_dim_).cwiseProduct(v.head(lp_dim_));
    for (int k = 0; k < num_soc(); ++k) {
      const int o = soc_offsets_[k], d = soc_dims_[k];
      out[o] = u.segment(o, d).dot(v.segment(o, d));
      out.segment(o + 1, d - 1) = u[o] * v.segment(o + 1, d - 1) + v[o] * u.segment(o + 1, d - 1);
    }
    return out;
  }

  // x such that lambda o x = v
  VectorXd jordan_inverse(const VectorXd& lambda, const VectorXd& v) const {
    VectorXd out(dim_);
    out.head(lp_dim_) = v.head(lp_dim_).cwiseQuotient(lambda.head(lp_dim_));
    for (int k = 0; k < num_soc(); ++k) {
      const int o = soc_offsets_[k], d = soc_dims_[k];
      const double l0 = lambda[o];
      const auto l1 = lambda.segment(o + 1, d - 1);
      const double det = soc_residual(lambda.segment(o, d));
      const double x0 = (l0 * v[o] - l1.dot(v.segment(o + 1, d - 1))) / det;
      out[o] = x0;
      out.segment(o + 1, d - 1) = (v.segment(o + 1, d - 1) - x0 * l1) / l0;
    }
    return out;
  }

  // Nesterov-Todd scaling W with W z = W^{-1} s = lambda.
  Scaling nt_scaling(const VectorXd& s, const VectorXd& z, VectorXd& lambda) const {
    Scaling w;
    w.lp_w = (s.head(lp_dim_).cwiseQuotient(z.head(lp_dim_))).cwiseSqrt();
    w.soc.resize(soc_dims_.size());
    for (int k = 0; k < num_soc(); ++k) {
      const int o = soc_offsets_[k], d = soc_dims_[k];
      const VectorXd sk = s.segment(o, d), zk = z.segment(o, d);
      const double sres = soc_residual(sk), zres = soc_residual(zk);
      const VectorXd sbar = sk / std::sqrt(sres);
      const VectorXd zbar = zk / std::sqrt(zres);
      const double gamma = std::sqrt((1.0 + sbar.dot(zbar)) / 2.0);
      VectorXd wbar = sbar;
      wbar[0] += zbar[0];
      wbar.tail(d - 1) -= zbar.tail(d - 1);
      wbar /= 2.0 * gamma;
      w.soc[k].eta = std::pow(sres / zres, 0.25);
      w.soc[k].wbar = std::move(wbar);
    }
    lambda = apply_w(w, z, false);
    return w;
  }

  Scaling identity_scaling() const {
    Scaling w;
    w.lp_w = VectorXd::Ones(lp_dim_);
    w.soc.resize(soc_dims_.size());
    for (int k = 0; k < num_soc(); ++k) {
      w.soc[k].wbar = VectorXd::Zero(soc_dims_[k]);
      w.soc[k].wbar[0] = 1.0;
    }
    return w;
  }

  // W v, or W^{-1} v when inverse is set.
  VectorXd apply_w(const Scaling& w, const VectorXd& v, bool inverse) const {
    VectorXd out(dim_);
    if (inverse) {
      out.head(lp_dim_) = v.head(lp_dim_).cwiseQuotient(w.lp_w);
    } else {
      out.head(lp_dim_) = v.head(lp_dim_).cwiseProduct(w.lp_w);
    }
    for (int k = 0; k < num_soc(); ++k) {
      const int o = soc_offsets_[k], d = soc_dims_[k];
      const auto& sc = w.soc[k];
      const double w0 = sc.wbar[0];
      const auto w1 = sc.wbar.tail(d - 1);
      const double v0 = v[o];
      const auto v1 = v.segment(o + 1, d - 1);
      const double w1v1 = w1.dot(v1);
      if (inverse) {
        out[o] = (w0 * v0 - w1v1) / sc.eta;
        out.segment(o + 1, d - 1) = (v1 - v0 * w1 + (w1v1 / (1.0 + w0)) * w1) / sc.eta;
      } else {
        out[o] = sc.eta * (w0 * v0 + w1v1);
        out.segment(o + 1, d - 1) = sc.eta * (v1 + v0 * w1 + (w1v1 / (1.0 + w0)) * w1);
      }
    }
    return out;
  }

  // W'W v
  VectorXd apply_w2(const Scaling& w, const VectorXd& v) const { return apply_w(w, apply_w(w, v, false), false); }

 private:
  static double soc_residual(const Eigen::Ref<const VectorXd>& v) {
    const double n1 = v.tail(v.size() - 1).norm();
    return (v[0] - n1) * (v[0] + n1);
  }

  static double soc_max_step(const Eigen::Ref<const VectorXd>& v, const Eigen::Ref<const VectorXd>& dv) {
    const double inf = std::numeric_limits<double>::infinity();
    const int d = static_cast<int>(v.size());
    const double a = dv[0] * dv[0] - dv.tail(d - 1).squaredNorm();
    const double b = v[0] * dv[0] - v.tail(d - 1).dot(dv.tail(d - 1));
    const double c = std::max(soc_residual(v), 0.0);
    double amax = inf;
    if (dv[0] < 0.0) amax = -v[0] / dv[0];
    // first positive root of a t^2 + 2 b t + c
    if (a == 0.0) {
      if (b < 0.0) amax = std::min(amax, -c / (2.0 * b));
      return amax;
    }
    const double disc = b * b - a * c;
    if (disc < 0.0) return amax;
    const double sq = std::sqrt(disc);
    const double q = -(b + std::copysign(sq, b));
    double best = inf;
    if (q != 0.0) {
      const double r1 = q / a, r2 = c / q;
      if (r1 > 0.0) best = std::min(best, r1);
      if (r2 > 0.0) best = std::min(best, r2);
    } else if (c == 0.0) {
      best = 0.0;
    }
    return std::min(amax, best);
  }

  int lp_dim_;
  std::vector<int> soc_dims_;
  std::vector<int> soc_offsets_;
  int dim_ = 0;
};

// ---------------------------------------------------------------------------
// Standard form

struct StandardForm {
  int n = 0, p = 0, m = 0;
  SparseMatrix A, G;
  VectorXd c, b, h;
  ConeSet cones{0, {}};
  int user_ineq = 0;
};

// Ruiz equilibration of [A; G]: x = Dx * xs, rows of A scaled by Ea, rows of G
// by Eg (one factor per second-order cone so cone membership is preserved).
struct Equilibration {
  VectorXd Dx, Ea, Eg;
};

Equilibration equilibrate(StandardForm& sf, int passes = 15) {
  const int n = sf.n, p = sf.p, m = sf.m;
  Equilibration eq{VectorXd::Ones(n), VectorXd::Ones(p), VectorXd::Ones(m)};
  auto safe_inv_sqrt = [](double v) { return v > 1e-8 ? 1.0 / std::sqrt(v) : 1.0; };
  for (int pass = 0; pass < passes; ++pass) {
    VectorXd col = VectorXd::Zero(n), ra = VectorXd::Zero(p), rg = VectorXd::Zero(m);
    for (int k = 0; k < sf.A.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(sf.A, k); it; ++it) {
        const double v = std::abs(it.value());
        col[k] = std::max(col[k], v);
        ra[it.row()] = std::max(ra[it.row()], v);
      }
    }
    for (int k = 0; k < sf.G.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(sf.G, k); it; ++it) {
        const double v = std::abs(it.value());
        col[k] = std::max(col[k], v);
        rg[it.row()] = std::max(rg[it.row()], v);
      }
    }
    for (int k = 0; k < sf.cones.num_soc(); ++k) {
      const int o = sf.cones.soc_offset(k), d = sf.cones.soc_dim(k);
      rg.segment(o, d).setConstant(rg.segment(o, d).maxCoeff());
    }
    double worst = 0.0;
    VectorXd dc(n), da(p), dg(m);
    for (int j = 0; j < n; ++j) dc[j] = safe_inv_sqrt(col[j]);
    for (int i = 0; i < p; ++i) da[i] = safe_inv_sqrt(ra[i]);
    for (int i = 0; i < m; ++i) dg[i] = safe_inv_sqrt(rg[i]);
    for (int j = 0; j < n; ++j) worst = std::max(worst, std::abs(1.0 - dc[j]));
    for (int i = 0; i < p; ++i) worst = std::max(worst, std::abs(1.0 - da[i]));
    for (int i = 0; i < m; ++i) worst = std::max(worst, std::abs(1.0 - dg[i]));
    if (worst < 1e-3) break;
    sf.A = da.asDiagonal() * sf.A * dc.asDiagonal();
    sf.G = dg.asDiagonal() * sf.G * dc.asDiagonal();
    eq.Dx.array() *= dc.array();
    eq.Ea.array() *= da.array();
    eq.Eg.array() *= dg.array();
  }
  sf.c = eq.Dx.cwiseProduct(sf.c);
  sf.b = eq.Ea.cwiseProduct(sf.b);
  sf.h = eq.Eg.cwiseProduct(sf.h);
  sf.A.makeCompressed();
  sf.G.makeCompressed();
  return eq;
}

// Factor H = F'F with a pivoted LDL'.
struct QuadraticBlock {
  std::vector<int> support;
  Eigen::MatrixXd F;  // block of H equals F'F
};

// Splits H into the connected components of its sparsity graph and factors
// each one, so every block gets its own small epigraph cone.
std::vector<QuadraticBlock> quadratic_blocks(const SparseMatrix& H) {
  const int n = static_cast<int>(H.rows());
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  std::vector<char> used(n, 0);
  for (int k = 0; k < H.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(H, k); it; ++it) {
      if (it.value() == 0.0) continue;
      used[it.row()] = used[it.col()] = 1;
      parent[find(it.row())] = find(it.col());
    }
  }
  std::vector<int> block_of(n, -1), local(n, -1);
  std::vector<QuadraticBlock> blocks;
  for (int i = 0; i < n; ++i) {
    if (!used[i]) continue;
    const int r = find(i);
    if (block_of[r] < 0) {
      block_of[r] = static_cast<int>(blocks.size());
      blocks.emplace_back();
    }
    auto& blk = blocks[block_of[r]];
    local[i] = static_cast<int>(blk.support.size());
    blk.support.push_back(i);
  }
  std::vector<Eigen::MatrixXd> dense(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto d = static_cast<Eigen::Index>(blocks[b].support.size());
    dense[b] = Eigen::MatrixXd::Zero(d, d);
  }
  for (int k = 0; k < H.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(H, k); it; ++it) {
      if (it.value() == 0.0) continue;
      dense[block_of[find(it.row())]](local[it.row()], local[it.col()]) += it.value();
    }
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto r = dense[b].rows();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(dense[b]);
    const VectorXd D = ldlt.vectorD();
    const double scale = std::max(1.0, D.cwiseAbs().maxCoeff());
    const Eigen::MatrixXd L = ldlt.matrixL();
    // F = sqrt(D) L' P
    const Eigen::MatrixXd P = ldlt.transpositionsP() * Eigen::MatrixXd::Identity(r, r);
    const Eigen::MatrixXd LtP = L.transpose() * P;
    std::vector<int> rows;
    for (int i = 0; i < r; ++i) {
      if (D[i] > 1e-14 * scale) rows.push_back(i);
    }
    blocks[b].F.resize(static_cast<Eigen::Index>(rows.size()), r);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      blocks[b].F.row(static_cast<Eigen::Index>(i)) = std::sqrt(D[rows[i]]) * LtP.row(rows[i]);
    }
  }
  std::erase_if(blocks, [](const QuadraticBlock& blk) { return blk.F.rows() == 0; });
  return blocks;
}

StandardForm to_standard_form(const ConicProblem& pr) {
  StandardForm sf;
  const int n0 = pr.num_vars;
  const std::vector<QuadraticBlock> qblocks =
      pr.has_quadratic() ? quadratic_blocks(pr.quadratic) : std::vector<QuadraticBlock>{};
  sf.n = n0 + static_cast<int>(qblocks.size());
  sf.p = static_cast<int>(pr.eq_matrix.rows());
  sf.c = VectorXd::Zero(sf.n);
  sf.c.head(n0) = pr.cost;
  sf.A = SparseMatrix(sf.p, sf.n);
  if (sf.p > 0) {
    std::vector<Triplet> t;
    for (int k = 0; k < pr.eq_matrix.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(pr.eq_matrix, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    }
    sf.A.setFromTriplets(t.begin(), t.end());
    sf.b = pr.eq_rhs;
  } else {
    sf.b = VectorXd(0);
  }

  std::vector<Triplet> gt;
  std::vector<double> h;
  int row = 0;
  for (int k = 0; k < pr.ineq_matrix.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(pr.ineq_matrix, k); it; ++it) gt.emplace_back(it.row(), it.col(), it.value());
  }
  sf.user_ineq = static_cast<int>(pr.ineq_matrix.rows());
  for (int i = 0; i < sf.user_ineq; ++i) h.push_back(pr.ineq_rhs[i]);
  row = sf.user_ineq;
  std::vector<int> lp_singletons;
  for (const auto& cone : pr.cones) {
    if (cone.size() == 1) lp_singletons.push_back(cone[0]);
  }
  for (int idx : pr.nonneg) {
    gt.emplace_back(row++, idx, -1.0);
    h.push_back(0.0);
  }
  for (int idx : lp_singletons) {
    gt.emplace_back(row++, idx, -1.0);
    h.push_back(0.0);
  }
  const int lp_dim = row;
  std::vector<int> soc_dims;
  for (const auto& cone : pr.cones) {
    if (cone.size() < 2) continue;
    for (int idx : cone) {
      gt.emplace_back(row++, idx, -1.0);
      h.push_back(0.0);
    }
    soc_dims.push_back(static_cast<int>(cone.size()));
  }
  for (std::size_t b = 0; b < qblocks.size(); ++b) {
    // (tau + 1/2, tau - 1/2, F x) in the cone  <=>  tau >= x'F'F x / 2
    const auto& blk = qblocks[b];
    const int epi = n0 + static_cast<int>(b);
    gt.emplace_back(row++, epi, -1.0);
    h.push_back(0.5);
    gt.emplace_back(row++, epi, -1.0);
    h.push_back(-0.5);
    for (int i = 0; i < blk.F.rows(); ++i) {
      for (int j = 0; j < blk.F.cols(); ++j) {
        if (blk.F(i, j) != 0.0) gt.emplace_back(row, blk.support[j], -blk.F(i, j));
      }
      h.push_back(0.0);
      ++row;
    }
    soc_dims.push_back(2 + static_cast<int>(blk.F.rows()));
    sf.c[epi] = 1.0;
  }
  sf.m = row;
  sf.G = SparseMatrix(sf.m, sf.n);
  sf.G.setFromTriplets(gt.begin(), gt.end());
  sf.h = Eigen::Map<VectorXd>(h.data(), static_cast<Eigen::Index>(h.size()));
  sf.cones = ConeSet(lp_dim, soc_dims);
  return sf;
}

// ---------------------------------------------------------------------------
// KKT system
//
//   [ 0   A'  G'   ]
//   [ A   0   0    ]
//   [ G   0  -W'W  ]

int find_entry(const SparseMatrix& M, int row, int col) {
  const int* inner = M.innerIndexPtr();
  const int begin = M.outerIndexPtr()[col], end = M.outerIndexPtr()[col + 1];
  const int* pos = std::lower_bound(inner + begin, inner + end, row);
  return static_cast<int>(pos - inner);
}

// Sparse LDL' of a quasi-definite matrix with known pivot signs. Pivots
// that lose their sign or vanish are replaced by +-kDynamicReg.
class QuasiDefiniteLdl {
 public:
  // lower: lower triangle (incl. diagonal) of the symmetric matrix, compressed.
  void analyze(const SparseMatrix& lower, std::vector<signed char> signs) {
    n_ = static_cast<int>(lower.rows());
    signs_ = std::move(signs);
    const SparseMatrix full_pattern = SparseMatrix(lower.selfadjointView<Eigen::Lower>());
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> pinv;
    Eigen::AMDOrdering<int>()(full_pattern, pinv);
    const Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm = pinv.inverse();
    newidx_.assign(perm.indices().data(), perm.indices().data() + n_);

    // permuted upper triangle with a map from source value slots
    std::vector<Triplet> t;
    for (int k = 0; k < lower.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(lower, k); it; ++it) {
        const int a = newidx_[it.row()], b = newidx_[it.col()];
        t.emplace_back(std::min(a, b), std::max(a, b), 1.0);
      }
    }
    upper_ = SparseMatrix(n_, n_);
    upper_.setFromTriplets(t.begin(), t.end());
    upper_.makeCompressed();
    slot_.clear();
    for (int k = 0; k < lower.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(lower, k); it; ++it) {
        const int a = newidx_[it.row()], b = newidx_[it.col()];
        slot_.push_back(find_entry(upper_, std::min(a, b), std::max(a, b)));
      }
    }
    psigns_.assign(n_, 1);
    for (int i = 0; i < n_; ++i) psigns_[newidx_[i]] = signs_[i];

    // elimination tree and column counts
    const int* Ap = upper_.outerIndexPtr();
    const int* Ai = upper_.innerIndexPtr();
    etree_.assign(n_, -1);
    std::vector<int> lnz(n_, 0), work(n_, 0);
    for (int j = 0; j < n_; ++j) {
      work[j] = j;
      for (int p = Ap[j]; p < Ap[j + 1]; ++p) {
        int i = Ai[p];
        while (i != -1 && i < j && work[i] != j) {
          if (etree_[i] == -1) etree_[i] = j;
          ++lnz[i];
          work[i] = j;
          i = etree_[i];
        }
      }
    }
    Lp_.assign(n_ + 1, 0);
    for (int i = 0; i < n_; ++i) Lp_[i + 1] = Lp_[i] + lnz[i];
    Li_.assign(Lp_[n_], 0);
    Lx_.assign(Lp_[n_], 0.0);
    D_.assign(n_, 0.0);
    Dinv_.assign(n_, 0.0);
  }

  void factor(const SparseMatrix& lower) {
    double* ux = upper_.valuePtr();
    std::fill(ux, ux + upper_.nonZeros(), 0.0);
    const double* lx = lower.valuePtr();
    for (std::size_t q = 0; q < slot_.size(); ++q) ux[slot_[q]] += lx[q];

    const int* Ap = upper_.outerIndexPtr();
    const int* Ai = upper_.innerIndexPtr();
    std::vector<double> y(n_, 0.0);
    std::vector<char> marked(n_, 0);
    std::vector<int> next_in_col(Lp_.begin(), Lp_.end() - 1);
    std::vector<int> pattern, stack;
    pattern.reserve(n_);
    stack.reserve(n_);
    for (int k = 0; k < n_; ++k) {
      pattern.clear();
      D_[k] = 0.0;
      for (int p = Ap[k]; p < Ap[k + 1]; ++p) {
        const int i = Ai[p];
        if (i == k) {
          D_[k] = ux[p];
          continue;
        }
        y[i] = ux[p];
        int j = i;
        stack.clear();
        while (j != -1 && j < k && !marked[j]) {
          marked[j] = 1;
          stack.push_back(j);
          j = etree_[j];
        }
        while (!stack.empty()) {
          pattern.push_back(stack.back());
          stack.pop_back();
        }
      }
      for (int q = static_cast<int>(pattern.size()) - 1; q >= 0; --q) {
        const int c = pattern[q];
        const double yc = y[c];
        const int end = next_in_col[c];
        for (int j = Lp_[c]; j < end; ++j) y[Li_[j]] -= Lx_[j] * yc;
        Li_[end] = k;
        Lx_[end] = yc * Dinv_[c];
        D_[k] -= yc * Lx_[end];
        ++next_in_col[c];
        y[c] = 0.0;
        marked[c] = 0;
      }
      if (psigns_[k] * D_[k] <= kDynamicEps) D_[k] = psigns_[k] * kDynamicReg;
      Dinv_[k] = 1.0 / D_[k];
    }
  }

  VectorXd solve(const VectorXd& rhs) const {
    VectorXd x(n_);
    for (int i = 0; i < n_; ++i) x[newidx_[i]] = rhs[i];
    for (int i = 0; i < n_; ++i) {
      const double xi = x[i];
      for (int j = Lp_[i]; j < Lp_[i + 1]; ++j) x[Li_[j]] -= Lx_[j] * xi;
    }
    for (int i = 0; i < n_; ++i) x[i] *= Dinv_[i];
    for (int i = n_ - 1; i >= 0; --i) {
      double xi = x[i];
      for (int j = Lp_[i]; j < Lp_[i + 1]; ++j) xi -= Lx_[j] * x[Li_[j]];
      x[i] = xi;
    }
    VectorXd out(n_);
    for (int i = 0; i < n_; ++i) out[i] = x[newidx_[i]];
    return out;
  }

 private:
  static constexpr double kDynamicEps = 1e-13;
  static constexpr double kDynamicReg = 1e-7;

  int n_ = 0;
  std::vector<signed char> signs_, psigns_;
  std::vector<int> newidx_;
  SparseMatrix upper_;
  std::vector<int> slot_;
  std::vector<int> etree_;
  std::vector<int> Lp_, Li_;
  std::vector<double> Lx_, D_, Dinv_;
};

class KktSystem {
 public:
  explicit KktSystem(const StandardForm& sf) : sf_(sf) {
    const int n = sf.n, p = sf.p, m = sf.m;
    dim_ = n + p + m;
    std::vector<Triplet> t;
    for (int i = 0; i < n; ++i) t.emplace_back(i, i, kStaticReg);
    for (int i = 0; i < p; ++i) t.emplace_back(n + i, n + i, -kStaticReg);
    for (int k = 0; k < sf.A.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(sf.A, k); it; ++it) t.emplace_back(n + it.row(), it.col(), it.value());
    }
    for (int k = 0; k < sf.G.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(sf.G, k); it; ++it) t.emplace_back(n + p + it.row(), it.col(), it.value());
    }
    const auto& cs = sf.cones;
    const int zoff = n + p;
    for (int i = 0; i < cs.lp_dim(); ++i) t.emplace_back(zoff + i, zoff + i, -1.0);
    for (int k = 0; k < cs.num_soc(); ++k) {
      const int o = cs.soc_offset(k), d = cs.soc_dim(k);
      for (int j = 0; j < d; ++j) {
        for (int i = j; i < d; ++i) t.emplace_back(zoff + o + i, zoff + o + j, -1.0);
      }
    }
    K_ = SparseMatrix(dim_, dim_);
    K_.setFromTriplets(t.begin(), t.end());
    K_.makeCompressed();
    for (int i = 0; i < cs.lp_dim(); ++i) lp_pos_.push_back(find_entry(K_, zoff + i, zoff + i));
    soc_pos_.resize(cs.num_soc());
    for (int k = 0; k < cs.num_soc(); ++k) {
      const int o = cs.soc_offset(k), d = cs.soc_dim(k);
      for (int j = 0; j < d; ++j) {
        for (int i = j; i < d; ++i) soc_pos_[k].push_back(find_entry(K_, zoff + o + i, zoff + o + j));
      }
    }
    std::vector<signed char> signs(dim_, -1);
    std::fill(signs.begin(), signs.begin() + n, 1);
    ldl_.analyze(K_, std::move(signs));
  }

  bool factor(const Scaling& w) {
    const auto& cs = sf_.cones;
    double* val = K_.valuePtr();
    for (int i = 0; i < cs.lp_dim(); ++i) val[lp_pos_[i]] = -(w.lp_w[i] * w.lp_w[i]) - kStaticReg;
    for (int k = 0; k < cs.num_soc(); ++k) {
      const int d = cs.soc_dim(k);
      const auto& sc = w.soc[k];
      const double e2 = sc.eta * sc.eta;
      int q = 0;
      for (int j = 0; j < d; ++j) {
        for (int i = j; i < d; ++i) {
          // W^2 = eta^2 (2 wbar wbar' - J)
          double v = 2.0 * sc.wbar[i] * sc.wbar[j];
          if (i == j) v += (i == 0) ? -1.0 : 1.0;
          val[soc_pos_[k][q++]] = -e2 * v - (i == j ? kStaticReg : 0.0);
        }
      }
    }
    ldl_.factor(K_);
    return true;
  }

  VectorXd solve(const VectorXd& rhs) const {
    VectorXd x = ldl_.solve(rhs);
    const double tol = 1e-14 * (1.0 + rhs.lpNorm<Eigen::Infinity>());
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < kRefineSteps; ++it) {
      const VectorXd r = rhs - multiply(x);
      const double err = r.lpNorm<Eigen::Infinity>();
      if (err <= tol || err > 0.5 * prev) break;  // converged or stagnating
      prev = err;
      x += ldl_.solve(r);
    }
    return x;
  }

 private:
  // Product with the unregularized KKT matrix.
  VectorXd multiply(const VectorXd& v) const {
    const int n = sf_.n;
    VectorXd out = K_.selfadjointView<Eigen::Lower>() * v;
    out.head(n) -= kStaticReg * v.head(n);
    out.tail(dim_ - n) += kStaticReg * v.tail(dim_ - n);
    return out;
  }

  const StandardForm& sf_;
  int dim_ = 0;
  SparseMatrix K_;
  std::vector<int> lp_pos_;
  std::vector<std::vector<int>> soc_pos_;
  QuasiDefiniteLdl ldl_;
};

struct Direction {
  VectorXd x, y, z, s;
  double tau = 0.0, kappa = 0.0;
};

double safe_max(double a) { return std::max(1.0, a); }

// Active-set refinement for LPs and QPs: solves the equality-constrained KKT
// system for the rows the interior-point iterate identifies as active and
// keeps the result only if it is primal and dual feasible.
bool polish(const ConicProblem& pr, const StandardForm& sf, const VectorXd& s, const VectorXd& z,
            ConicSolution& sol) {
  const int n = pr.num_vars, p = sf.p;
  const int lp_rows = sf.cones.lp_dim();
  const SparseMatrix G = sf.G.topLeftCorner(lp_rows, n);
  std::vector<int> active;
  for (int i = 0; i < lp_rows; ++i) {
    if (z[i] > s[i]) active.push_back(i);
  }
  const int a = static_cast<int>(active.size());
  const int dim = n + p + a;
  constexpr double kReg = 1e-11;

  std::vector<Triplet> t, treg;
  for (int k = 0; k < pr.quadratic.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(pr.quadratic, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  }
  for (int k = 0; k < sf.A.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(sf.A, k); it; ++it) {
      if (it.col() >= n) continue;
      t.emplace_back(n + it.row(), it.col(), it.value());
      t.emplace_back(it.col(), n + it.row(), it.value());
    }
  }
  std::vector<int> slot(lp_rows, -1);
  for (int j = 0; j < a; ++j) slot[active[j]] = j;
  for (int k = 0; k < G.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(G, k); it; ++it) {
      const int j = slot[it.row()];
      if (j < 0) continue;
      t.emplace_back(n + p + j, it.col(), it.value());
      t.emplace_back(it.col(), n + p + j, it.value());
    }
  }
  SparseMatrix K(dim, dim), Kreg(dim, dim);
  K.setFromTriplets(t.begin(), t.end());
  treg = t;
  for (int i = 0; i < dim; ++i) treg.emplace_back(i, i, i < n ? kReg : -kReg);
  Kreg.setFromTriplets(treg.begin(), treg.end());

  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(Kreg);
  if (lu.info() != Eigen::Success) return false;
  VectorXd rhs(dim);
  rhs.head(n) = -pr.cost;
  rhs.segment(n, p) = sf.b;
  for (int j = 0; j < a; ++j) rhs[n + p + j] = sf.h[active[j]];
  VectorXd sol_k = lu.solve(rhs);
  for (int r = 0; r < 3; ++r) sol_k += lu.solve(VectorXd(rhs - K * sol_k));
  if (!sol_k.allFinite()) return false;

  const VectorXd x = sol_k.head(n);
  const VectorXd lam = sol_k.tail(a);
  const double tol = 1e-9;
  const VectorXd slack = sf.h.head(lp_rows) - G * x;
  if (lp_rows > 0 && slack.minCoeff() < -tol * (1.0 + sf.h.head(lp_rows).cwiseAbs().maxCoeff())) return false;
  if (a > 0 && lam.minCoeff() < -tol * (1.0 + lam.cwiseAbs().maxCoeff())) return false;
  if ((K * sol_k - rhs).lpNorm<Eigen::Infinity>() > tol * (1.0 + rhs.lpNorm<Eigen::Infinity>())) return false;

  double obj = pr.cost.dot(x);
  if (pr.has_quadratic()) obj += 0.5 * x.dot(pr.quadratic * x);
  if (obj > sol.objective + 1e-7 * (1.0 + std::abs(sol.objective))) return false;

  sol.primal = x;
  sol.eq_dual = sol_k.segment(n, p);
  VectorXd zfull = VectorXd::Zero(lp_rows);
  for (int j = 0; j < a; ++j) zfull[active[j]] = std::max(0.0, lam[j]);
  sol.ineq_dual = zfull.head(sf.user_ineq);
  sol.objective = obj;
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------

ConicProblem::ConicProblem(int n)
    : num_vars(n),
      cost(VectorXd::Zero(n)),
      eq_matrix(0, n),
      eq_rhs(0),
      ineq_matrix(0, n),
      ineq_rhs(0) {}

void ConicProblem::validate() const {
  auto fail = [](const std::string& msg) { throw ProblemError("conic problem: " + msg); };
  if (num_vars < 0) fail("negative variable count");
  if (cost.size() != num_vars) fail("cost vector length != variable count");
  if (eq_matrix.cols() != num_vars || ineq_matrix.cols() != num_vars) fail("constraint column count != variable count");
  if (eq_matrix.rows() != eq_rhs.size()) fail("equality rhs length mismatch");
  if (ineq_matrix.rows() != ineq_rhs.size()) fail("inequality rhs length mismatch");
  if (has_quadratic()) {
    if (quadratic.rows() != num_vars || quadratic.cols() != num_vars) fail("quadratic term has wrong shape");
    const SparseMatrix asym = SparseMatrix(quadratic.transpose()) - quadratic;
    for (int k = 0; k < asym.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(asym, k); it; ++it) {
        if (std::abs(it.value()) > 1e-10) fail("quadratic term is not symmetric");
      }
    }
    // PSD check on the principal submatrix of variables the quadratic touches
    std::vector<int> idx(num_vars, -1);
    int used = 0;
    for (int k = 0; k < quadratic.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(quadratic, k); it; ++it) {
        if (idx[it.col()] < 0) idx[it.col()] = used++;
      }
    }
    Eigen::MatrixXd sub = Eigen::MatrixXd::Zero(used, used);
    for (int k = 0; k < quadratic.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(quadratic, k); it; ++it) sub(idx[it.row()], idx[it.col()]) += it.value();
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(sub);
    const VectorXd D = ldlt.vectorD();
    const double scale = std::max(1.0, D.cwiseAbs().maxCoeff());
    if (ldlt.info() != Eigen::Success || D.minCoeff() < -1e-10 * scale) fail("quadratic term is not positive semidefinite");
  }
  std::vector<char> seen(num_vars, 0);
  for (const auto& cone : cones) {
    if (cone.empty()) fail("empty cone index list");
    for (int idx : cone) {
      if (idx < 0 || idx >= num_vars) fail("cone index out of range");
      if (seen[idx]) fail("cone index lists overlap");
      seen[idx] = 1;
    }
  }
  for (int idx : nonneg) {
    if (idx < 0 || idx >= num_vars) fail("nonnegativity index out of range");
  }
  if (!cost.allFinite() || !eq_rhs.allFinite() || !ineq_rhs.allFinite()) fail("non-finite data");
}

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kOptimal: return "optimal";
    case SolveStatus::kInfeasible: return "infeasible";
    case SolveStatus::kUnbounded: return "unbounded";
    case SolveStatus::kNumericalFailure: return "numerical-failure";
  }
  return "unknown";
}

ConicSolution solve(const ConicProblem& problem, const SolverSettings& settings) {
  problem.validate();
  const StandardForm sf_orig = to_standard_form(problem);
  StandardForm sf_scaled;
  Equilibration scaling;
  if (sf_orig.m > 0) {
    sf_scaled = sf_orig;
    scaling = equilibrate(sf_scaled);
  }
  const StandardForm& sf = sf_orig.m > 0 ? sf_scaled : sf_orig;
  const ConeSet& K = sf.cones;
  const int n = sf.n, p = sf.p, m = sf.m;

  ConicSolution sol;
  auto finish_objective = [&](const VectorXd& x) {
    double obj = problem.cost.dot(x);
    if (problem.has_quadratic()) obj += 0.5 * x.dot(problem.quadratic * x);
    return obj;
  };

  if (m == 0) {
    // Only equality constraints and a linear objective.
    Eigen::SparseQR<SparseMatrix, Eigen::COLAMDOrdering<int>> qr;
    SparseMatrix At = sf.A.transpose();
    if (p == 0) {
      sol.primal = VectorXd::Zero(n);
      sol.status = sf.c.isZero() ? SolveStatus::kOptimal : SolveStatus::kUnbounded;
    } else {
      qr.compute(sf.A);
      VectorXd x = qr.solve(sf.b);
      if ((sf.A * x - sf.b).norm() > settings.feasibility_tol * safe_max(sf.b.norm())) {
        sol.status = SolveStatus::kInfeasible;
        return sol;
      }
      Eigen::SparseQR<SparseMatrix, Eigen::COLAMDOrdering<int>> qrt(At);
      VectorXd y = qrt.solve(VectorXd(-sf.c));
      if ((At * y + sf.c).norm() > settings.feasibility_tol * safe_max(sf.c.norm())) {
        sol.status = SolveStatus::kUnbounded;
        return sol;
      }
      sol.primal = x;
      sol.eq_dual = y;
      sol.status = SolveStatus::kOptimal;
    }
    sol.ineq_dual = VectorXd(0);
    sol.objective = sol.primal.size() ? finish_objective(sol.primal.head(problem.num_vars)) : 0.0;
    return sol;
  }

  KktSystem kkt(sf);

  // Initial point
  Scaling w = K.identity_scaling();
  if (!kkt.factor(w)) {
    sol.status = SolveStatus::kNumericalFailure;
    return sol;
  }
  VectorXd rhs(n + p + m);
  rhs << VectorXd::Zero(n), sf.b, sf.h;
  VectorXd sol0 = kkt.solve(rhs);
  VectorXd x = sol0.head(n);
  VectorXd s = -sol0.tail(m);
  K.shift_into_interior(s);
  rhs << -sf.c, VectorXd::Zero(p), VectorXd::Zero(m);
  sol0 = kkt.solve(rhs);
  VectorXd y = sol0.segment(n, p);
  VectorXd z = sol0.tail(m);
  K.shift_into_interior(z);
  double tau = 1.0, kappa = 1.0;

  const double bnorm = safe_max(sf.b.norm()), hnorm = safe_max(sf.h.norm()), cnorm = safe_max(sf.c.norm());
  const SparseMatrix At = sf.A.transpose(), Gt = sf.G.transpose();
  const VectorXd e = K.identity();
  const double degree = K.degree();

  VectorXd c1(n + p + m);
  c1 << -sf.c, sf.b, sf.h;

  SolveStatus status = SolveStatus::kNumericalFailure;
  SolveStatus fallback = SolveStatus::kNumericalFailure;
  struct Iterate {
    VectorXd x, y, z, s;
    double tau = 1.0, kappa = 1.0;
  } saved;
  double saved_merit = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter <= settings.max_iterations; ++iter) {
    const VectorXd rx = At * y + Gt * z + sf.c * tau;
    const VectorXd ry = -(sf.A * x) + sf.b * tau;
    const VectorXd rz = s + sf.G * x - sf.h * tau;
    const double cx = sf.c.dot(x), by = sf.b.dot(y), hz = sf.h.dot(z);
    const double rt = kappa + cx + by + hz;

    const double pres = std::max(ry.norm() / bnorm, rz.norm() / hnorm) / tau;
    const double dres = rx.norm() / cnorm / tau;
    const double gap = s.dot(z) / (tau * tau);
    const double pcost = cx / tau, dcost = -(by + hz) / tau;
    double relgap = std::numeric_limits<double>::infinity();
    if (pcost < 0.0) {
      relgap = gap / -pcost;
    } else if (dcost > 0.0) {
      relgap = gap / dcost;
    }
    sol.primal_residual = pres;
    sol.dual_residual = dres;
    sol.gap = gap;

    if (pres < settings.feasibility_tol && dres < settings.feasibility_tol &&
        (gap < settings.gap_tol || relgap < settings.gap_tol)) {
      status = SolveStatus::kOptimal;
      break;
    }
    double pinf = std::numeric_limits<double>::infinity();
    if (by + hz < 0.0) {
      pinf = (At * y + Gt * z).norm() / cnorm / -(by + hz);
      if (pinf < settings.feasibility_tol) {
        status = SolveStatus::kInfeasible;
        break;
      }
    }
    // best iterate so far that passes the looser tolerances, used if the method stalls
    {
      const double opt_merit = std::max({pres, dres, std::min(gap, relgap)});
      if (opt_merit < kInaccurateTol && opt_merit < saved_merit) {
        fallback = SolveStatus::kOptimal;
        saved_merit = opt_merit;
        saved = {x, y, z, s, tau, kappa};
      } else if (fallback != SolveStatus::kOptimal && pinf < kInaccurateTol && pinf < saved_merit) {
        fallback = SolveStatus::kInfeasible;
        saved_merit = pinf;
        saved = {x, y, z, s, tau, kappa};
      }
    }
    if (cx < 0.0) {
      const double dinf = std::max((sf.A * x).norm() / bnorm, (sf.G * x + s).norm() / hnorm) / -cx;
      if (dinf < settings.feasibility_tol) {
        status = SolveStatus::kUnbounded;
        break;
      }
    }
    if (iter == settings.max_iterations) break;

    VectorXd lambda;
    w = K.nt_scaling(s, z, lambda);
    if (!kkt.factor(w)) break;
    const VectorXd d1 = kkt.solve(c1);
    const auto x1 = d1.head(n), y1 = d1.segment(n, p), z1 = d1.tail(m);
    const double denom1 = sf.c.dot(x1) + sf.b.dot(y1) + sf.h.dot(z1);

    const double mu = (s.dot(z) + tau * kappa) / (degree + 1.0);

    auto direction = [&](double res_scale, const VectorXd& ds_target, double dk_target) {
      // ds_target = d_s (complementarity rhs), dk_target = d_kappa
      const VectorXd lds = K.jordan_inverse(lambda, ds_target);
      VectorXd r2(n + p + m);
      r2 << -res_scale * rx, res_scale * ry, -res_scale * rz - K.apply_w(w, lds, false);
      const VectorXd d2 = kkt.solve(r2);
      Direction d;
      const auto x2 = d2.head(n), y2 = d2.segment(n, p), z2 = d2.tail(m);
      const double dtau_rhs = res_scale * rt + dk_target / tau + sf.c.dot(x2) + sf.b.dot(y2) + sf.h.dot(z2);
      d.tau = dtau_rhs / (kappa / tau - denom1);
      d.x = x2 + d.tau * x1;
      d.y = y2 + d.tau * y1;
      d.z = z2 + d.tau * z1;
      d.s = K.apply_w(w, VectorXd(lds - K.apply_w(w, d.z, false)), false);
      d.kappa = (dk_target - kappa * d.tau) / tau;
      return d;
    };
    auto step_to_boundary = [&](const Direction& d) {
      double a = std::min(K.max_step(s, d.s), K.max_step(z, d.z));
      if (d.tau < 0.0) a = std::min(a, -tau / d.tau);
      if (d.kappa < 0.0) a = std::min(a, -kappa / d.kappa);
      return a;
    };

    // predictor
    const Direction aff = direction(1.0, VectorXd(-K.jordan(lambda, lambda)), -tau * kappa);
    const double alpha_aff = std::min(1.0, step_to_boundary(aff));
    const double sigma = std::clamp(std::pow(1.0 - alpha_aff, 3), kSigmaMin, 1.0);

    // corrector
    const VectorXd soc_term = K.jordan(K.apply_w(w, aff.s, true), K.apply_w(w, aff.z, false));
    const VectorXd ds_c = -K.jordan(lambda, lambda) - soc_term + sigma * mu * e;
    const double dk_c = -tau * kappa - aff.tau * aff.kappa + sigma * mu;
    const Direction d = direction(1.0 - sigma, ds_c, dk_c);
    const double alpha = std::min(1.0, kStepFraction * step_to_boundary(d));
    if (!(alpha > 1e-12)) break;

    x += alpha * d.x;
    y += alpha * d.y;
    z += alpha * d.z;
    s += alpha * d.s;
    tau += alpha * d.tau;
    kappa += alpha * d.kappa;
    if (!x.allFinite() || !z.allFinite() || !(tau > 0.0)) break;
  }

  if (status == SolveStatus::kNumericalFailure && fallback != SolveStatus::kNumericalFailure) {
    status = fallback;
    sol.reduced_accuracy = true;
    x = saved.x;
    y = saved.y;
    z = saved.z;
    s = saved.s;
    tau = saved.tau;
    kappa = saved.kappa;
  }
  x.array() *= scaling.Dx.array();
  y.array() *= scaling.Ea.array();
  z.array() *= scaling.Eg.array();
  s.array() /= scaling.Eg.array();
  sol.status = status;
  sol.iterations = iter;
  const int nu = problem.num_vars;
  const int num_in = sf_orig.user_ineq;
  if (status == SolveStatus::kOptimal) {
    sol.primal = x.head(nu) / tau;
    sol.ineq_dual = z.head(num_in) / tau;
    sol.eq_dual = y / tau;
    sol.objective = finish_objective(sol.primal);
    const bool lp_cones_only =
        std::all_of(problem.cones.begin(), problem.cones.end(), [](const auto& c) { return c.size() == 1; });
    if (lp_cones_only && polish(problem, sf_orig, s / tau, z / tau, sol)) sol.reduced_accuracy = false;
  } else if (status == SolveStatus::kInfeasible) {
    const double scale = -(sf_orig.b.dot(y) + sf_orig.h.dot(z));
    sol.ineq_dual = z.head(num_in) / scale;
    sol.eq_dual = y / scale;
    sol.objective = std::numeric_limits<double>::infinity();
  } else if (status == SolveStatus::kUnbounded) {
    sol.primal = x.head(nu) / -sf_orig.c.dot(x);
    sol.objective = -std::numeric_limits<double>::infinity();
  }
  return sol;
}

std::vector<ConicSolution> solve_lp_batch(const std::vector<ConicProblem>& problems, const SolverSettings& settings,
                                          int jobs) {
  for (const auto& pr : problems) {
    if (!pr.is_lp()) throw ProblemError("solve_lp_batch: problem is not an LP");
  }
  std::vector<ConicSolution> out(problems.size());
  auto run_one = [&](std::size_t i) {
    try {
      out[i] = solve(problems[i], settings);
    } catch (const ProblemError&) {
      out[i].status = SolveStatus::kNumericalFailure;
    }
  };
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(problems.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < problems.size(); ++i) run_one(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < problems.size(); i = next++) run_one(i);
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

}  // namespace octmpc
