#include "octmpc/controllers.hpp"

#include <chrono>
#include <cmath>

namespace octmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::kOct: return "oct";
    case ControllerKind::kTmpc: return "tmpc";
    case ControllerKind::kFpd: return "fpd";
    case ControllerKind::kNominal: return "nominal";
  }
  return "unknown";
}

ControllerKind controller_kind_from_string(const std::string& s) {
  if (s == "oct") return ControllerKind::kOct;
  if (s == "tmpc") return ControllerKind::kTmpc;
  if (s == "fpd") return ControllerKind::kFpd;
  if (s == "nominal") return ControllerKind::kNominal;
  throw std::invalid_argument("unknown controller '" + s + "'");
}

namespace {

struct TemplateBuilder {
  int n = 0;
  std::vector<Triplet> eq, in;
  std::vector<double> eq_rhs, in_rhs;
  std::vector<std::pair<int, VectorXd>> eq_x, in_x;  // (row, rhs sensitivity to x)
  int eq_rows = 0, in_rows = 0;

  int add_eq(double rhs) {
    eq_rhs.push_back(rhs);
    return eq_rows++;
  }
  int add_in(double rhs) {
    in_rhs.push_back(rhs);
    return in_rows++;
  }
  void eq_coef(int row, int col, double v) {
    if (v != 0.0) eq.emplace_back(row, col, v);
  }
  void in_coef(int row, int col, double v) {
    if (v != 0.0) in.emplace_back(row, col, v);
  }
};

void check_dimensions(const LinearSystem& sys, const CostWeights& w, int N, const MatrixXd& P, const Polytope& T) {
  if (N < 1) throw ModelError("horizon must be positive");
  if (w.Q.rows() != sys.nx() || w.Q.cols() != sys.nx() || w.R.rows() != sys.nu() || w.R.cols() != sys.nu())
    throw ModelError("weight dimensions do not match the system");
  if (P.rows() != sys.nx() || P.cols() != sys.nx()) throw ModelError("terminal cost has wrong dimension");
  if (T.dim() != sys.nx()) throw ModelError("terminal set has wrong dimension");
}

}  // namespace

ProblemSize MpcController::size() const {
  return {qp_.num_vars, static_cast<int>(qp_.eq_rhs.size()),
          static_cast<int>(qp_.ineq_rhs.size() + qp_.nonneg.size())};
}

ConicProblem MpcController::problem(const VectorXd& x, double margin) const {
  if (x.size() != nx_) throw ModelError("state dimension mismatch");
  ConicProblem p = qp_;
  p.eq_rhs = eq_rhs0_ + eq_rhs_x_ * x;
  p.ineq_rhs = in_rhs0_ + in_rhs_x_ * x;
  p.ineq_rhs.array() -= margin;
  return p;
}

double MpcController::constant_cost(const VectorXd& x) const { return x.dot(Q_ * x); }

ControlDecision MpcController::step(const VectorXd& x, double margin) const {
  ControlDecision d;
  const ConicProblem p = problem(x, margin);
  for (int r : empty_rows_) {
    if (p.ineq_rhs[r] < 0.0) return d;  // 0 <= negative: infeasible without solving
  }
  const auto t0 = std::chrono::steady_clock::now();
  const ConicSolution sol = solve(p, settings_);
  d.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  d.status = sol.status;
  d.iterations = sol.iterations;
  d.reduced_accuracy = sol.reduced_accuracy;
  if (sol.status == SolveStatus::kInfeasible) return d;
  if (sol.status != SolveStatus::kOptimal) {
    throw ControllerError(name() + " solver returned " + to_string(sol.status) + " after " +
                          std::to_string(sol.iterations) + " iterations (primal residual " +
                          std::to_string(sol.primal_residual) + ", dual residual " +
                          std::to_string(sol.dual_residual) + ", gap " + std::to_string(sol.gap) + ")");
  }
  d.feasible = true;
  d.plan.u = sol.primal.head(N_ * nu_).reshaped(nu_, N_);
  d.plan.x.resize(nx_, N_ + 1);
  d.plan.x.col(0) = x;
  d.plan.x.rightCols(N_) = sol.primal.segment(N_ * nu_, N_ * nx_).reshaped(nx_, N_);
  d.u = d.plan.u.col(0);
  d.objective = sol.objective + constant_cost(x);
  return d;
}

VectorXd MpcController::pack(const MpcPlan& plan) const {
  VectorXd z = VectorXd::Zero(qp_.num_vars);
  z.head(N_ * nu_) = plan.u.reshaped();
  z.segment(N_ * nu_, N_ * nx_) = plan.x.rightCols(N_).reshaped();
  return z;
}

double MpcController::plan_violation(const VectorXd& x, const MpcPlan& plan) const {
  const ConicProblem p = problem(x);
  const VectorXd z = pack(plan);
  double v = (plan.x.col(0) - x).cwiseAbs().maxCoeff();
  if (p.eq_rhs.size()) v = std::max(v, (p.eq_matrix * z - p.eq_rhs).cwiseAbs().maxCoeff());
  if (p.ineq_rhs.size()) v = std::max(v, (p.ineq_matrix * z - p.ineq_rhs).maxCoeff());
  return v;
}

double MpcController::plan_cost(const MpcPlan& plan) const {
  double J = 0.0;
  for (int i = 0; i < N_; ++i) {
    J += plan.x.col(i).dot(Q_ * plan.x.col(i)) + plan.u.col(i).dot(R_ * plan.u.col(i));
  }
  return J + plan.x.col(N_).dot(P_ * plan.x.col(N_));
}

namespace {

// Shared part: nominal dynamics, cost and the state/input index maps.
struct NominalLayout {
  int N, nx, nu;
  int u(int i, int k) const { return i * nu + k; }
  int x(int i, int k) const { return N * nu + (i - 1) * nx + k; }  // i = 1..N
  int count() const { return N * (nx + nu); }
};

void add_dynamics(TemplateBuilder& tb, const LinearSystem& sys, const NominalLayout& L) {
  for (int i = 0; i < L.N; ++i) {
    for (int r = 0; r < L.nx; ++r) {
      const int row = tb.add_eq(0.0);
      tb.eq_coef(row, L.x(i + 1, r), 1.0);
      for (int k = 0; k < L.nu; ++k) tb.eq_coef(row, L.u(i, k), -sys.B(r, k));
      if (i == 0) {
        tb.eq_x.emplace_back(row, sys.A.row(r).transpose());
      } else {
        for (int k = 0; k < L.nx; ++k) tb.eq_coef(row, L.x(i, k), -sys.A(r, k));
      }
    }
  }
}

// Stage row F_r x_i + G_r u_i + (extra terms added by caller) <= rhs
int add_stage_row(TemplateBuilder& tb, const LinearSystem& sys, const NominalLayout& L, int i, int r, double rhs) {
  const int row = tb.add_in(rhs);
  for (int k = 0; k < L.nu; ++k) tb.in_coef(row, L.u(i, k), sys.G(r, k));
  if (i == 0) {
    tb.in_x.emplace_back(row, -sys.F.row(r).transpose());
  } else {
    for (int k = 0; k < L.nx; ++k) tb.in_coef(row, L.x(i, k), sys.F(r, k));
  }
  return row;
}

SparseMatrix quadratic_cost(const CostWeights& w, const MatrixXd& P, const NominalLayout& L, int n) {
  std::vector<Triplet> trip;
  auto block = [&](const MatrixXd& M, int off) {
    for (int a = 0; a < M.rows(); ++a)
      for (int b = 0; b < M.cols(); ++b)
        if (M(a, b) != 0.0) trip.emplace_back(off + a, off + b, 2.0 * M(a, b));
  };
  for (int i = 0; i < L.N; ++i) block(w.R, L.u(i, 0));
  for (int i = 1; i < L.N; ++i) block(w.Q, L.x(i, 0));
  block(P, L.x(L.N, 0));
  SparseMatrix H(n, n);
  H.setFromTriplets(trip.begin(), trip.end());
  return H;
}

}  // namespace

void MpcController::load(int n, SparseMatrix H, SparseMatrix Aeq, VectorXd beq, MatrixXd beq_x, SparseMatrix Ain,
                         VectorXd bin, MatrixXd bin_x, std::vector<int> nonneg) {
  qp_ = ConicProblem(n);
  qp_.quadratic = std::move(H);
  qp_.eq_matrix = std::move(Aeq);
  qp_.ineq_matrix = std::move(Ain);
  qp_.nonneg = std::move(nonneg);
  eq_rhs0_ = std::move(beq);
  in_rhs0_ = std::move(bin);
  eq_rhs_x_ = std::move(beq_x);
  in_rhs_x_ = std::move(bin_x);
  qp_.eq_rhs = eq_rhs0_;
  qp_.ineq_rhs = in_rhs0_;
  empty_rows_.clear();
  const SparseMatrix At = qp_.ineq_matrix.transpose();
  for (int r = 0; r < At.cols(); ++r)
    if (At.col(r).nonZeros() == 0) empty_rows_.push_back(r);
}

namespace {

struct Assembled {
  SparseMatrix H, Aeq, Ain;
  VectorXd beq, bin;
  MatrixXd beq_x, bin_x;
};

Assembled assemble(TemplateBuilder& tb, const CostWeights& weights, const MatrixXd& P, const NominalLayout& L) {
  Assembled a;
  a.Aeq.resize(tb.eq_rows, tb.n);
  a.Ain.resize(tb.in_rows, tb.n);
  a.Aeq.setFromTriplets(tb.eq.begin(), tb.eq.end());
  a.Ain.setFromTriplets(tb.in.begin(), tb.in.end());
  a.beq_x = MatrixXd::Zero(tb.eq_rows, L.nx);
  a.bin_x = MatrixXd::Zero(tb.in_rows, L.nx);
  for (const auto& [row, v] : tb.eq_x) a.beq_x.row(row) = v.transpose();
  for (const auto& [row, v] : tb.in_x) a.bin_x.row(row) = v.transpose();
  a.beq = Eigen::Map<VectorXd>(tb.eq_rhs.data(), tb.eq_rows);
  a.bin = Eigen::Map<VectorXd>(tb.in_rhs.data(), tb.in_rows);
  a.H = quadratic_cost(weights, P, L, tb.n);
  return a;
}

}  // namespace

MpcController make_tightened_mpc(ControllerKind kind, const LinearSystem& sys, const CostWeights& weights, int N,
                                 const VectorXd& t, const MatrixXd& P, const Polytope& terminal) {
  check_dimensions(sys, weights, N, P, terminal);
  if (t.size() != N * sys.nc()) throw ModelError("tightening vector has wrong length");
  const NominalLayout L{N, sys.nx(), sys.nu()};
  TemplateBuilder tb;
  tb.n = L.count();
  add_dynamics(tb, sys, L);
  for (int i = 0; i < N; ++i)
    for (int r = 0; r < sys.nc(); ++r) add_stage_row(tb, sys, L, i, r, sys.b[r] - t[i * sys.nc() + r]);
  const MatrixXd& Y = terminal.normals();
  for (int r = 0; r < Y.rows(); ++r) {
    const int row = tb.add_in(terminal.offsets()[r]);
    for (int k = 0; k < L.nx; ++k) tb.in_coef(row, L.x(N, k), Y(r, k));
  }
  MpcController c;
  c.kind_ = kind;
  c.N_ = N;
  c.nx_ = L.nx;
  c.nu_ = L.nu;
  c.Q_ = weights.Q;
  c.R_ = weights.R;
  c.P_ = P;
  auto a = assemble(tb, weights, P, L);
  c.load(tb.n, std::move(a.H), std::move(a.Aeq), std::move(a.beq), std::move(a.beq_x), std::move(a.Ain),
         std::move(a.bin), std::move(a.bin_x), {});
  return c;
}

MpcController make_fpd_mpc(const LinearSystem& sys, const CostWeights& weights, int N, const MatrixXd& P,
                           const Polytope& terminal) {
  check_dimensions(sys, weights, N, P, terminal);
  const NominalLayout L{N, sys.nx(), sys.nu()};
  const int nx = L.nx, nu = L.nu, nw = sys.nw(), nc = sys.nc();
  const MatrixXd& D = sys.W.normals();
  const VectorXd& dW = sys.W.offsets();
  const int nd = static_cast<int>(D.rows());
  const int gain_base = L.count();
  auto gain = [&](int l, int j, int a, int b) { return gain_base + (((l * (l - 1)) / 2 + j) * nu + a) * nx + b; };

  TemplateBuilder tb;
  tb.n = gain_base + nu * nx * (N * (N - 1)) / 2;
  std::vector<int> nonneg;
  add_dynamics(tb, sys, L);

  std::vector<MatrixXd> Apow(static_cast<std::size_t>(N + 1));
  Apow[0] = MatrixXd::Identity(nx, nx);
  for (int p = 1; p <= N; ++p) Apow[static_cast<std::size_t>(p)] = sys.A * Apow[static_cast<std::size_t>(p - 1)];

  // Robust row: h x_stage + h_u u_stage + max over entering w of the error terms <= rhs.
  // The error at stage i from w_j is (A^{i-1-j} + sum_{l=j+1}^{i-1} A^{i-1-l} B M_{l,j}) Bw w_j.
  auto robustify = [&](int row, int stage, const Eigen::RowVectorXd& h, const Eigen::RowVectorXd& hu) {
    for (int j = 0; j < stage; ++j) {
      const int lam = tb.n;
      tb.n += nd;
      for (int p = 0; p < nd; ++p) {
        nonneg.push_back(lam + p);
        tb.in_coef(row, lam + p, dW[p]);
      }
      const Eigen::RowVectorXd c0 = h * Apow[static_cast<std::size_t>(stage - 1 - j)] * sys.Bw;
      for (int q = 0; q < nw; ++q) {
        const int eq = tb.add_eq(c0[q]);
        for (int p = 0; p < nd; ++p) tb.eq_coef(eq, lam + p, D(p, q));
        for (int l = j + 1; l < stage; ++l) {
          const Eigen::RowVectorXd hb = h * Apow[static_cast<std::size_t>(stage - 1 - l)] * sys.B;
          for (int a = 0; a < nu; ++a)
            for (int b = 0; b < nx; ++b) tb.eq_coef(eq, gain(l, j, a, b), -hb[a] * sys.Bw(b, q));
        }
        if (stage < N && hu.size()) {
          for (int a = 0; a < nu; ++a)
            for (int b = 0; b < nx; ++b) tb.eq_coef(eq, gain(stage, j, a, b), -hu[a] * sys.Bw(b, q));
        }
      }
    }
  };

  for (int i = 0; i < N; ++i) {
    for (int r = 0; r < nc; ++r) {
      const int row = add_stage_row(tb, sys, L, i, r, sys.b[r]);
      robustify(row, i, sys.F.row(r), sys.G.row(r));
    }
  }
  const MatrixXd& Y = terminal.normals();
  for (int r = 0; r < Y.rows(); ++r) {
    const int row = tb.add_in(terminal.offsets()[r]);
    for (int k = 0; k < nx; ++k) tb.in_coef(row, L.x(N, k), Y(r, k));
    robustify(row, N, Y.row(r), Eigen::RowVectorXd());
  }

  MpcController c;
  c.kind_ = ControllerKind::kFpd;
  c.N_ = N;
  c.nx_ = nx;
  c.nu_ = nu;
  c.Q_ = weights.Q;
  c.R_ = weights.R;
  c.P_ = P;
  auto a = assemble(tb, weights, P, L);
  c.load(tb.n, std::move(a.H), std::move(a.Aeq), std::move(a.beq), std::move(a.beq_x), std::move(a.Ain),
         std::move(a.bin), std::move(a.bin_x), std::move(nonneg));
  return c;
}

MpcController make_controller(ControllerKind kind, const LinearSystem& sys, const CostWeights& weights,
                              const OfflineDesign& design) {
  const int N = design.N;
  const MatrixXd& P = design.terminal.P;
  switch (kind) {
    case ControllerKind::kOct:
      return make_tightened_mpc(kind, sys, weights, N, design.t.t, P, design.terminal.X_T);
    case ControllerKind::kTmpc:
      return make_tightened_mpc(kind, sys, weights, N, design.t_tmpc.t, P, design.terminal.X_T);
    case ControllerKind::kNominal:
      return make_tightened_mpc(kind, sys, weights, N, VectorXd::Zero(N * sys.nc()), P,
                                design_terminal_set(sys, design.terminal.K_f, VectorXd::Zero(sys.nc())));
    case ControllerKind::kFpd:
      return make_fpd_mpc(sys, weights, N, P, design.fpd_terminal_set);
  }
  throw std::invalid_argument("unknown controller kind");
}

MpcPlan shift_candidate(const LinearSystem& sys, const OfflineDesign& design, const MpcPlan& plan,
                        const VectorXd& w) {
  const int N = design.N;
  const auto phi = error_response(design.M, sys);
  const VectorXd bw = sys.Bw * w;
  MpcPlan next;
  next.x.resize(sys.nx(), N + 1);
  next.u.resize(sys.nu(), N);
  for (int i = 0; i < N; ++i) next.x.col(i) = plan.x.col(i + 1) + phi[static_cast<std::size_t>(i)] * bw;
  for (int i = 0; i < N - 1; ++i) next.u.col(i) = plan.u.col(i + 1) + design.M.block(i + 1) * bw;
  const MatrixXd& K = design.terminal.K_f;
  next.u.col(N - 1) = K * plan.x.col(N) + design.M.terminal * bw;
  next.x.col(N) = (sys.A + sys.B * K) * plan.x.col(N) + phi[static_cast<std::size_t>(N)] * bw;
  return next;
}

}  // namespace octmpc
