#include "octmpc/offline_design.hpp"

#include "octmpc/json_eigen.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <sstream>

namespace octmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd TighteningVector::stage(int i) const {
  if (i < 0 || i > N) throw std::out_of_range("tightening stage index out of range");
  if (i == N) return tail;
  return t.segment(i * nc, nc);
}

LqrResult solve_dare(const LinearSystem& sys, const CostWeights& w, int max_iter) {
  const MatrixXd& A = sys.A;
  const MatrixXd& B = sys.B;
  MatrixXd P = w.Q;
  LqrResult res;
  for (int it = 1; it <= max_iter; ++it) {
    const MatrixXd BtP = B.transpose() * P;
    const MatrixXd S = w.R + BtP * B;
    const MatrixXd K = -S.ldlt().solve(BtP * A);
    MatrixXd Pn = w.Q + A.transpose() * P * (A + B * K);
    Pn = 0.5 * (Pn + Pn.transpose());
    if (!Pn.allFinite()) break;
    const double change = (Pn - P).cwiseAbs().maxCoeff();
    P = std::move(Pn);
    if (change <= 1e-13 * (1.0 + P.cwiseAbs().maxCoeff())) {
      const MatrixXd BtPf = B.transpose() * P;
      res.K = -(w.R + BtPf * B).ldlt().solve(BtPf * A);
      res.P = P;
      res.iterations = it;
      const MatrixXd fixed = w.Q + A.transpose() * P * A -
                             A.transpose() * P * B * (w.R + BtPf * B).ldlt().solve(BtPf * A);
      res.residual = (fixed - P).cwiseAbs().maxCoeff();
      return res;
    }
  }
  throw DesignError(DesignError::Kind::kInvalidInput,
                    "Riccati iteration did not converge (is (A, B) stabilizable?)");
}

MatrixXd lqr_terminal_gain(const LinearSystem& sys, const CostWeights& weights) { return solve_dare(sys, weights).K; }

MatrixXd terminal_cost(const LinearSystem& sys, const CostWeights& w, const MatrixXd& K_f) {
  const MatrixXd Acl = sys.A + sys.B * K_f;
  if (spectral_radius(Acl) >= 1.0) {
    throw DesignError(DesignError::Kind::kInvalidInput, "terminal cost: A + B K_f is not Schur stable");
  }
  const auto n = Acl.rows();
  // (I - Acl' (x) Acl') vec(P) = vec(Q + K'RK)
  MatrixXd kron(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) kron.block(i * n, j * n, n, n) = Acl(j, i) * Acl.transpose();
  }
  const MatrixXd Qbar = w.Q + K_f.transpose() * w.R * K_f;
  const VectorXd vecP = (MatrixXd::Identity(n * n, n * n) - kron)
                            .partialPivLu()
                            .solve(Eigen::Map<const VectorXd>(Qbar.data(), n * n));
  MatrixXd P = Eigen::Map<const MatrixXd>(vecP.data(), n, n);
  return 0.5 * (P + P.transpose());
}

double lyapunov_residual(const LinearSystem& sys, const CostWeights& w, const MatrixXd& K_f, const MatrixXd& P) {
  const MatrixXd Acl = sys.A + sys.B * K_f;
  return (Acl.transpose() * P * Acl + w.Q + K_f.transpose() * w.R * K_f - P).norm();
}

namespace {

// Tightening increments for m = 1..N and, when Y is given, the certificates of
// Y Phi_{N+1} Bw.
TighteningVector compute_tightening(const LinearSystem& sys, const DisturbanceFeedback& M, const MatrixXd* Y) {
  const int N = M.horizon();
  const int nc = sys.nc(), nw = sys.nw(), nd = sys.W.num_rows();
  const auto phi = error_response(M, sys);
  MatrixXd rows(N * nc, nw);
  for (int m = 1; m <= N; ++m) {
    rows.middleRows((m - 1) * nc, nc) = (sys.F * phi[static_cast<std::size_t>(m - 1)] + sys.G * M.block(m)) * sys.Bw;
  }
  std::vector<SupportCertificate> certs;
  try {
    certs = support_rows_certificates(sys.W, rows);
  } catch (const PolytopeError& e) {
    throw DesignError(DesignError::Kind::kInvalidInput, std::string("tightening: ") + e.what());
  }
  auto cert = [&](int m, int r) -> const SupportCertificate& {
    return certs[static_cast<std::size_t>((m - 1) * nc + r)];
  };

  TighteningVector tv;
  tv.N = N;
  tv.nc = nc;
  tv.t = VectorXd::Zero(N * nc);
  for (int i = 1; i < N; ++i) {
    for (int r = 0; r < nc; ++r) tv.t[i * nc + r] = tv.t[(i - 1) * nc + r] + cert(i, r).value;
  }
  tv.tail.resize(nc);
  for (int r = 0; r < nc; ++r) tv.tail[r] = tv.t[(N - 1) * nc + r] + cert(N, r).value;

  tv.Z = MatrixXd::Zero(nd * (N - 1), nc * N);
  for (int i = 1; i < N; ++i) {
    for (int r = 0; r < nc; ++r) {
      for (int l = 0; l < i; ++l) tv.Z.block(l * nd, i * nc + r, nd, 1) = cert(i - l, r).multiplier;
    }
  }
  tv.Lambda1.resize(nc, nd);
  for (int r = 0; r < nc; ++r) tv.Lambda1.row(r) = cert(N, r).multiplier.transpose();
  if (Y != nullptr) {
    const MatrixXd yrows = *Y * phi.back() * sys.Bw;
    const auto ycerts = support_rows_certificates(sys.W, yrows);
    tv.Lambda2.resize(Y->rows(), nd);
    for (Eigen::Index q = 0; q < Y->rows(); ++q) tv.Lambda2.row(q) = ycerts[static_cast<std::size_t>(q)].multiplier.transpose();
  }
  return tv;
}

}  // namespace

TighteningVector tightening_from_feedback(const LinearSystem& sys, const DisturbanceFeedback& M) {
  return compute_tightening(sys, M, nullptr);
}

TighteningVector tmpc_tightening(const LinearSystem& sys, const MatrixXd& K, int N) {
  return compute_tightening(sys, tmpc_feedback(K, sys, N), nullptr);
}

SupportConstants terminal_support_constants(const Polytope& X_T, const LinearSystem& sys, const MatrixXd& K_f) {
  try {
    return {support_rows(X_T, sys.F + sys.G * K_f), support_rows(X_T, X_T.normals() * (sys.A + sys.B * K_f))};
  } catch (const EmptyPolytopeError&) {
    throw DesignError(DesignError::Kind::kTerminalSet, "terminal set is empty");
  } catch (const PolytopeError& e) {
    throw DesignError(DesignError::Kind::kTerminalSet, std::string("terminal support constants: ") + e.what());
  }
}

Polytope design_terminal_set(const LinearSystem& sys, const MatrixXd& K_f, const VectorXd& t_tail, const MatrixXd& E,
                             int max_iter) {
  if (t_tail.size() != sys.nc()) throw DesignError(DesignError::Kind::kInvalidInput, "terminal set: t_tail has wrong size");
  const MatrixXd Acl = sys.A + sys.B * K_f;
  const Polytope constraint(sys.F + sys.G * K_f, sys.b - t_tail);
  try {
    return max_admissible_invariant_set(Acl, constraint, sys.W, E, max_iter);
  } catch (const InvariantSetError& e) {
    throw DesignError(DesignError::Kind::kTerminalSet,
                      std::string("terminal set design failed (") + e.what() +
                          "); shorten the horizon N or relax the constraints");
  } catch (const PolytopeError& e) {
    throw DesignError(DesignError::Kind::kInvalidInput, std::string("terminal set design failed: ") + e.what());
  }
}

Polytope design_terminal_set(const LinearSystem& sys, const MatrixXd& K_f, const VectorXd& t_tail) {
  return design_terminal_set(sys, K_f, t_tail, MatrixXd::Zero(sys.nx(), sys.nw()));
}

std::string to_string(Fallback f) { return f == Fallback::kNone ? "none" : "cap-by-tmpc"; }

Fallback fallback_from_string(const std::string& s) {
  if (s == "none") return Fallback::kNone;
  if (s == "cap-by-tmpc") return Fallback::kCapByTmpc;
  throw std::invalid_argument("unknown fallback '" + s + "' (expected none or cap-by-tmpc)");
}

std::string to_string(TerminalImage t) { return t == TerminalImage::kNominal ? "nominal" : "tmpc-tail"; }

TerminalImage terminal_image_from_string(const std::string& s) {
  if (s == "nominal") return TerminalImage::kNominal;
  if (s == "tmpc-tail") return TerminalImage::kTmpcTail;
  throw std::invalid_argument("unknown terminal image '" + s + "' (expected nominal or tmpc-tail)");
}

namespace {

// Variable layout of the tightening SOCP.
struct SocpLayout {
  int N, nx, nu, nw, nc, nd, nt;
  int off_t, off_z, off_l1, off_l2, off_aux, gamma, total;
  bool weighted;

  SocpLayout(const LinearSystem& sys, int N_, int nt_, bool weighted_)
      : N(N_), nx(sys.nx()), nu(sys.nu()), nw(sys.nw()), nc(sys.nc()), nd(sys.W.num_rows()), nt(nt_),
        weighted(weighted_) {
    off_t = N * nu * nx;
    off_z = off_t + (N - 1) * nc;
    off_l1 = off_z + (N - 1) * nc * nd;
    off_l2 = off_l1 + nc * nd;
    off_aux = off_l2 + nt * nd;
    gamma = off_aux + (weighted ? (N - 1) * nc : 0);
    total = gamma + 1;
  }
  int m(int block, int a, int c) const { return (block - 1) * nu * nx + a * nx + c; }
  int t(int i, int r) const { return off_t + (i - 1) * nc + r; }
  int z(int block, int r, int k) const { return off_z + ((block - 1) * nc + r) * nd + k; }
  int l1(int r, int k) const { return off_l1 + r * nd + k; }
  int l2(int q, int k) const { return off_l2 + q * nd + k; }
  int aux(int i, int r) const { return off_aux + (i - 1) * nc + r; }
};

}  // namespace

TighteningSolution optimize_tightening(const LinearSystem& sys, int N, const TerminalIngredients& terminal,
                                       const VectorXd& t_cap, const TighteningOptions& options) {
  if (N < 2) throw DesignError(DesignError::Kind::kInvalidInput, "optimize_tightening: N must be at least 2");
  const MatrixXd& Y = terminal.Y();
  const VectorXd& zT = terminal.z();
  const bool weighted = options.weights.size() > 0;
  const SocpLayout L(sys, N, static_cast<int>(Y.rows()), weighted);
  if (weighted && options.weights.size() != N * L.nc) {
    throw DesignError(DesignError::Kind::kInvalidInput, "optimize_tightening: weights must have N*n_c entries");
  }
  const bool cap = options.fallback == Fallback::kCapByTmpc;
  if (cap && t_cap.size() != N * L.nc) {
    throw DesignError(DesignError::Kind::kInvalidInput, "optimize_tightening: t_cap must have N*n_c entries");
  }
  if (terminal.c_F.size() != L.nc || terminal.c_Y.size() != L.nt) {
    throw DesignError(DesignError::Kind::kInvalidInput, "optimize_tightening: terminal constants have wrong size");
  }

  const MatrixXd& D = sys.W.normals();
  const VectorXd& d = sys.W.offsets();
  std::vector<MatrixXd> Apow(static_cast<std::size_t>(N + 1));
  Apow[0] = MatrixXd::Identity(L.nx, L.nx);
  for (int k = 1; k <= N; ++k) Apow[static_cast<std::size_t>(k)] = sys.A * Apow[static_cast<std::size_t>(k - 1)];

  std::vector<Triplet> eq, in;
  std::vector<double> eq_rhs, in_rhs;

  // -[(Lrow Phi_m + grow M_m) Bw](c), linear part, into row `row`; returns the constant part.
  auto feedback_terms = [&](std::vector<Triplet>& trip, int row, const Eigen::RowVectorXd& Lrow,
                            const Eigen::RowVectorXd* grow, int m, int c) {
    for (int j = 1; j <= m - 1; ++j) {
      const Eigen::RowVectorXd v = Lrow * Apow[static_cast<std::size_t>(m - 1 - j)] * sys.B;
      for (int a = 0; a < L.nu; ++a) {
        for (int cp = 0; cp < L.nx; ++cp) {
          const double coef = v[a] * sys.Bw(cp, c);
          if (coef != 0.0) trip.emplace_back(row, L.m(j, a, cp), -coef);
        }
      }
    }
    if (grow != nullptr) {
      for (int a = 0; a < L.nu; ++a) {
        for (int cp = 0; cp < L.nx; ++cp) {
          const double coef = (*grow)[a] * sys.Bw(cp, c);
          if (coef != 0.0) trip.emplace_back(row, L.m(m, a, cp), -coef);
        }
      }
    }
    return (Lrow * Apow[static_cast<std::size_t>(m - 1)] * sys.Bw)(c);
  };

  int row = 0;
  // dual certificates of each tightening increment
  for (int m = 1; m < N; ++m) {
    for (int r = 0; r < L.nc; ++r) {
      const Eigen::RowVectorXd Fr = sys.F.row(r), Gr = sys.G.row(r);
      for (int c = 0; c < L.nw; ++c) {
        for (int k = 0; k < L.nd; ++k) {
          if (D(k, c) != 0.0) eq.emplace_back(row, L.z(m, r, k), D(k, c));
        }
        eq_rhs.push_back(feedback_terms(eq, row, Fr, &Gr, m, c));
        ++row;
      }
    }
  }
  // t_i = t_{i-1} + d' z_i
  for (int i = 1; i < N; ++i) {
    for (int r = 0; r < L.nc; ++r) {
      eq.emplace_back(row, L.t(i, r), 1.0);
      if (i > 1) eq.emplace_back(row, L.t(i - 1, r), -1.0);
      for (int k = 0; k < L.nd; ++k) {
        if (d[k] != 0.0) eq.emplace_back(row, L.z(i, r, k), -d[k]);
      }
      eq_rhs.push_back(0.0);
      ++row;
    }
  }
  // Lambda1 D = (F Phi_N + G M_N) Bw
  for (int r = 0; r < L.nc; ++r) {
    const Eigen::RowVectorXd Fr = sys.F.row(r), Gr = sys.G.row(r);
    for (int c = 0; c < L.nw; ++c) {
      for (int k = 0; k < L.nd; ++k) {
        if (D(k, c) != 0.0) eq.emplace_back(row, L.l1(r, k), D(k, c));
      }
      eq_rhs.push_back(feedback_terms(eq, row, Fr, &Gr, N, c));
      ++row;
    }
  }
  // Lambda2 D = Y Phi_{N+1} Bw
  for (int q = 0; q < L.nt; ++q) {
    const Eigen::RowVectorXd Yq = Y.row(q);
    for (int c = 0; c < L.nw; ++c) {
      for (int k = 0; k < L.nd; ++k) {
        if (D(k, c) != 0.0) eq.emplace_back(row, L.l2(q, k), D(k, c));
      }
      eq_rhs.push_back(feedback_terms(eq, row, Yq, nullptr, N + 1, c));
      ++row;
    }
  }
  if (weighted) {
    for (int i = 1; i < N; ++i) {
      for (int r = 0; r < L.nc; ++r) {
        eq.emplace_back(row, L.aux(i, r), 1.0);
        eq.emplace_back(row, L.t(i, r), -options.weights[i * L.nc + r]);
        eq_rhs.push_back(0.0);
        ++row;
      }
    }
  }
  const int n_eq = row;

  row = 0;
  for (int i = 1; i < N; ++i) {
    for (int r = 0; r < L.nc; ++r) {
      in.emplace_back(row++, L.t(i, r), 1.0);
      in_rhs.push_back(sys.b[r]);
      if (cap) {
        in.emplace_back(row++, L.t(i, r), 1.0);
        in_rhs.push_back(t_cap[i * L.nc + r]);
      }
    }
  }
  for (int r = 0; r < L.nc; ++r) {
    for (int k = 0; k < L.nd; ++k) {
      if (d[k] != 0.0) in.emplace_back(row, L.l1(r, k), d[k]);
    }
    in.emplace_back(row++, L.t(N - 1, r), 1.0);
    in_rhs.push_back(sys.b[r] - terminal.c_F[r]);
  }
  for (int q = 0; q < L.nt; ++q) {
    for (int k = 0; k < L.nd; ++k) {
      if (d[k] != 0.0) in.emplace_back(row, L.l2(q, k), d[k]);
    }
    in_rhs.push_back(zT[q] - terminal.c_Y[q]);
    ++row;
  }
  const int n_in = row;

  ConicProblem pr(L.total);
  pr.cost = VectorXd::Zero(L.total);
  pr.cost[L.gamma] = 1.0;
  pr.eq_matrix = SparseMatrix(n_eq, L.total);
  pr.eq_matrix.setFromTriplets(eq.begin(), eq.end());
  pr.eq_rhs = Eigen::Map<const VectorXd>(eq_rhs.data(), n_eq);
  pr.ineq_matrix = SparseMatrix(n_in, L.total);
  pr.ineq_matrix.setFromTriplets(in.begin(), in.end());
  pr.ineq_rhs = Eigen::Map<const VectorXd>(in_rhs.data(), n_in);
  for (int v = L.off_t; v < L.off_aux; ++v) pr.nonneg.push_back(v);
  std::vector<int> cone{L.gamma};
  for (int i = 1; i < N; ++i) {
    for (int r = 0; r < L.nc; ++r) cone.push_back(weighted ? L.aux(i, r) : L.t(i, r));
  }
  pr.cones.push_back(std::move(cone));

  TighteningSolution out;
  out.socp = solve(pr, options.solver);
  if (out.socp.status == SolveStatus::kInfeasible) {
    throw DesignError(DesignError::Kind::kInfeasible, "tightening SOCP is infeasible");
  }
  if (!out.socp.optimal()) {
    std::ostringstream os;
    os << "tightening SOCP failed: status " << to_string(out.socp.status) << ", iterations " << out.socp.iterations
       << ", primal residual " << out.socp.primal_residual << ", dual residual " << out.socp.dual_residual
       << ", gap " << out.socp.gap;
    throw DesignError(DesignError::Kind::kSolverFailure, os.str());
  }
  const VectorXd& x = out.socp.primal;
  out.M.blocks.clear();
  for (int m = 1; m <= N; ++m) {
    MatrixXd Mm(L.nu, L.nx);
    for (int a = 0; a < L.nu; ++a) {
      for (int c = 0; c < L.nx; ++c) Mm(a, c) = x[L.m(m, a, c)];
    }
    if (m < N) {
      out.M.blocks.push_back(Mm);
    } else {
      out.M.terminal = Mm;
    }
  }
  out.objective = out.socp.objective;
  out.t = compute_tightening(sys, out.M, &Y);
  return out;
}

OfflineDesign design_offline(const LinearSystem& sys, const CostWeights& weights, int N, const DesignOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& rep : {validate(sys), validate(weights, sys.nx(), sys.nu())}) {
    if (!rep.ok()) {
      for (const auto& issue : rep.issues) {
        if (issue.severity == Severity::kError) throw DesignError(DesignError::Kind::kInvalidInput, issue.message);
      }
    }
  }
  if (N < 2) throw DesignError(DesignError::Kind::kInvalidInput, "horizon N must be at least 2");

  OfflineDesign out;
  out.N = N;
  out.fallback = options.tightening.fallback;
  out.terminal.K_f = lqr_terminal_gain(sys, weights);
  out.terminal.P = terminal_cost(sys, weights, out.terminal.K_f);
  out.t_tmpc = tmpc_tightening(sys, out.terminal.K_f, N);

  const MatrixXd Acl = sys.A + sys.B * out.terminal.K_f;
  MatrixXd AclN = MatrixXd::Identity(sys.nx(), sys.nx());
  for (int k = 0; k < N; ++k) AclN = Acl * AclN;
  Polytope X_T;
  if (options.terminal_image == TerminalImage::kTmpcTail) {
    X_T = design_terminal_set(sys, out.terminal.K_f, out.t_tmpc.tail, AclN * sys.Bw, options.max_invariant_iter);
  } else {
    X_T = design_terminal_set(sys, out.terminal.K_f, VectorXd::Zero(sys.nc()), MatrixXd::Zero(sys.nx(), sys.nw()),
                              options.max_invariant_iter);
  }
  out.fpd_terminal_set =
      design_terminal_set(sys, out.terminal.K_f, VectorXd::Zero(sys.nc()), sys.Bw, options.max_invariant_iter);

  double scale = 1.0;
  for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
    const Polytope X = attempt == 0 ? X_T : Polytope(X_T.normals(), X_T.offsets() * scale);
    const auto consts = terminal_support_constants(X, sys, out.terminal.K_f);
    TerminalIngredients term{out.terminal.K_f, out.terminal.P, X, consts.c_F, consts.c_Y};
    try {
      auto sol = optimize_tightening(sys, N, term, out.t_tmpc.t, options.tightening);
      out.terminal = std::move(term);
      out.M = std::move(sol.M);
      out.t = std::move(sol.t);
      out.socp_status = to_string(sol.socp.status);
      out.socp_iterations = sol.socp.iterations;
      out.socp_objective = sol.objective;
      out.retries = attempt;
      out.z_scale = scale;
      out.design_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      return out;
    } catch (const DesignError& e) {
      if (e.kind != DesignError::Kind::kInfeasible || attempt == options.max_retries) throw;
    }
    scale *= options.retry_scale;
  }
  throw DesignError(DesignError::Kind::kInfeasible, "tightening SOCP infeasible after retries");
}

void to_json(nlohmann::json& j, const TighteningVector& t) {
  j = {{"N", t.N},
       {"nc", t.nc},
       {"t", vector_to_json(t.t)},
       {"tail", vector_to_json(t.tail)},
       {"Z", matrix_to_json(t.Z)},
       {"Lambda1", matrix_to_json(t.Lambda1)},
       {"Lambda2", matrix_to_json(t.Lambda2)},
       {"norm", t.norm()}};
}

void from_json(const nlohmann::json& j, TighteningVector& t) {
  t.N = j.at("N").get<int>();
  t.nc = j.at("nc").get<int>();
  t.t = vector_from_json(j.at("t"));
  t.tail = vector_from_json(j.at("tail"));
  t.Z = matrix_from_json(j.at("Z"));
  t.Lambda1 = matrix_from_json(j.at("Lambda1"));
  t.Lambda2 = matrix_from_json(j.at("Lambda2"));
  if (t.t.size() != t.N * t.nc || t.tail.size() != t.nc) throw std::invalid_argument("tightening vector has wrong size");
}

void to_json(nlohmann::json& j, const OfflineDesign& d) {
  j = {{"N", d.N},
       {"fallback", to_string(d.fallback)},
       {"K_f", matrix_to_json(d.terminal.K_f)},
       {"P", matrix_to_json(d.terminal.P)},
       {"Y", matrix_to_json(d.terminal.Y())},
       {"z", vector_to_json(d.terminal.z())},
       {"c_F", vector_to_json(d.terminal.c_F)},
       {"c_Y", vector_to_json(d.terminal.c_Y)},
       {"M", d.M},
       {"t", d.t},
       {"t_tmpc", d.t_tmpc},
       {"fpd_terminal_set", d.fpd_terminal_set},
       {"solver",
        {{"status", d.socp_status},
         {"iterations", d.socp_iterations},
         {"objective", d.socp_objective},
         {"retries", d.retries},
         {"z_scale", d.z_scale},
         {"seconds", d.design_seconds}}}};
}

void from_json(const nlohmann::json& j, OfflineDesign& d) {
  d.N = j.at("N").get<int>();
  d.fallback = fallback_from_string(j.at("fallback").get<std::string>());
  d.terminal.K_f = matrix_from_json(j.at("K_f"));
  d.terminal.P = matrix_from_json(j.at("P"));
  d.terminal.X_T = Polytope(matrix_from_json(j.at("Y")), vector_from_json(j.at("z")));
  d.terminal.c_F = vector_from_json(j.at("c_F"));
  d.terminal.c_Y = vector_from_json(j.at("c_Y"));
  d.M = j.at("M").get<DisturbanceFeedback>();
  d.t = j.at("t").get<TighteningVector>();
  d.t_tmpc = j.at("t_tmpc").get<TighteningVector>();
  d.fpd_terminal_set = j.at("fpd_terminal_set").get<Polytope>();
  const auto& s = j.at("solver");
  d.socp_status = s.at("status").get<std::string>();
  d.socp_iterations = s.at("iterations").get<int>();
  d.socp_objective = s.at("objective").get<double>();
  d.retries = s.at("retries").get<int>();
  d.z_scale = s.at("z_scale").get<double>();
  d.design_seconds = s.at("seconds").get<double>();
  if (d.M.horizon() != d.N || d.t.N != d.N || d.t_tmpc.N != d.N) {
    throw std::invalid_argument("design artifact: horizon mismatch");
  }
}

}  // namespace octmpc
