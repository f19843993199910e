#include "octmpc/prediction.hpp"

#include "octmpc/json_eigen.hpp"

namespace octmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd kron_identity(int n, const MatrixXd& M) {
  MatrixXd out = MatrixXd::Zero(n * M.rows(), n * M.cols());
  for (int i = 0; i < n; ++i) out.block(i * M.rows(), i * M.cols(), M.rows(), M.cols()) = M;
  return out;
}

VectorXd repeat(int n, const VectorXd& v) { return v.replicate(n, 1); }

void check_system(const LinearSystem& sys) {
  if (sys.A.rows() != sys.A.cols() || sys.B.rows() != sys.A.rows() || sys.Bw.rows() != sys.A.rows()) {
    throw ModelError("system matrices have inconsistent dimensions");
  }
}

}  // namespace

PredictionMatrices build_prediction(const LinearSystem& sys, int N) {
  if (N < 2) throw ModelError("prediction horizon must be at least 2");
  check_system(sys);
  const int nx = sys.nx(), nu = sys.nu();
  PredictionMatrices pm;
  pm.N = N;

  std::vector<MatrixXd> powers(N);
  powers[0] = MatrixXd::Identity(nx, nx);
  for (int k = 1; k < N; ++k) powers[k] = sys.A * powers[k - 1];

  pm.Cxx.resize(N * nx, nx);
  pm.Cxu = MatrixXd::Zero(N * nx, N * nu);
  pm.Cxw = MatrixXd::Zero(N * nx, N * nx);
  for (int i = 0; i < N; ++i) {
    pm.Cxx.middleRows(i * nx, nx) = powers[i];
    for (int j = 0; j < i; ++j) {
      pm.Cxu.block(i * nx, j * nu, nx, nu) = powers[i - j - 1] * sys.B;
      pm.Cxw.block(i * nx, j * nx, nx, nx) = powers[i - j - 1];
    }
  }
  pm.Bw_bold = kron_identity(N, sys.Bw);
  pm.Bw_bold_short = kron_identity(N - 1, sys.Bw);
  pm.F_bold = kron_identity(N, sys.F);
  pm.G_bold = kron_identity(N, sys.G);
  pm.b_bold = repeat(N, sys.b);
  pm.D_bold = kron_identity(N - 1, sys.W.normals());
  pm.d_bold = repeat(N - 1, sys.W.offsets());
  return pm;
}

const MatrixXd& DisturbanceFeedback::block(int m) const {
  if (m < 1 || m > horizon()) throw ModelError("disturbance feedback block index out of range");
  return m == horizon() ? terminal : blocks[static_cast<std::size_t>(m - 1)];
}

MatrixXd DisturbanceFeedback::expand() const {
  const int N = horizon();
  const auto nu = terminal.rows(), nx = terminal.cols();
  MatrixXd out = MatrixXd::Zero(N * nu, N * nx);
  for (int i = 1; i < N; ++i) {
    for (int l = 0; l < i; ++l) out.block(i * nu, l * nx, nu, nx) = blocks[static_cast<std::size_t>(i - l - 1)];
  }
  return out;
}

DisturbanceFeedback DisturbanceFeedback::from_matrix(const MatrixXd& M_off, int nu, int nx, MatrixXd terminal,
                                                     double tol) {
  if (nu <= 0 || nx <= 0 || M_off.rows() % nu != 0 || M_off.cols() % nx != 0 || M_off.rows() / nu != M_off.cols() / nx) {
    throw ModelError("M_off has the wrong shape");
  }
  const int N = static_cast<int>(M_off.rows() / nu);
  if (N < 2) throw ModelError("M_off needs a horizon of at least 2");
  DisturbanceFeedback M;
  for (int m = 1; m < N; ++m) M.blocks.push_back(M_off.block(m * nu, 0, nu, nx));
  M.terminal = std::move(terminal);
  if (M.terminal.rows() != nu || M.terminal.cols() != nx) throw ModelError("terminal block has the wrong shape");
  if ((M.expand() - M_off).cwiseAbs().maxCoeff() > tol) throw ModelError("M_off is not causal block Toeplitz");
  return M;
}

DisturbanceFeedback DisturbanceFeedback::zero(int N, int nu, int nx) {
  DisturbanceFeedback M;
  M.blocks.assign(static_cast<std::size_t>(N - 1), MatrixXd::Zero(nu, nx));
  M.terminal = MatrixXd::Zero(nu, nx);
  return M;
}

DisturbanceFeedback tmpc_feedback(const MatrixXd& K, const LinearSystem& sys, int N) {
  check_system(sys);
  if (K.rows() != sys.nu() || K.cols() != sys.nx()) throw ModelError("gain K has the wrong shape");
  if (N < 2) throw ModelError("prediction horizon must be at least 2");
  const MatrixXd Acl = sys.A + sys.B * K;
  DisturbanceFeedback M;
  MatrixXd Km = K;
  for (int m = 1; m < N; ++m) {
    M.blocks.push_back(Km);
    Km = Km * Acl;
  }
  M.terminal = Km;
  return M;
}

MatrixXd expand_tmpc_gain(const MatrixXd& K, const LinearSystem& sys, int N) {
  return tmpc_feedback(K, sys, N).expand();
}

std::vector<MatrixXd> error_response(const DisturbanceFeedback& M, const LinearSystem& sys) {
  check_system(sys);
  const int N = M.horizon();
  std::vector<MatrixXd> phi;
  phi.reserve(static_cast<std::size_t>(N + 1));
  phi.push_back(MatrixXd::Identity(sys.nx(), sys.nx()));
  for (int m = 1; m <= N; ++m) phi.push_back(sys.A * phi.back() + sys.B * M.block(m));
  return phi;
}

MatrixXd error_propagation_map(const DisturbanceFeedback& M, const LinearSystem& sys, int N) {
  if (M.horizon() != N) throw ModelError("disturbance feedback horizon differs from N");
  const int nx = sys.nx(), nw = sys.nw();
  const auto phi = error_response(M, sys);
  MatrixXd out = MatrixXd::Zero(N * nx, (N - 1) * nw);
  for (int i = 1; i < N; ++i) {
    for (int l = 0; l < i; ++l) out.block(i * nx, l * nw, nx, nw) = phi[static_cast<std::size_t>(i - l - 1)] * sys.Bw;
  }
  return out;
}

MatrixXd tightening_row_matrix(const DisturbanceFeedback& M, const LinearSystem& sys, const PredictionMatrices& pm) {
  const int N = pm.N, nx = sys.nx();
  if (M.horizon() != N) throw ModelError("disturbance feedback horizon differs from N");
  const MatrixXd Moff = M.expand().leftCols((N - 1) * nx);
  const MatrixXd Cxw = pm.Cxw.leftCols((N - 1) * nx);
  return (pm.F_bold * (Cxw + pm.Cxu * Moff) + pm.G_bold * Moff) * pm.Bw_bold_short;
}

void to_json(nlohmann::json& j, const DisturbanceFeedback& M) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : M.blocks) blocks.push_back(matrix_to_json(b));
  j = {{"blocks", blocks}, {"terminal", matrix_to_json(M.terminal)}};
}

void from_json(const nlohmann::json& j, DisturbanceFeedback& M) {
  M.blocks.clear();
  for (const auto& b : j.at("blocks")) M.blocks.push_back(matrix_from_json(b));
  M.terminal = matrix_from_json(j.at("terminal"));
  for (const auto& b : M.blocks) {
    if (b.rows() != M.terminal.rows() || b.cols() != M.terminal.cols()) {
      throw ModelError("disturbance feedback blocks have inconsistent shapes");
    }
  }
}

}  // namespace octmpc
