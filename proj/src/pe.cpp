#include "dmfm/pe.hpp"

#include <cmath>
#include <stdexcept>

#include "dmfm/linalg.hpp"

namespace dmfm::pe {

namespace {
constexpr double kVarFloor = 1e-8;
constexpr double kRidge = 1e-8;

void require_complete(const MatrixSeries& y, const char* what) {
  if (y.has_mask())
    throw std::invalid_argument(std::string(what) + ": series has missing entries");
  if (y.size() == 0) throw std::invalid_argument(std::string(what) + ": empty series");
}
}  // namespace

std::pair<MatrixXd, MatrixXd> second_moment_matrices(const MatrixSeries& y) {
  require_complete(y, "second_moment_matrices");
  const double norm = 1.0 / (static_cast<double>(y.rows()) * y.cols() * y.size());
  MatrixXd m1 = MatrixXd::Zero(y.rows(), y.rows());
  MatrixXd m2 = MatrixXd::Zero(y.cols(), y.cols());
  for (int t = 0; t < y.size(); ++t) {
    m1.noalias() += y.frames[t] * y.frames[t].transpose();
    m2.noalias() += y.frames[t].transpose() * y.frames[t];
  }
  m1 *= norm;
  m2 *= norm;
  m1 = 0.5 * (m1 + m1.transpose()).eval();
  m2 = 0.5 * (m2 + m2.transpose()).eval();
  return {m1, m2};
}

std::pair<MatrixXd, MatrixXd> projected_loadings(const MatrixSeries& y, int k1, int k2,
                                                 std::vector<std::string>* warnings) {
  require_complete(y, "projected_loadings");
  if (k1 < 1 || k2 < 1) throw std::invalid_argument("projected_loadings: k1, k2 must be >= 1");
  const double p1 = static_cast<double>(y.rows());
  const double p2 = static_cast<double>(y.cols());
  const double norm = 1.0 / (p1 * p2 * y.size());

  auto [m1, m2] = second_moment_matrices(y);
  auto gap_warn = [&](const linalg::SymEigPair& eig, int k, const char* side) {
    if (eig.values.size() > k && warnings != nullptr &&
        eig.values(k - 1) - eig.values(k) < 1e-12)
      warnings->push_back(std::string("projected_loadings: degenerate eigen-gap on ") + side);
  };

  const auto e1 = linalg::eig_sym_topk(m1, std::min<Eigen::Index>(k1 + 1, m1.rows()));
  const auto e2 = linalg::eig_sym_topk(m2, std::min<Eigen::Index>(k2 + 1, m2.rows()));
  gap_warn(e1, k1, "rows");
  gap_warn(e2, k2, "columns");
  const MatrixXd rbar = std::sqrt(p1) * e1.vectors.leftCols(k1);
  const MatrixXd cbar = std::sqrt(p2) * e2.vectors.leftCols(k2);

  // Second pass on the projected data.
  MatrixXd m1b = MatrixXd::Zero(y.rows(), y.rows());
  MatrixXd m2b = MatrixXd::Zero(y.cols(), y.cols());
  for (int t = 0; t < y.size(); ++t) {
    const MatrixXd x = y.frames[t] * cbar / p2;
    const MatrixXd z = y.frames[t].transpose() * rbar / p1;
    m1b.noalias() += x * x.transpose();
    m2b.noalias() += z * z.transpose();
  }
  m1b *= norm;
  m2b *= norm;
  m1b = 0.5 * (m1b + m1b.transpose()).eval();
  m2b = 0.5 * (m2b + m2b.transpose()).eval();

  const auto f1 = linalg::eig_sym_topk(m1b, std::min<Eigen::Index>(k1 + 1, m1b.rows()));
  const auto f2 = linalg::eig_sym_topk(m2b, std::min<Eigen::Index>(k2 + 1, m2b.rows()));
  gap_warn(f1, k1, "projected rows");
  gap_warn(f2, k2, "projected columns");
  return {std::sqrt(p1) * f1.vectors.leftCols(k1), std::sqrt(p2) * f2.vectors.leftCols(k2)};
}

std::vector<MatrixXd> project_factors(const MatrixSeries& y, const MatrixXd& R0,
                                      const MatrixXd& C0) {
  if (R0.rows() != y.rows() || C0.rows() != y.cols())
    throw std::invalid_argument("project_factors: loadings do not match series");
  const double scale = 1.0 / (static_cast<double>(y.rows()) * y.cols());
  std::vector<MatrixXd> out;
  out.reserve(y.size());
  for (int t = 0; t < y.size(); ++t)
    out.push_back(scale * (R0.transpose() * y.observed(t) * C0));
  return out;
}

std::pair<VectorXd, VectorXd> init_idio_variances(const MatrixSeries& y, const MatrixXd& R0,
                                                  const MatrixXd& C0,
                                                  const std::vector<MatrixXd>& Ftilde) {
  const Eigen::Index p1 = y.rows(), p2 = y.cols();
  const int T = y.size();
  VectorXd h = VectorXd::Zero(p1);
  VectorXd k = VectorXd::Zero(p2);
  std::vector<MatrixXd> resid(T);
  for (int t = 0; t < T; ++t) {
    resid[t] = y.observed(t) - R0 * Ftilde[t] * C0.transpose();
    h += resid[t].cwiseProduct(resid[t]).rowwise().sum();
  }
  h /= static_cast<double>(T) * p2;
  h = h.cwiseMax(kVarFloor);
  const VectorXd hinv = h.cwiseInverse();
  for (int t = 0; t < T; ++t)
    k += (hinv.asDiagonal() * resid[t].cwiseProduct(resid[t])).colwise().sum().transpose();
  k /= static_cast<double>(T) * p1;
  k = k.cwiseMax(kVarFloor);
  return {h, k};
}

std::pair<MatrixXd, MatrixXd> init_dynamics(const std::vector<MatrixXd>& Ftilde,
                                            std::vector<std::string>* warnings) {
  const int T = static_cast<int>(Ftilde.size());
  if (T < 2) throw std::invalid_argument("init_dynamics: need at least two factor observations");
  const Eigen::Index m = Ftilde.front().size();
  if (T < m + 2) throw std::invalid_argument("init_dynamics: series too short for VAR fit");

  MatrixXd cross = MatrixXd::Zero(m, m);
  MatrixXd gram = MatrixXd::Zero(m, m);
  for (int t = 1; t < T; ++t) {
    const VectorXd ft = linalg::vec(Ftilde[t]);
    const VectorXd fl = linalg::vec(Ftilde[t - 1]);
    cross.noalias() += ft * fl.transpose();
    gram.noalias() += fl * fl.transpose();
  }
  Eigen::FullPivLU<MatrixXd> lu(gram);
  if (lu.rcond() < 1e-12) {
    gram += kRidge * MatrixXd::Identity(m, m);
    if (warnings != nullptr) warnings->push_back("init_dynamics: singular Gram matrix, ridge added");
  }
  const MatrixXd ba = gram.ldlt().solve(cross.transpose()).transpose();

  MatrixXd qp = MatrixXd::Zero(m, m);
  for (int t = 1; t < T; ++t) {
    const VectorXd r = linalg::vec(Ftilde[t]) - ba * linalg::vec(Ftilde[t - 1]);
    qp.noalias() += r * r.transpose();
  }
  qp /= static_cast<double>(T - 1);
  qp = 0.5 * (qp + qp.transpose()).eval();
  return {ba, qp};
}

std::pair<int, int> eigenvalue_ratio_k(const MatrixSeries& y, int kmax) {
  if (kmax < 1 || kmax >= std::min(y.rows(), y.cols()))
    throw std::invalid_argument("eigenvalue_ratio_k: kmax out of range");
  MatrixSeries z = y;
  if (y.has_mask()) {
    for (int t = 0; t < y.size(); ++t) z.frames[t] = y.observed(t);
    z.mask.clear();
  }
  auto [m1, m2] = second_moment_matrices(z);
  auto pick = [kmax](const MatrixXd& m) {
    const auto eig = linalg::eig_sym_topk(m, std::min<Eigen::Index>(kmax + 1, m.rows()));
    // A later gap must beat the running best by a clear margin; flat noise
    // spectra (all ratios within a few percent) then resolve to the first gap.
    constexpr double kMargin = 1.1;
    int best = 1;
    double best_ratio = eig.values(0) / std::max(eig.values(1), 1e-300);
    for (int j = 2; j <= kmax; ++j) {
      const double ratio = eig.values(j - 1) / std::max(eig.values(j), 1e-300);
      if (ratio > kMargin * best_ratio) {
        best_ratio = ratio;
        best = j;
      }
    }
    return best;
  };
  return {pick(m1), pick(m2)};
}

PeInit pe_fit(const MatrixSeries& y, int k1, int k2) {
  PeInit init;
  std::tie(init.R0, init.C0) = projected_loadings(y, k1, k2, &init.warnings);
  init.Ftilde = project_factors(y, init.R0, init.C0);
  std::tie(init.H0diag, init.K0diag) = init_idio_variances(y, init.R0, init.C0, init.Ftilde);
  // tr(H) = p1: the scale moves into K, leaving kron(K, H) unchanged.
  const double mh = init.H0diag.mean();
  init.H0diag /= mh;
  init.K0diag = (init.K0diag * mh).cwiseMax(kVarFloor);
  init.H0diag = init.H0diag.cwiseMax(kVarFloor);
  std::tie(init.BA0, init.QP0) = init_dynamics(init.Ftilde, &init.warnings);
  return init;
}

PeInit zero_imputed_pe(const MatrixSeries& y, int k1, int k2) {
  MatrixSeries z;
  z.frames.reserve(y.size());
  for (int t = 0; t < y.size(); ++t) z.frames.push_back(y.observed(t));
  return pe_fit(z, k1, k2);
}

DmfmParams theta_from_pe(const PeInit& init, int k1, int k2) {
  DmfmParams theta;
  theta.R = init.R0;
  theta.C = init.C0;
  theta.Hdiag = init.H0diag;
  theta.Kdiag = init.K0diag;
  theta.BA = init.BA0;
  theta.QP = init.QP0;
  (void)k1;
  (void)k2;
  return theta;
}

}  // namespace dmfm::pe
