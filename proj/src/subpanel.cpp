#include <cmath>
#include <vector>

#include "dmfm/em.hpp"
#include "dmfm/linalg.hpp"
#include "dmfm/pe.hpp"

namespace dmfm::pe {

namespace {

constexpr double kVarFloor = 1e-8;

// Least squares of the observed scalars on the given regressors;
// falls back to zero (flagged by the caller) when nothing is observed.
Eigen::VectorXd ls_fit(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs) {
  Eigen::MatrixXd g = gram;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(g);
  if (!lu.isInvertible() || lu.rcond() < 1e-12)
    g += 1e-8 * Eigen::MatrixXd::Identity(g.rows(), g.cols());
  return g.ldlt().solve(rhs);
}

// Thin QR with the largest-|entry|-positive sign convention applied to Q.
void signed_qr(const Eigen::MatrixXd& m, Eigen::MatrixXd& q, Eigen::MatrixXd& u) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  const Eigen::Index k = m.cols();
  q = qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), k);
  u = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::Index imax = 0;
    for (Eigen::Index i = 1; i < q.rows(); ++i)
      if (std::abs(q(i, c)) > std::abs(q(imax, c))) imax = i;
    if (q(imax, c) < 0.0) {
      q.col(c) = -q.col(c);
      u.row(c) = -u.row(c);
    }
  }
}

}  // namespace

PeInit balanced_subpanel_init(const MatrixSeries& y, int k1, int k2) {
  if (!y.has_mask()) return pe_fit(y, k1, k2);
  const int T = y.size();
  const int p1 = static_cast<int>(y.rows());
  const int p2 = static_cast<int>(y.cols());

  // Cells missing at any point in time disqualify their row or column.
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(p1, p2);
  for (int t = 0; t < T; ++t)
    bad = (bad.array().max(1.0 - y.mask[t].array())).matrix();

  std::vector<char> keep_row(p1, 1), keep_col(p2, 1);
  for (;;) {
    double best_row = 0.0, best_col = 0.0;
    int row_idx = -1, col_idx = -1;
    int ncols = 0, nrows = 0;
    for (int j = 0; j < p2; ++j) ncols += keep_col[j];
    for (int i = 0; i < p1; ++i) nrows += keep_row[i];
    if (ncols == 0 || nrows == 0) break;
    for (int i = 0; i < p1; ++i) {
      if (!keep_row[i]) continue;
      double cnt = 0.0;
      for (int j = 0; j < p2; ++j)
        if (keep_col[j]) cnt += bad(i, j);
      const double frac = cnt / ncols;
      if (frac > best_row) {
        best_row = frac;
        row_idx = i;
      }
    }
    for (int j = 0; j < p2; ++j) {
      if (!keep_col[j]) continue;
      double cnt = 0.0;
      for (int i = 0; i < p1; ++i)
        if (keep_row[i]) cnt += bad(i, j);
      const double frac = cnt / nrows;
      if (frac > best_col) {
        best_col = frac;
        col_idx = j;
      }
    }
    if (best_row == 0.0 && best_col == 0.0) break;  // fully observed now
    if (best_col >= best_row)
      keep_col[col_idx] = 0;
    else
      keep_row[row_idx] = 0;
  }

  std::vector<int> rows, cols;
  for (int i = 0; i < p1; ++i)
    if (keep_row[i]) rows.push_back(i);
  for (int j = 0; j < p2; ++j)
    if (keep_col[j]) cols.push_back(j);

  if (static_cast<int>(rows.size()) < k1 + 1 || static_cast<int>(cols.size()) < k2 + 1) {
    PeInit init = zero_imputed_pe(y, k1, k2);
    init.warnings.push_back("balanced_subpanel_init: no qualifying subpanel, zero-imputed fallback");
    return init;
  }

  MatrixSeries sub;
  sub.frames.reserve(T);
  for (int t = 0; t < T; ++t) {
    Eigen::MatrixXd f(rows.size(), cols.size());
    for (size_t a = 0; a < rows.size(); ++a)
      for (size_t b = 0; b < cols.size(); ++b) f(a, b) = y.frames[t](rows[a], cols[b]);
    sub.frames.push_back(std::move(f));
  }

  em::EmConfig sub_cfg;
  sub_cfg.k1 = k1;
  sub_cfg.k2 = k2;
  sub_cfg.eps = 1e-10;
  sub_cfg.n_max = 5;
  const em::EmReport sub_rep = em::run_em(sub, sub_cfg);

  PeInit init;
  init.warnings = sub_rep.warnings;

  // Extend loadings to the dropped rows/columns by least squares of the
  // observed entries on the smoothed factors.
  Eigen::MatrixXd re = Eigen::MatrixXd::Zero(p1, k1);
  Eigen::MatrixXd ce = Eigen::MatrixXd::Zero(p2, k2);
  for (size_t a = 0; a < rows.size(); ++a) re.row(rows[a]) = sub_rep.theta.R.row(a);
  for (size_t b = 0; b < cols.size(); ++b) ce.row(cols[b]) = sub_rep.theta.C.row(b);

  for (int i = 0; i < p1; ++i) {
    if (keep_row[i]) continue;
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(k1, k1);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k1);
    for (int t = 0; t < T; ++t)
      for (size_t b = 0; b < cols.size(); ++b) {
        const int j = cols[b];
        if (y.mask[t](i, j) <= 0.5) continue;
        const Eigen::VectorXd x = sub_rep.F_hat[t] * ce.row(j).transpose();
        gram.noalias() += x * x.transpose();
        rhs += x * y.frames[t](i, j);
      }
    if (rhs.isZero(0.0))
      init.warnings.push_back("balanced_subpanel_init: row " + std::to_string(i + 1) +
                              " has no observed cells");
    re.row(i) = ls_fit(gram, rhs).transpose();
  }
  for (int j = 0; j < p2; ++j) {
    if (keep_col[j]) continue;
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(k2, k2);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k2);
    for (int t = 0; t < T; ++t)
      for (size_t a = 0; a < rows.size(); ++a) {
        const int i = rows[a];
        if (y.mask[t](i, j) <= 0.5) continue;
        const Eigen::VectorXd x = sub_rep.F_hat[t].transpose() * re.row(i).transpose();
        gram.noalias() += x * x.transpose();
        rhs += x * y.frames[t](i, j);
      }
    if (rhs.isZero(0.0))
      init.warnings.push_back("balanced_subpanel_init: column " + std::to_string(j + 1) +
                              " has no observed cells");
    ce.row(j) = ls_fit(gram, rhs).transpose();
  }

  // Restore the sqrt(p) * orthonormal scaling, rotating the factor path so
  // the reconstructed signal is unchanged.
  Eigen::MatrixXd q1, u1, q2, u2;
  signed_qr(re, q1, u1);
  signed_qr(ce, q2, u2);
  const double sp1 = std::sqrt(static_cast<double>(p1));
  const double sp2 = std::sqrt(static_cast<double>(p2));
  init.R0 = sp1 * q1;
  init.C0 = sp2 * q2;
  init.Ftilde.reserve(T);
  for (int t = 0; t < T; ++t)
    init.Ftilde.push_back(u1 * sub_rep.F_hat[t] * u2.transpose() / (sp1 * sp2));

  // Idiosyncratic variances from the observed residuals.
  Eigen::VectorXd hnum = Eigen::VectorXd::Zero(p1), hden = Eigen::VectorXd::Zero(p1);
  std::vector<Eigen::MatrixXd> resid(T);
  for (int t = 0; t < T; ++t) {
    resid[t] = y.mask[t].cwiseProduct(y.observed(t) -
                                      init.R0 * init.Ftilde[t] * init.C0.transpose());
    hnum += resid[t].cwiseProduct(resid[t]).rowwise().sum();
    hden += y.mask[t].rowwise().sum();
  }
  init.H0diag = (hnum.array() / hden.array().max(1.0)).matrix().cwiseMax(kVarFloor);
  const Eigen::VectorXd hinv = init.H0diag.cwiseInverse();
  Eigen::VectorXd knum = Eigen::VectorXd::Zero(p2), kden = Eigen::VectorXd::Zero(p2);
  for (int t = 0; t < T; ++t) {
    knum += (hinv.asDiagonal() * resid[t].cwiseProduct(resid[t])).colwise().sum().transpose();
    kden += y.mask[t].colwise().sum().transpose();
  }
  init.K0diag = (knum.array() / kden.array().max(1.0)).matrix().cwiseMax(kVarFloor);
  const double mh = init.H0diag.mean();
  init.H0diag /= mh;
  init.K0diag = (init.K0diag * mh).cwiseMax(kVarFloor);
  init.H0diag = init.H0diag.cwiseMax(kVarFloor);

  std::tie(init.BA0, init.QP0) = init_dynamics(init.Ftilde, &init.warnings);
  return init;
}

}  // namespace dmfm::pe
