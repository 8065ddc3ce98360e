#include "dmfm/kalman.hpp"

#include <cmath>

#include "dmfm/linalg.hpp"

namespace dmfm::kalman {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

inline void symmetrize(MatrixXd& m) { m = 0.5 * (m + m.transpose()).eval(); }
}  // namespace

StateSpace build_state_space(const DmfmParams& theta, const VectorXd& f0, const MatrixXd& Pi0) {
  const int p1 = theta.p1(), p2 = theta.p2();
  if (theta.Hdiag.size() != p1 || theta.Kdiag.size() != p2)
    throw std::invalid_argument("build_state_space: variance diagonals do not match loadings");
  if ((theta.Hdiag.array() <= 0.0).any() || (theta.Kdiag.array() <= 0.0).any())
    throw std::invalid_argument("build_state_space: observation noise diagonal must be positive");
  const int m = theta.k1() * theta.k2();
  if (theta.BA.rows() != m || theta.QP.rows() != m || f0.size() != m || Pi0.rows() != m)
    throw std::invalid_argument("build_state_space: state dimension mismatch");

  StateSpace ss;
  ss.Lambda = linalg::kron(theta.C, theta.R);
  ss.obs_noise_diag.resize(p1 * p2);
  for (int j = 0; j < p2; ++j)
    for (int i = 0; i < p1; ++i)
      ss.obs_noise_diag(j * p1 + i) = theta.Kdiag(j) * theta.Hdiag(i);
  ss.Trans = theta.BA;
  ss.StateCov = theta.QP;
  ss.f0 = f0;
  ss.Pi0 = Pi0;
  return ss;
}

FilterResult filter(const MatrixSeries& y, const StateSpace& ss) {
  const int T = y.size();
  const int m = ss.state_dim();
  const Eigen::Index p1 = y.rows(), p2 = y.cols();
  if (p1 * p2 != ss.obs_dim())
    throw std::invalid_argument("filter: observation dimension mismatch");

  FilterResult out;
  out.f_pred.reserve(T);
  out.f_filt.reserve(T);
  out.P_pred.reserve(T);
  out.P_filt.reserve(T);
  (void)m;

  VectorXd f = ss.f0;
  MatrixXd P = ss.Pi0;
  for (int t = 0; t < T; ++t) {
    f = ss.Trans * f;
    P = ss.Trans * P * ss.Trans.transpose() + ss.StateCov;
    symmetrize(P);
    out.f_pred.push_back(f);
    out.P_pred.push_back(P);

    const MatrixXd yt = y.observed(t);
    const MatrixXd wt = y.mask_at(t);
    for (Eigen::Index j = 0; j < p2; ++j)
      for (Eigen::Index i = 0; i < p1; ++i) {
        if (wt(i, j) <= 0.5) continue;
        const Eigen::Index row = j * p1 + i;
        const VectorXd lam = ss.Lambda.row(row).transpose();
        const VectorXd pl = P * lam;
        const double s = lam.dot(pl) + ss.obs_noise_diag(row);
        const double v = yt(i, j) - lam.dot(f);
        if (!std::isfinite(v) || !std::isfinite(s) || s <= 0.0)
          throw NumericalError(t, "filter: non-finite innovation at t=" + std::to_string(t));
        const VectorXd gain = pl / s;
        f += gain * v;
        P -= gain * pl.transpose();
        symmetrize(P);
        out.loglik += -0.5 * (kLog2Pi + std::log(s) + v * v / s);
      }
    out.f_filt.push_back(f);
    out.P_filt.push_back(P);
  }
  return out;
}

SmootherOutput smooth(const MatrixSeries& y, const StateSpace& ss) {
  const int T = y.size();
  FilterResult fr = filter(y, ss);

  SmootherOutput out;
  out.loglik = fr.loglik;
  out.f_filt_last = fr.f_filt[T - 1];
  out.P_filt_last = fr.P_filt[T - 1];
  out.f_sm.resize(T);
  out.Pi_sm.resize(T);
  out.Delta_sm.resize(T);

  out.f_sm[T - 1] = fr.f_filt[T - 1];
  out.Pi_sm[T - 1] = fr.P_filt[T - 1];

  for (int t = T - 2; t >= 0; --t) {
    const MatrixXd jt = fr.P_filt[t] * ss.Trans.transpose() *
                        fr.P_pred[t + 1].ldlt().solve(MatrixXd::Identity(ss.state_dim(), ss.state_dim()));
    out.f_sm[t] = fr.f_filt[t] + jt * (out.f_sm[t + 1] - fr.f_pred[t + 1]);
    MatrixXd pi = fr.P_filt[t] + jt * (out.Pi_sm[t + 1] - fr.P_pred[t + 1]) * jt.transpose();
    symmetrize(pi);
    out.Pi_sm[t] = pi;
    out.Delta_sm[t + 1] = out.Pi_sm[t + 1] * jt.transpose();
  }
  const MatrixXd j0 = ss.Pi0 * ss.Trans.transpose() *
                      fr.P_pred[0].ldlt().solve(MatrixXd::Identity(ss.state_dim(), ss.state_dim()));
  out.f0_sm = ss.f0 + j0 * (out.f_sm[0] - fr.f_pred[0]);
  out.Delta_sm[0] = out.Pi_sm[0] * j0.transpose();
  return out;
}

Forecast forecast_one_step(const StateSpace& ss, const VectorXd& f_filt_last, int p1, int p2) {
  Forecast out;
  out.f_next = ss.Trans * f_filt_last;
  out.signal = linalg::unvec(ss.Lambda * out.f_next, p1, p2);
  return out;
}

}  // namespace dmfm::kalman
