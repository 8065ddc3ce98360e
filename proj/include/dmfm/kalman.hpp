#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmfm/params.hpp"
#include "dmfm/series.hpp"

namespace dmfm::kalman {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Vectorized linear-Gaussian state space: y_t = Lambda f_t + e_t with
// diagonal observation noise, f_t = Trans f_{t-1} + u_t.
struct StateSpace {
  MatrixXd Lambda;          // (p1 p2) x (k1 k2), kron(C, R)
  VectorXd obs_noise_diag;  // p1 p2, vec of outer(Hdiag, Kdiag)
  MatrixXd Trans;           // kron(B, A)
  MatrixXd StateCov;        // kron(Q, P)
  VectorXd f0;              // initial state mean
  MatrixXd Pi0;             // initial state covariance

  int state_dim() const { return static_cast<int>(Trans.rows()); }
  int obs_dim() const { return static_cast<int>(Lambda.rows()); }
};

struct NumericalError : std::runtime_error {
  int t;
  NumericalError(int t_, const std::string& msg) : std::runtime_error(msg), t(t_) {}
};

struct FilterResult {
  std::vector<VectorXd> f_pred, f_filt;  // T entries each
  std::vector<MatrixXd> P_pred, P_filt;
  double loglik = 0.0;  // prediction-error decomposition over observed entries
};

struct SmootherOutput {
  std::vector<VectorXd> f_sm;      // f_{t|T}
  std::vector<MatrixXd> Pi_sm;     // Pi_{t|T}
  std::vector<MatrixXd> Delta_sm;  // Delta_sm[t] = Cov(f_{t+1}, f_t | Y) for t+1, i.e.
                                   // entry t holds the cross-covariance of states t and t-1
                                   // (entry 0: states 1 and 0, the pre-sample state)
  VectorXd f0_sm;                  // smoothed pre-sample state
  VectorXd f_filt_last;
  MatrixXd P_filt_last;
  double loglik = 0.0;
};

StateSpace build_state_space(const DmfmParams& theta, const VectorXd& f0, const MatrixXd& Pi0);

// Sequential univariate updates, one observed scalar at a time; masked
// entries are skipped. Exact because the observation noise is diagonal.
FilterResult filter(const MatrixSeries& y, const StateSpace& ss);

// Fixed-interval smoother with the lag-one cross-covariance recursion.
SmootherOutput smooth(const MatrixSeries& y, const StateSpace& ss);

struct Forecast {
  VectorXd f_next;   // f_{T+1|T}
  MatrixXd signal;   // unvec(Lambda f_{T+1|T}), p1 x p2
};
Forecast forecast_one_step(const StateSpace& ss, const VectorXd& f_filt_last, int p1, int p2);

}  // namespace dmfm::kalman
