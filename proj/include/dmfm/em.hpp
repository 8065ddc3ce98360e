#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "dmfm/kalman.hpp"
#include "dmfm/params.hpp"
#include "dmfm/pe.hpp"
#include "dmfm/series.hpp"

namespace dmfm::em {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using kalman::SmootherOutput;

struct EmConfig {
  int k1 = 2, k2 = 2;
  double eps = 1e-4;  // relative log-likelihood change tolerance
  int n_max = 100;
  enum class Mode { Stationary, Levels } mode = Mode::Stationary;
  bool missing_aware = false;
  bool separate_mar = false;
};

struct EmReport {
  std::vector<double> loglik_path;  // one entry per smoother pass
  std::vector<double> delta_path;   // relative changes between consecutive passes
  int n_star = -1;                  // stopping iteration; -1 when the budget ran out
  bool converged = false;
  DmfmParams theta;
  std::vector<MatrixXd> F_hat;  // smoothed factors, k1 x k2
  std::vector<MatrixXd> S_hat;  // reconstructed signal R F C'
  std::vector<std::string> warnings;
};

// Complete-data closed-form updates. Each conditions on the freshest
// available blocks; H and K are returned raw (floored but not yet
// trace-normalized) so their first-order conditions hold exactly.
MatrixXd mstep_R(const MatrixSeries& y, const VectorXd& Kdiag_prev, const MatrixXd& C_prev,
                 const SmootherOutput& smo, std::vector<std::string>* warnings = nullptr);
MatrixXd mstep_C(const MatrixSeries& y, const VectorXd& Hdiag_prev, const MatrixXd& R_new,
                 const SmootherOutput& smo, std::vector<std::string>* warnings = nullptr);
VectorXd mstep_H(const MatrixSeries& y, const VectorXd& Kdiag_prev, const MatrixXd& R_new,
                 const MatrixXd& C_new, const SmootherOutput& smo);
VectorXd mstep_K(const MatrixSeries& y, const VectorXd& Hdiag_new, const MatrixXd& R_new,
                 const MatrixXd& C_new, const SmootherOutput& smo);

// Transition and innovation covariance of the vectorized factor VAR,
// estimated directly as Kronecker products.
std::pair<MatrixXd, MatrixXd> mstep_dynamics(const SmootherOutput& smo,
                                             std::vector<std::string>* warnings = nullptr);

struct SeparateMar {
  MatrixXd A, B, P, Q;
};
// Star-product closed forms for the separate MAR factors, applied in the
// order A, B, P, Q. The returned pair is scale-normalized: |A|_F = sqrt(k1),
// tr(P) = k1, with the complementary factors absorbing the scale.
SeparateMar mstep_separate_mar(const SmootherOutput& smo, const SeparateMar& prev,
                               int k1, int k2, std::vector<std::string>* warnings = nullptr);

// Missing-data variants; W carries ones at observed cells. With W identically
// one they reduce to the complete-data updates.
MatrixXd mstep_R_missing(const MatrixSeries& y, const VectorXd& Kdiag_prev,
                         const MatrixXd& C_prev, const VectorXd& Hdiag_prev,
                         const SmootherOutput& smo, std::vector<std::string>* warnings = nullptr);
MatrixXd mstep_C_missing(const MatrixSeries& y, const VectorXd& Hdiag_prev,
                         const MatrixXd& R_new, const VectorXd& Kdiag_prev,
                         const SmootherOutput& smo, std::vector<std::string>* warnings = nullptr);
std::pair<VectorXd, VectorXd> mstep_HK_missing(const MatrixSeries& y, const VectorXd& Hdiag_prev,
                                               const VectorXd& Kdiag_prev, const MatrixXd& R_new,
                                               const MatrixXd& C_new, const SmootherOutput& smo);

// Relative change |l1 - l0| / max(1, 0.5 |l1 + l0|) below eps.
bool convergence_check(double loglik_n, double loglik_np1, double eps);

// Rescales Hdiag to mean one and moves the factor into Kdiag, leaving
// kron(Kdiag, Hdiag) untouched.
void normalize_idio(DmfmParams& theta);

EmReport run_em(const MatrixSeries& y, const EmConfig& cfg);
EmReport run_em(const MatrixSeries& y, const EmConfig& cfg, const pe::PeInit& init);

}  // namespace dmfm::em
