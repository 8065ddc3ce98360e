#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "dmfm/params.hpp"
#include "dmfm/series.hpp"

namespace dmfm::pe {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Projected pre-estimates used to start the EM iterations.
struct PeInit {
  MatrixXd R0;                  // p1 x k1, R0'R0 / p1 = I
  MatrixXd C0;                  // p2 x k2
  std::vector<MatrixXd> Ftilde; // projected factor path
  VectorXd H0diag, K0diag;      // positive, trace-normalized
  MatrixXd BA0, QP0;            // VAR(1) pre-estimates on vec(Ftilde)
  std::vector<std::string> warnings;
};

// M1 = (p1 p2 T)^-1 sum_t Y_t Y_t', M2 = (p1 p2 T)^-1 sum_t Y_t' Y_t.
// Requires a fully observed series.
std::pair<MatrixXd, MatrixXd> second_moment_matrices(const MatrixSeries& y);

// Two-step projected principal components of the row and column spaces.
// Flags a warning when the eigen-gap at the cut is below 1e-12.
std::pair<MatrixXd, MatrixXd> projected_loadings(const MatrixSeries& y, int k1, int k2,
                                                 std::vector<std::string>* warnings = nullptr);

// Ftilde_t = R0' Y_t C0 / (p1 p2).
std::vector<MatrixXd> project_factors(const MatrixSeries& y, const MatrixXd& R0,
                                      const MatrixXd& C0);

// Sample variances of the projection residuals, clipped below at 1e-8.
std::pair<VectorXd, VectorXd> init_idio_variances(const MatrixSeries& y, const MatrixXd& R0,
                                                  const MatrixXd& C0,
                                                  const std::vector<MatrixXd>& Ftilde);

// OLS VAR(1) on vec(Ftilde); adds a 1e-8 ridge when the Gram matrix is
// near singular (flagged through warnings).
std::pair<MatrixXd, MatrixXd> init_dynamics(const std::vector<MatrixXd>& Ftilde,
                                            std::vector<std::string>* warnings = nullptr);

// Eigenvalue-ratio pick of the factor counts, argmax_j lambda_j / lambda_{j+1}.
std::pair<int, int> eigenvalue_ratio_k(const MatrixSeries& y, int kmax);

// Full pre-estimation pipeline on a fully observed series, including the
// trace normalization of the idiosyncratic variances.
PeInit pe_fit(const MatrixSeries& y, int k1, int k2);

// pe_fit on the series with masked cells replaced by zero; fallback path
// when no balanced subpanel exists.
PeInit zero_imputed_pe(const MatrixSeries& y, int k1, int k2);

// Extracts the maximal fully observed row/column subset, runs the
// pre-estimation plus a short EM pass on it, and extends loadings to the
// dropped rows/columns by least squares on the smoothed factors. Falls
// back to zero_imputed_pe (with a warning) when no subset of size at
// least (k1+1) x (k2+1) exists. Implemented alongside the EM engine.
PeInit balanced_subpanel_init(const MatrixSeries& y, int k1, int k2);

// Pack a PeInit into a parameter vector.
DmfmParams theta_from_pe(const PeInit& init, int k1, int k2);

}  // namespace dmfm::pe
