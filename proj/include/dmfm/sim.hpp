#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dmfm/rng.hpp"
#include "dmfm/series.hpp"

namespace dmfm::sim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Family { MatrixNormal, MatrixSkewT4 };

enum class MissingKind { None, Random, Block };

struct MissingSpec {
  MissingKind kind = MissingKind::None;
  double pi = 0.0;  // 0.25 or 0.50
};

struct DgpConfig {
  int T = 100;
  int p1 = 20, p2 = 20;
  int k1 = 2, k2 = 2;
  double mu = 0.7;     // largest eigenvalue modulus of kron(B, A); 1 = unit root
  double delta = 0.0;  // serial idiosyncratic correlation
  double tau = 0.0;    // cross-sectional idiosyncratic correlation
  Family family = Family::MatrixNormal;
  MissingSpec missing;
  std::uint64_t seed = 1;
};

struct SimTruth {
  MatrixSeries Y;               // masked when cfg.missing is set; frames keep true values
  std::vector<MatrixXd> F;      // factor path, k1 x k2
  std::vector<MatrixXd> S;      // signal path R F C', p1 x p2
  MatrixXd R, C;                // loadings
  MatrixXd A, B;                // factor MAR coefficients
  MatrixXd D, G;                // idiosyncratic MAR coefficients (diagonal)
  MatrixXd H, K;                // idiosyncratic row/column covariances
  bool nonstationary = false;   // mu == 1
};

// p x k matrix with i.i.d. U(-1, 1) entries.
MatrixXd gen_loadings(int p, int k, Rng& rng);

// MAR coefficients with diag ~ U(0.7, 0.9), off-diag ~ U(0, 0.5); B rescaled
// so the largest-modulus eigenvalue of kron(B, A) equals mu.
std::pair<MatrixXd, MatrixXd> gen_mar_coeffs(int k1, int k2, double mu, Rng& rng);

// D, G diagonal ~ U(0, delta); H, K with diag ~ U(0.7, 1.2) and off-diagonal
// (i, j) entry tau^|i-j|.
struct IdioCoeffs {
  MatrixXd D, G, H, K;
};
IdioCoeffs gen_idio_coeffs(int p1, int p2, double delta, double tau, Rng& rng);

// Zero-mean draw with vec-covariance kron(Sc, Sr).
MatrixXd sample_matrix_normal(int m, int n, const MatrixXd& Sr, const MatrixXd& Sc, Rng& rng);

// Heavy-tailed skewed draw, centered and scaled to vec-covariance kron(Sc, Sr).
MatrixXd sample_matrix_skew_t(int m, int n, const MatrixXd& Sr, const MatrixXd& Sc,
                              int df, Rng& rng);

SimTruth simulate(const DgpConfig& cfg);

// Masks a fully observed series in place of its current mask.
// Random: each cell dropped independently with probability pi.
// Block 25%: bottom-right quarter removed for t <= T/2;
// Block 50%: right half removed for t <= T/2.
MatrixSeries apply_missing(const MatrixSeries& y, const MissingSpec& spec, Rng& rng);

}  // namespace dmfm::sim
