#pragma once

#include <Eigen/Dense>

namespace dmfm {

// Full parameter vector of the model: row/column loadings, diagonal
// idiosyncratic variances, vectorized transition kron(B, A) and state
// innovation covariance kron(Q, P). The separate MAR factors are kept
// only when estimated with the separate update path.
struct DmfmParams {
  Eigen::MatrixXd R;      // p1 x k1
  Eigen::MatrixXd C;      // p2 x k2
  Eigen::VectorXd Hdiag;  // p1, positive, mean 1 after normalization
  Eigen::VectorXd Kdiag;  // p2, positive
  Eigen::MatrixXd BA;     // (k1 k2) x (k1 k2)
  Eigen::MatrixXd QP;     // (k1 k2) x (k1 k2), symmetric PSD

  bool has_separate = false;
  Eigen::MatrixXd A, B;  // k1 x k1, k2 x k2
  Eigen::MatrixXd P, Q;  // k1 x k1, k2 x k2

  int k1() const { return static_cast<int>(R.cols()); }
  int k2() const { return static_cast<int>(C.cols()); }
  int p1() const { return static_cast<int>(R.rows()); }
  int p2() const { return static_cast<int>(C.rows()); }
};

}  // namespace dmfm
