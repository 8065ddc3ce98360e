#include "dmfm/metrics.hpp"

#include <stdexcept>

namespace dmfm::metrics {

double col_space_distance(const MatrixXd& a, const MatrixXd& ahat) {
  if (a.rows() != ahat.rows() || a.cols() != ahat.cols())
    throw std::invalid_argument("col_space_distance: shape mismatch");
  // Projectors from orthonormalized bases; better conditioned than the
  // literal (A'A)^-1 sandwich.
  auto projector = [](const MatrixXd& m) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(m);
    if (qr.rank() < m.cols())
      throw std::invalid_argument("col_space_distance: rank-deficient input");
    const MatrixXd q =
        Eigen::HouseholderQR<MatrixXd>(m).householderQ() *
        MatrixXd::Identity(m.rows(), m.cols());
    return MatrixXd(q * q.transpose());
  };
  const MatrixXd diff = projector(a) - projector(ahat);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (diff + diff.transpose()));
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double mse_signal(const std::vector<MatrixXd>& s_true, const std::vector<MatrixXd>& s_hat) {
  if (s_true.size() != s_hat.size() || s_true.empty())
    throw std::invalid_argument("mse_signal: length mismatch");
  double acc = 0.0;
  for (size_t t = 0; t < s_true.size(); ++t) {
    if (s_true[t].rows() != s_hat[t].rows() || s_true[t].cols() != s_hat[t].cols())
      throw std::invalid_argument("mse_signal: shape mismatch");
    acc += (s_hat[t] - s_true[t]).squaredNorm();
  }
  return acc / (static_cast<double>(s_true.size()) * s_true.front().size());
}

double mse_missing(const MatrixSeries& y_complete, const std::vector<MatrixXd>& s_hat,
                   const std::vector<MatrixXd>& mask) {
  if (mask.empty()) throw std::invalid_argument("mse_missing: mask required");
  if (s_hat.size() != mask.size() || static_cast<size_t>(y_complete.size()) != mask.size())
    throw std::invalid_argument("mse_missing: length mismatch");
  double acc = 0.0;
  for (size_t t = 0; t < mask.size(); ++t) {
    const MatrixXd gap = (s_hat[t] - y_complete.frames[t])
                             .cwiseProduct(MatrixXd::Ones(mask[t].rows(), mask[t].cols()) - mask[t]);
    acc += gap.squaredNorm();
  }
  return acc / (static_cast<double>(mask.size()) * y_complete.rows() * y_complete.cols());
}

}  // namespace dmfm::metrics
