#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "dmfm/series.hpp"

namespace dmfm::metrics {

using Eigen::MatrixXd;

struct MetricSet {
  double d_R = 0.0, d_C = 0.0;
  double mse_S = 0.0;
  std::optional<double> mse_Y0;  // only with a mask
};

// Spectral norm of the difference of the orthogonal projectors onto the
// column spaces; invariant to invertible right-multiplication.
double col_space_distance(const MatrixXd& a, const MatrixXd& ahat);

// (T p1 p2)^-1 sum_t |shat_t - s_t|_F^2.
double mse_signal(const std::vector<MatrixXd>& s_true, const std::vector<MatrixXd>& s_hat);

// (T p1 p2)^-1 sum_t |(shat_t - y_t) o (1 - w_t)|_F^2 over the masked cells,
// normalized by the full panel size.
double mse_missing(const MatrixSeries& y_complete, const std::vector<MatrixXd>& s_hat,
                   const std::vector<MatrixXd>& mask);

}  // namespace dmfm::metrics
