#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

namespace dmfm {

// A T-length sequence of p1 x p2 observation matrices with an optional
// 0/1 observation mask (1 = observed). Masked cells of frames may hold
// any value, including NaN; use observed() for arithmetic.
struct MatrixSeries {
  std::vector<Eigen::MatrixXd> frames;
  std::vector<Eigen::MatrixXd> mask;  // empty when fully observed

  int size() const { return static_cast<int>(frames.size()); }
  Eigen::Index rows() const { return frames.empty() ? 0 : frames.front().rows(); }
  Eigen::Index cols() const { return frames.empty() ? 0 : frames.front().cols(); }
  bool has_mask() const { return !mask.empty(); }

  // Frame with masked cells replaced by zero (NaN-safe).
  Eigen::MatrixXd observed(int t) const {
    if (!has_mask()) return frames[t];
    return (mask[t].array() > 0.5).select(frames[t], 0.0);
  }

  Eigen::MatrixXd mask_at(int t) const {
    if (!has_mask()) return Eigen::MatrixXd::Ones(rows(), cols());
    return mask[t];
  }

  void check_consistent() const {
    if (has_mask() && mask.size() != frames.size())
      throw std::invalid_argument("MatrixSeries: mask length != frame length");
    for (const auto& f : frames)
      if (f.rows() != rows() || f.cols() != cols())
        throw std::invalid_argument("MatrixSeries: ragged frames");
  }
};

}  // namespace dmfm
