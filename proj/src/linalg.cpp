#include "dmfm/linalg.hpp"

#include <stdexcept>
#include <string>

namespace dmfm::linalg {

namespace {
constexpr Index kDenseLimit = 64;  // largest dimension materialized densely
}

VectorXd vec(const MatrixXd& m) {
  return Eigen::Map<const VectorXd>(m.data(), m.size());
}

MatrixXd unvec(const VectorXd& v, Index rows, Index cols) {
  if (v.size() != rows * cols) {
    throw std::invalid_argument("unvec: length " + std::to_string(v.size()) +
                                " != " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  return Eigen::Map<const MatrixXd>(v.data(), rows, cols);
}

MatrixXd kron(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

MatrixXd hadamard(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("hadamard: shape mismatch");
  return a.cwiseProduct(b);
}

MatrixXd commutation_matrix(Index n, Index m) {
  if (n < 1 || m < 1) throw std::invalid_argument("commutation_matrix: dims must be >= 1");
  if (n * m > kDenseLimit)
    throw std::invalid_argument("commutation_matrix: dense form limited to dim <= 64, use apply_commutation");
  MatrixXd k = MatrixXd::Zero(n * m, n * m);
  // vec(X')(i*m + j) = X(i, j) = vec(X)(j*n + i)
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) k(i * m + j, j * n + i) = 1.0;
  return k;
}

VectorXd apply_commutation(const VectorXd& v, Index n, Index m) {
  if (v.size() != n * m) throw std::invalid_argument("apply_commutation: size mismatch");
  VectorXd out(n * m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) out(i * m + j) = v(j * n + i);
  return out;
}

MatrixXd star(const MatrixXd& a, const MatrixXd& b, Index p, Index q) {
  if (b.rows() != a.rows() * p || b.cols() != a.cols() * q)
    throw std::invalid_argument("star: b must be (m*p) x (n*q)");
  MatrixXd out = MatrixXd::Zero(p, q);
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.noalias() += a(i, j) * b.block(i * p, j * q, p, q);
  return out;
}

MatrixXd special_partition(const MatrixXd& a, Index i, Index j,
                           Index m, Index n, Index p, Index q) {
  if (a.rows() != m * p || a.cols() != n * q)
    throw std::invalid_argument("special_partition: a must be (m*p) x (n*q)");
  if (i < 1 || i > p || j < 1 || j > q)
    throw std::out_of_range("special_partition: index out of range");
  MatrixXd out(m, n);
  for (Index r = 0; r < m; ++r)
    for (Index s = 0; s < n; ++s) out(r, s) = a(r * p + i - 1, s * q + j - 1);
  return out;
}

MatrixXd diag_stack(const MatrixXd& w) {
  if (w.size() > kDenseLimit)
    throw std::invalid_argument("diag_stack: dense form limited to size <= 64, use apply_diag_stack");
  return MatrixXd(vec(w).asDiagonal());
}

VectorXd apply_diag_stack(const MatrixXd& w, const VectorXd& v) {
  if (v.size() != w.size()) throw std::invalid_argument("apply_diag_stack: size mismatch");
  return vec(w).cwiseProduct(v);
}

MatrixXd diag_stack_partition(const MatrixXd& w, Index i, Index j) {
  const Index m = w.rows(), n = w.cols();
  if (i < 1 || i > m || j < 1 || j > m)
    throw std::out_of_range("diag_stack_partition: index out of range");
  MatrixXd out = MatrixXd::Zero(n, n);
  if (i == j) out.diagonal() = w.row(i - 1).transpose();
  return out;
}

SymEigPair eig_sym_topk(const MatrixXd& m, Index k) {
  if (m.rows() != m.cols()) throw std::invalid_argument("eig_sym_topk: matrix not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument("eig_sym_topk: matrix not symmetric");
  if (k < 1 || k > m.rows()) throw std::invalid_argument("eig_sym_topk: k out of range");

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success) throw std::runtime_error("eig_sym_topk: eigensolver failed");

  SymEigPair out;
  out.values.resize(k);
  out.vectors.resize(m.rows(), k);
  const Index n = m.rows();
  for (Index c = 0; c < k; ++c) {
    out.values(c) = es.eigenvalues()(n - 1 - c);  // solver returns ascending order
    VectorXd v = es.eigenvectors().col(n - 1 - c);
    Index imax = 0;
    for (Index i = 1; i < n; ++i)
      if (std::abs(v(i)) > std::abs(v(imax))) imax = i;
    if (v(imax) < 0.0) v = -v;
    out.vectors.col(c) = v;
  }
  return out;
}

}  // namespace dmfm::linalg
