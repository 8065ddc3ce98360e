#pragma once

#include <Eigen/Dense>

namespace dmfm::linalg {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Column-major stacking of the entries of m.
VectorXd vec(const MatrixXd& m);

// Inverse of vec; v.size() must equal rows*cols.
MatrixXd unvec(const VectorXd& v, Index rows, Index cols);

MatrixXd kron(const MatrixXd& a, const MatrixXd& b);

// Elementwise product; shapes must match.
MatrixXd hadamard(const MatrixXd& a, const MatrixXd& b);

// Permutation K with K * vec(X) = vec(X') for every n x m matrix X.
// Materialized densely only for n*m <= 64; use apply_commutation above that.
MatrixXd commutation_matrix(Index n, Index m);

// commutation_matrix(n, m) * v without forming the matrix.
VectorXd apply_commutation(const VectorXd& v, Index n, Index m);

// Weighted block sum: a is m x n, b is (m*p) x (n*q); returns
// sum_{ij} a(i,j) * b.block(i*p, j*q, p, q).
MatrixXd star(const MatrixXd& a, const MatrixXd& b, Index p, Index q);

// The m x n slice of an (m*p) x (n*q) matrix taking entry
// (r*p - p + i, s*q - q + j) at position (r, s); i in 1..p, j in 1..q.
MatrixXd special_partition(const MatrixXd& a, Index i, Index j,
                           Index m, Index n, Index p, Index q);

// Diagonal matrix with diagonal vec(w). Dense only for w.size() <= 64.
MatrixXd diag_stack(const MatrixXd& w);

// diag_stack(w) * v without forming the matrix.
VectorXd apply_diag_stack(const MatrixXd& w, const VectorXd& v);

// special_partition(diag_stack(w), i, j, n, n, m, m) for w m x n, computed
// directly: zero unless i == j, else diag(row i of w).
MatrixXd diag_stack_partition(const MatrixXd& w, Index i, Index j);

struct SymEigPair {
  VectorXd values;   // descending
  MatrixXd vectors;  // orthonormal columns, largest-|entry| coefficient positive
};

// Top-k eigenpairs of a symmetric matrix. Throws if m is not symmetric
// within 1e-10 (relative to its largest entry) or k is out of range.
SymEigPair eig_sym_topk(const MatrixXd& m, Index k);

}  // namespace dmfm::linalg
