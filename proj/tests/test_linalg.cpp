#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dmfm/linalg.hpp"
#include "dmfm/rng.hpp"
#include "oracles.hpp"

using namespace dmfm::linalg;
using oracles::random_matrix;
using oracles::random_spd;

TEST_CASE("vec and unvec") {
  MatrixXd one(1, 1);
  one << 5.0;
  CHECK(vec(one)(0) == 5.0);

  MatrixXd m(2, 2);
  m << 1, 2, 3, 4;
  VectorXd v = vec(m);
  CHECK(v(0) == 1);
  CHECK(v(1) == 3);
  CHECK(v(2) == 2);
  CHECK(v(3) == 4);

  VectorXd w(4);
  w << 1, 3, 2, 4;
  CHECK((unvec(w, 2, 2) - m).norm() == 0.0);
  VectorXd s(1);
  s << 7.0;
  CHECK(unvec(s, 1, 1)(0, 0) == 7.0);
  CHECK_THROWS_AS(unvec(w, 3, 2), std::invalid_argument);

  dmfm::Rng rng(11);
  const MatrixXd x = random_matrix(3, 4, rng);
  CHECK((unvec(vec(x), 3, 4) - x).norm() == 0.0);
  const VectorXd r = vec(random_matrix(3, 2, rng));
  CHECK((vec(unvec(r, 3, 2)) - r).norm() == 0.0);
}

TEST_CASE("kron definition and identities") {
  MatrixXd b(2, 3);
  b << 1, 2, 3, 4, 5, 6;
  CHECK((kron(MatrixXd::Identity(1, 1), b) - b).norm() == 0.0);

  MatrixXd a(1, 2), c(2, 1);
  a << 1, 2;
  c << 0, 3;
  MatrixXd expect(2, 2);
  expect << 0, 0, 3, 6;
  CHECK((kron(a, c) - expect).norm() == 0.0);

  dmfm::Rng rng(7);
  const MatrixXd x = random_matrix(4, 3, rng), y = random_matrix(2, 5, rng);
  CHECK((kron(x, y) - oracles::loop_kron(x, y)).cwiseAbs().maxCoeff() < 1e-12);

  // vec(XZY) = kron(Y', X) vec(Z)
  const MatrixXd X = random_matrix(2, 3, rng), Z = random_matrix(3, 2, rng),
                 Y = random_matrix(2, 2, rng);
  CHECK((vec(X * Z * Y) - kron(Y.transpose(), X) * vec(Z)).cwiseAbs().maxCoeff() < 1e-12);

  // mixed product
  const MatrixXd A = random_matrix(2, 2, rng), B = random_matrix(2, 2, rng),
                 C = random_matrix(2, 2, rng), D = random_matrix(2, 2, rng);
  CHECK((kron(A, B) * kron(C, D) - kron(A * C, B * D)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("hadamard") {
  dmfm::Rng rng(3);
  const MatrixXd a = random_matrix(3, 3, rng);
  CHECK((hadamard(a, MatrixXd::Ones(3, 3)) - a).norm() == 0.0);

  MatrixXd m(2, 2), w(2, 2), expect(2, 2);
  m << 1, 2, 3, 4;
  w << 0, 1, 1, 0;
  expect << 0, 2, 3, 0;
  CHECK((hadamard(m, w) - expect).norm() == 0.0);
  CHECK_THROWS_AS(hadamard(m, MatrixXd::Ones(2, 3)), std::invalid_argument);

  // tr(X (Y o Z)) = tr((X' o Y)' Z)
  const MatrixXd X = random_matrix(3, 3, rng), Y = random_matrix(3, 3, rng),
                 Z = random_matrix(3, 3, rng);
  const double lhs = (X * hadamard(Y, Z)).trace();
  const double rhs = (hadamard(X.transpose(), Y).transpose() * Z).trace();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("commutation matrix") {
  CHECK(commutation_matrix(1, 1)(0, 0) == 1.0);

  MatrixXd x(2, 2);
  x << 1, 2, 3, 4;
  const MatrixXd k22 = commutation_matrix(2, 2);
  CHECK((k22 * vec(x) - vec(x.transpose())).norm() == 0.0);

  dmfm::Rng rng(5);
  for (int n = 1; n <= 4; ++n)
    for (int m = 1; m <= 4; ++m) {
      const MatrixXd k = commutation_matrix(n, m);
      for (Eigen::Index c = 0; c < k.cols(); ++c) {
        CHECK(k.col(c).sum() == 1.0);
        CHECK(k.col(c).cwiseAbs().maxCoeff() == 1.0);
      }
      const MatrixXd z = random_matrix(n, m, rng);
      CHECK((k * vec(z) - vec(z.transpose())).norm() == 0.0);
      CHECK((k * vec(z) - apply_commutation(vec(z), n, m)).norm() == 0.0);
    }
}

TEST_CASE("star product") {
  dmfm::Rng rng(13);
  const MatrixXd b = random_matrix(3, 4, rng);
  MatrixXd unit(1, 1);
  unit << 1.0;
  CHECK((star(unit, b, 3, 4) - b).norm() == 0.0);

  const MatrixXd big = random_matrix(4, 4, rng);
  const MatrixXd sum4 = big.block(0, 0, 2, 2) + big.block(0, 2, 2, 2) +
                        big.block(2, 0, 2, 2) + big.block(2, 2, 2, 2);
  CHECK((star(MatrixXd::Ones(2, 2), big, 2, 2) - sum4).cwiseAbs().maxCoeff() < 1e-12);

  const MatrixXd a = random_matrix(2, 3, rng), bb = random_matrix(2 * 3, 3 * 2, rng);
  CHECK((star(a, bb, 3, 2) - oracles::loop_star(a, bb, 3, 2)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(star(a, random_matrix(5, 5, rng), 3, 2), std::invalid_argument);

  // XZY = Z star (vec(X) vec(Y')')
  const MatrixXd X = random_matrix(2, 3, rng), Z = random_matrix(3, 4, rng),
                 Y = random_matrix(4, 2, rng);
  const MatrixXd outer = vec(X) * vec(Y.transpose()).transpose();
  CHECK((X * Z * Y - star(Z, outer, 2, 2)).cwiseAbs().maxCoeff() < 1e-12);

  // bilinearity
  const MatrixXd a2 = random_matrix(2, 3, rng);
  const MatrixXd lhs = star(2.5 * a - 1.5 * a2, bb, 3, 2);
  const MatrixXd rhs = 2.5 * star(a, bb, 3, 2) - 1.5 * star(a2, bb, 3, 2);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("special partition") {
  dmfm::Rng rng(17);
  const MatrixXd a = random_matrix(3, 4, rng);
  CHECK((special_partition(a, 1, 1, 3, 4, 1, 1) - a).norm() == 0.0);

  const MatrixXd b = random_matrix(4, 4, rng);
  const MatrixXd part = special_partition(b, 1, 1, 2, 2, 2, 2);
  CHECK(part(0, 0) == b(0, 0));
  CHECK(part(0, 1) == b(0, 2));
  CHECK(part(1, 0) == b(2, 0));
  CHECK(part(1, 1) == b(2, 2));
  CHECK((part - oracles::loop_special_partition(b, 1, 1, 2, 2, 2, 2)).norm() == 0.0);
  CHECK_THROWS_AS(special_partition(b, 3, 1, 2, 2, 2, 2), std::out_of_range);

  // decomposition A = sum_ij A^[i,j] (x) E^(i,j) for all small dims
  for (int p = 1; p <= 4; ++p)
    for (int q = 1; q <= 4; ++q) {
      const int m = 3, n = 2;
      const MatrixXd big = random_matrix(m * p, n * q, rng);
      MatrixXd rebuilt = MatrixXd::Zero(m * p, n * q);
      for (int i = 1; i <= p; ++i)
        for (int j = 1; j <= q; ++j) {
          MatrixXd basis = MatrixXd::Zero(p, q);
          basis(i - 1, j - 1) = 1.0;
          rebuilt += kron(special_partition(big, i, j, m, n, p, q), basis);
        }
      CHECK((rebuilt - big).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("diag stack") {
  MatrixXd one(1, 1);
  one << 1.0;
  CHECK((diag_stack(one) - MatrixXd::Identity(1, 1)).norm() == 0.0);
  CHECK((diag_stack(MatrixXd::Ones(2, 2)) - MatrixXd::Identity(4, 4)).norm() == 0.0);

  dmfm::Rng rng(19);
  const MatrixXd w = random_matrix(3, 2, rng), x = random_matrix(3, 2, rng);
  CHECK((diag_stack(w) * vec(x) - vec(hadamard(w, x))).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((apply_diag_stack(w, vec(x)) - vec(hadamard(w, x))).norm() == 0.0);

  // partition of the stacked diagonal, computed directly
  const MatrixXd wm = random_matrix(4, 3, rng);
  const MatrixXd dense = diag_stack(wm);
  for (int i = 1; i <= 4; ++i)
    for (int j = 1; j <= 4; ++j) {
      const MatrixXd direct = diag_stack_partition(wm, i, j);
      const MatrixXd ref = special_partition(dense, i, j, 3, 3, 4, 4);
      CHECK((direct - ref).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("symmetric top-k eigenpairs") {
  const auto id = eig_sym_topk(MatrixXd::Identity(3, 3), 1);
  CHECK(id.values(0) == doctest::Approx(1.0));
  CHECK((MatrixXd::Identity(3, 3) * id.vectors.col(0) - id.vectors.col(0)).norm() < 1e-10);

  MatrixXd d = MatrixXd::Zero(3, 3);
  d.diagonal() << 3, 2, 1;
  const auto ed = eig_sym_topk(d, 2);
  CHECK(ed.values(0) == doctest::Approx(3.0));
  CHECK(ed.values(1) == doctest::Approx(2.0));
  CHECK(ed.vectors(0, 0) == doctest::Approx(1.0));
  CHECK(ed.vectors(1, 1) == doctest::Approx(1.0));

  dmfm::Rng rng(29);
  const MatrixXd spd = random_spd(6, rng);
  const auto full = eig_sym_topk(spd, 6);
  const MatrixXd rebuilt =
      full.vectors * full.values.asDiagonal() * full.vectors.transpose();
  CHECK((rebuilt - spd).norm() < 1e-8);
  CHECK((full.vectors.transpose() * full.vectors - MatrixXd::Identity(6, 6)).norm() < 1e-10);
  for (int c = 0; c < 6; ++c) {
    CHECK((spd * full.vectors.col(c) - full.values(c) * full.vectors.col(c)).norm() <
          1e-8 * spd.norm());
    if (c > 0) CHECK(full.values(c) <= full.values(c - 1));
  }

  CHECK_THROWS_AS(eig_sym_topk(random_matrix(3, 3, rng), 1), std::invalid_argument);
  CHECK_THROWS_AS(eig_sym_topk(spd, 7), std::invalid_argument);
}
