#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dmfm/metrics.hpp"
#include "dmfm/rng.hpp"
#include "oracles.hpp"

using namespace dmfm::metrics;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using oracles::random_matrix;

TEST_CASE("column space distance") {
  dmfm::Rng rng(1);
  const MatrixXd a = random_matrix(6, 2, rng);
  CHECK(col_space_distance(a, a) == doctest::Approx(0.0).epsilon(1e-12));

  // invariant to invertible right factors, symmetric in its arguments
  MatrixXd j = random_matrix(2, 2, rng);
  j(0, 0) += 2.0;  // keep it invertible
  CHECK(col_space_distance(a, a * j) < 1e-10);
  const MatrixXd b = random_matrix(6, 2, rng);
  CHECK(col_space_distance(a, b) ==
        doctest::Approx(col_space_distance(b, a)).epsilon(1e-12));

  MatrixXd e1 = MatrixXd::Zero(2, 1), e2 = MatrixXd::Zero(2, 1);
  e1(0, 0) = 1.0;
  e2(1, 0) = 1.0;
  CHECK(col_space_distance(e1, e2) == doctest::Approx(1.0));

  // agrees with the literal projector formula on well-conditioned input
  auto literal = [](const MatrixXd& m) {
    return MatrixXd(m * (m.transpose() * m).inverse() * m.transpose());
  };
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(literal(a) - literal(b));
  CHECK(col_space_distance(a, b) ==
        doctest::Approx(es.eigenvalues().cwiseAbs().maxCoeff()).epsilon(1e-10));
  CHECK(col_space_distance(a, b) <= 1.0 + 1e-12);

  MatrixXd rank_deficient(4, 2);
  rank_deficient.col(0) = VectorXd::Ones(4);
  rank_deficient.col(1) = 2.0 * VectorXd::Ones(4);
  CHECK_THROWS_AS(col_space_distance(rank_deficient, a.topRows(4)), std::invalid_argument);
}

TEST_CASE("signal mse") {
  dmfm::Rng rng(2);
  std::vector<MatrixXd> s, shat;
  for (int t = 0; t < 4; ++t) s.push_back(random_matrix(3, 2, rng));
  CHECK(mse_signal(s, s) == 0.0);

  shat = s;
  for (auto& m : shat) m.array() += 1.0;
  CHECK(mse_signal(s, shat) == doctest::Approx(1.0).epsilon(1e-12));

  // loop oracle
  shat = s;
  for (auto& m : shat) m += random_matrix(3, 2, rng);
  double acc = 0.0;
  for (int t = 0; t < 4; ++t)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 2; ++j) acc += std::pow(shat[t](i, j) - s[t](i, j), 2);
  CHECK(mse_signal(s, shat) == doctest::Approx(acc / (4.0 * 6.0)).epsilon(1e-12));

  // invariant to the factorization: only the product enters
  CHECK_THROWS_AS(mse_signal(s, std::vector<MatrixXd>(2, s[0])), std::invalid_argument);
}

TEST_CASE("masked-cell mse") {
  dmfm::Rng rng(3);
  dmfm::MatrixSeries y;
  std::vector<MatrixXd> shat, mask;
  for (int t = 0; t < 2; ++t) {
    y.frames.push_back(random_matrix(2, 2, rng));
    shat.push_back(y.frames.back());
    mask.push_back(MatrixXd::Ones(2, 2));
  }
  CHECK(mse_missing(y, shat, mask) == 0.0);

  // one masked cell with error 2 at T=1, p = 2x2: 4 / (1*4) over that frame
  dmfm::MatrixSeries y1;
  y1.frames.push_back(MatrixXd::Zero(2, 2));
  std::vector<MatrixXd> s1 = {MatrixXd::Zero(2, 2)};
  std::vector<MatrixXd> w1 = {MatrixXd::Ones(2, 2)};
  s1[0](1, 1) = 2.0;
  w1[0](1, 1) = 0.0;
  CHECK(mse_missing(y1, s1, w1) == doctest::Approx(1.0));

  // loop oracle on a random masked instance
  std::vector<MatrixXd> wr = mask;
  wr[0](0, 1) = 0.0;
  wr[1](1, 0) = 0.0;
  std::vector<MatrixXd> sr = shat;
  for (auto& m : sr) m += random_matrix(2, 2, rng);
  double acc = 0.0;
  for (int t = 0; t < 2; ++t)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        if (wr[t](i, j) < 0.5) acc += std::pow(sr[t](i, j) - y.frames[t](i, j), 2);
  CHECK(mse_missing(y, sr, wr) == doctest::Approx(acc / 8.0).epsilon(1e-12));
}
