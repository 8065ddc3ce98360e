#include "dmfm/em.hpp"

#include <cmath>
#include <stdexcept>

#include "dmfm/linalg.hpp"

namespace dmfm::em {

namespace {

constexpr double kVarFloor = 1e-8;
constexpr double kCovFloor = 1e-10;
constexpr double kRidge = 1e-10;
constexpr double kStationaryCap = 0.999;
constexpr double kLevelsCap = 1.0 + 1e-6;

MatrixXd second_moment(const SmootherOutput& smo, int t) {
  return smo.f_sm[t] * smo.f_sm[t].transpose() + smo.Pi_sm[t];
}

MatrixXd lag_moment(const SmootherOutput& smo, int t) {
  return smo.f_sm[t] * smo.f_sm[t - 1].transpose() + smo.Delta_sm[t];
}

double spectral_radius(const MatrixXd& m) {
  Eigen::EigenSolver<MatrixXd> es(m, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

MatrixXd floor_psd(const MatrixXd& m, double floor) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()));
  VectorXd vals = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

// Solves x * den = num for x (i.e. num * den^{-1}) with a ridge fallback.
MatrixXd solve_right(const MatrixXd& num, MatrixXd den, const char* what,
                     std::vector<std::string>* warnings) {
  Eigen::FullPivLU<MatrixXd> lu(den);
  if (!lu.isInvertible() || lu.rcond() < 1e-13) {
    den += kRidge * MatrixXd::Identity(den.rows(), den.cols());
    if (warnings != nullptr)
      warnings->push_back(std::string(what) + ": singular normal matrix, ridge added");
  }
  return den.ldlt().solve(num.transpose()).transpose();
}

MatrixXd unvec_factor(const VectorXd& f, int k1, int k2) {
  return linalg::unvec(f, k1, k2);
}

struct Dims {
  int T, p1, p2, k1, k2, m;
};

Dims dims_of(const MatrixSeries& y, const SmootherOutput& smo, int k1, int k2) {
  Dims d;
  d.T = y.size();
  d.p1 = static_cast<int>(y.rows());
  d.p2 = static_cast<int>(y.cols());
  d.k1 = k1;
  d.k2 = k2;
  d.m = k1 * k2;
  if (static_cast<int>(smo.f_sm.size()) != d.T || smo.f_sm.front().size() != d.m)
    throw std::invalid_argument("mstep: smoother output does not match data");
  return d;
}

}  // namespace

MatrixXd mstep_R(const MatrixSeries& y, const VectorXd& Kdiag_prev, const MatrixXd& C_prev,
                 const SmootherOutput& smo, std::vector<std::string>* warnings) {
  const int k1 = static_cast<int>(std::lround(
      static_cast<double>(smo.f_sm.front().size()) / C_prev.cols()));
  const int k2 = static_cast<int>(C_prev.cols());
  const Dims d = dims_of(y, smo, k1, k2);
  const VectorXd kinv = Kdiag_prev.cwiseInverse();
  const MatrixXd weight = C_prev.transpose() * kinv.asDiagonal() * C_prev;

  MatrixXd num = MatrixXd::Zero(d.p1, d.k1);
  MatrixXd den = MatrixXd::Zero(d.k1, d.k1);
  for (int t = 0; t < d.T; ++t) {
    const MatrixXd ft = unvec_factor(smo.f_sm[t], d.k1, d.k2);
    num.noalias() += y.observed(t) * kinv.asDiagonal() * C_prev * ft.transpose();
    den += linalg::star(weight, second_moment(smo, t), d.k1, d.k1);
  }
  return solve_right(num, den, "mstep_R", warnings);
}

MatrixXd mstep_C(const MatrixSeries& y, const VectorXd& Hdiag_prev, const MatrixXd& R_new,
                 const SmootherOutput& smo, std::vector<std::string>* warnings) {
  const int k1 = static_cast<int>(R_new.cols());
  const int k2 = static_cast<int>(std::lround(
      static_cast<double>(smo.f_sm.front().size()) / R_new.cols()));
  const Dims d = dims_of(y, smo, k1, k2);
  const VectorXd hinv = Hdiag_prev.cwiseInverse();
  const MatrixXd weight = R_new.transpose() * hinv.asDiagonal() * R_new;
  const MatrixXd km = linalg::commutation_matrix(d.k1, d.k2);

  MatrixXd num = MatrixXd::Zero(d.p2, d.k2);
  MatrixXd den = MatrixXd::Zero(d.k2, d.k2);
  for (int t = 0; t < d.T; ++t) {
    const MatrixXd ft = unvec_factor(smo.f_sm[t], d.k1, d.k2);
    num.noalias() += y.observed(t).transpose() * hinv.asDiagonal() * R_new * ft;
    den += linalg::star(weight, km * second_moment(smo, t) * km.transpose(), d.k2, d.k2);
  }
  return solve_right(num, den, "mstep_C", warnings);
}

VectorXd mstep_H(const MatrixSeries& y, const VectorXd& Kdiag_prev, const MatrixXd& R_new,
                 const MatrixXd& C_new, const SmootherOutput& smo) {
  const int k1 = static_cast<int>(R_new.cols());
  const int k2 = static_cast<int>(C_new.cols());
  const Dims d = dims_of(y, smo, k1, k2);
  const VectorXd kinv = Kdiag_prev.cwiseInverse();
  const MatrixXd weight = C_new.transpose() * kinv.asDiagonal() * C_new;

  VectorXd acc = VectorXd::Zero(d.p1);
  for (int t = 0; t < d.T; ++t) {
    const MatrixXd yt = y.observed(t);
    const MatrixXd ft = unvec_factor(smo.f_sm[t], d.k1, d.k2);
    const MatrixXd sec = second_moment(smo, t);
    acc += (yt.cwiseProduct(yt) * kinv.asDiagonal()).rowwise().sum();
    const MatrixXd cross = yt * kinv.asDiagonal() * C_new * ft.transpose();  // p1 x k1
    acc -= 2.0 * cross.cwiseProduct(R_new).rowwise().sum();
    // (C'K^-1C) star ((I (x) R) sec (I (x) R)'), diagonal only
    for (int b = 0; b < d.k2; ++b)
      for (int g = 0; g < d.k2; ++g) {
        const MatrixXd sbg = sec.block(b * d.k1, g * d.k1, d.k1, d.k1);
        acc += weight(b, g) * (R_new * sbg).cwiseProduct(R_new).rowwise().sum();
      }
  }
  acc /= static_cast<double>(d.T) * d.p2;
  return acc.cwiseMax(kVarFloor);
}

VectorXd mstep_K(const MatrixSeries& y, const VectorXd& Hdiag_new, const MatrixXd& R_new,
                 const MatrixXd& C_new, const SmootherOutput& smo) {
  const int k1 = static_cast<int>(R_new.cols());
  const int k2 = static_cast<int>(C_new.cols());
  const Dims d = dims_of(y, smo, k1, k2);
  const VectorXd hinv = Hdiag_new.cwiseInverse();
  const MatrixXd weight = R_new.transpose() * hinv.asDiagonal() * R_new;
  const MatrixXd km = linalg::commutation_matrix(d.k1, d.k2);

  VectorXd acc = VectorXd::Zero(d.p2);
  for (int t = 0; t < d.T; ++t) {
    const MatrixXd yt = y.observed(t);
    const MatrixXd ft = unvec_factor(smo.f_sm[t], d.k1, d.k2);
    const MatrixXd seck = km * second_moment(smo, t) * km.transpose();
    acc += (hinv.asDiagonal() * yt.cwiseProduct(yt)).colwise().sum().transpose();
    const MatrixXd cross = yt.transpose() * hinv.asDiagonal() * R_new * ft;  // p2 x k2
    acc -= 2.0 * cross.cwiseProduct(C_new).rowwise().sum();
    for (int a = 0; a < d.k1; ++a)
      for (int g = 0; g < d.k1; ++g) {
        const MatrixXd sag = seck.block(a * d.k2, g * d.k2, d.k2, d.k2);
        acc += weight(a, g) * (C_new * sag).cwiseProduct(C_new).rowwise().sum();
      }
  }
  acc /= static_cast<double>(d.T) * d.p1;
  return acc.cwiseMax(kVarFloor);
}

std::pair<MatrixXd, MatrixXd> mstep_dynamics(const SmootherOutput& smo,
                                             std::vector<std::string>* warnings) {
  const int T = static_cast<int>(smo.f_sm.size());
  if (T < 2) throw std::invalid_argument("mstep_dynamics: need T >= 2");
  const Eigen::Index m = smo.f_sm.front().size();

  MatrixXd sxy = MatrixXd::Zero(m, m);
  MatrixXd sxx = MatrixXd::Zero(m, m);
  for (int t = 1; t < T; ++t) {
    sxy += lag_moment(smo, t);
    sxx += second_moment(smo, t - 1);
  }
  const MatrixXd ba = solve_right(sxy, sxx, "mstep_dynamics", warnings);

  MatrixXd qp = MatrixXd::Zero(m, m);
  for (int t = 1; t < T; ++t)
    qp += second_moment(smo, t) - lag_moment(smo, t) * ba.transpose();
  qp /= static_cast<double>(T);
  return {ba, floor_psd(qp, kCovFloor)};
}

SeparateMar mstep_separate_mar(const SmootherOutput& smo, const SeparateMar& prev,
                               int k1, int k2, std::vector<std::string>* warnings) {
  const int T = static_cast<int>(smo.f_sm.size());
  if (T < 2) throw std::invalid_argument("mstep_separate_mar: need T >= 2");
  const MatrixXd km = linalg::commutation_matrix(k1, k2);
  const MatrixXd pinv = prev.P.ldlt().solve(MatrixXd::Identity(k1, k1));
  const MatrixXd qinv = prev.Q.ldlt().solve(MatrixXd::Identity(k2, k2));

  auto conj = [&km](const MatrixXd& s) { return MatrixXd(km * s * km.transpose()); };

  SeparateMar out;
  {
    MatrixXd num = MatrixXd::Zero(k1, k1), den = MatrixXd::Zero(k1, k1);
    const MatrixXd wnum = qinv * prev.B;
    const MatrixXd wden = prev.B.transpose() * qinv * prev.B;
    for (int t = 1; t < T; ++t) {
      num += linalg::star(wnum, lag_moment(smo, t), k1, k1);
      den += linalg::star(wden, second_moment(smo, t - 1), k1, k1);
    }
    out.A = solve_right(num, den, "mstep_separate_mar[A]", warnings);
  }
  {
    MatrixXd num = MatrixXd::Zero(k2, k2), den = MatrixXd::Zero(k2, k2);
    const MatrixXd wnum = pinv * out.A;
    const MatrixXd wden = out.A.transpose() * pinv * out.A;
    for (int t = 1; t < T; ++t) {
      num += linalg::star(wnum, conj(lag_moment(smo, t)), k2, k2);
      den += linalg::star(wden, conj(second_moment(smo, t - 1)), k2, k2);
    }
    out.B = solve_right(num, den, "mstep_separate_mar[B]", warnings);
  }
  {
    MatrixXd p = MatrixXd::Zero(k1, k1);
    const MatrixXd wlag = qinv * out.B;
    const MatrixXd wsec = out.B.transpose() * qinv * out.B;
    for (int t = 1; t < T; ++t) {
      const MatrixXd mid = linalg::star(wlag, lag_moment(smo, t), k1, k1);
      p += linalg::star(qinv, second_moment(smo, t), k1, k1) - mid * out.A.transpose() -
           out.A * mid.transpose() +
           out.A * linalg::star(wsec, second_moment(smo, t - 1), k1, k1) * out.A.transpose();
    }
    out.P = floor_psd(p / (static_cast<double>(T - 1) * k2), kCovFloor);
  }
  {
    MatrixXd q = MatrixXd::Zero(k2, k2);
    const MatrixXd wlag = pinv * out.A;
    const MatrixXd wsec = out.A.transpose() * pinv * out.A;
    for (int t = 1; t < T; ++t) {
      const MatrixXd mid = linalg::star(wlag, conj(lag_moment(smo, t)), k2, k2);
      q += linalg::star(pinv, conj(second_moment(smo, t)), k2, k2) - mid * out.B.transpose() -
           out.B * mid.transpose() +
           out.B * linalg::star(wsec, conj(second_moment(smo, t - 1)), k2, k2) * out.B.transpose();
    }
    out.Q = floor_psd(q / (static_cast<double>(T - 1) * k1), kCovFloor);
  }

  // (cA, B/c) and (cP, Q/c) are unidentified; fix |A|_F = sqrt(k1), tr(P) = k1.
  const double sa = std::sqrt(static_cast<double>(k1)) / out.A.norm();
  out.A *= sa;
  out.B /= sa;
  const double sp = static_cast<double>(k1) / out.P.trace();
  out.P *= sp;
  out.Q /= sp;
  return out;
}

MatrixXd mstep_R_missing(const MatrixSeries& y, const VectorXd& Kdiag_prev,
                         const MatrixXd& C_prev, const VectorXd& Hdiag_prev,
                         const SmootherOutput& smo, std::vector<std::string>* warnings) {
  const int k1 = static_cast<int>(std::lround(
      static_cast<double>(smo.f_sm.front().size()) / C_prev.cols()));
  const int k2 = static_cast<int>(C_prev.cols());
  const Dims d = dims_of(y, smo, k1, k2);
  const VectorXd kinv = Kdiag_prev.cwiseInverse();
  const VectorXd hinv = Hdiag_prev.cwiseInverse();

  MatrixXd sys = MatrixXd::Zero(d.p1 * d.k1, d.p1 * d.k1);
  VectorXd rhs = VectorXd::Zero(d.p1 * d.k1);
  for (int t = 0; t < d.T; ++t) {
    const MatrixXd wt = y.mask_at(t);
    const MatrixXd yo = y.observed(t);
    const MatrixXd ft = unvec_factor(smo.f_sm[t], d.k1, d.k2);
    const MatrixXd sec = second_moment(smo, t);
    const MatrixXd scaled =
        wt.cwiseProduct(hinv.asDiagonal() * yo * kinv.asDiagonal());  // W o H^-1 Y K^-1
    rhs += linalg::vec(scaled * C_prev * ft.transpose());
    // Off-diagonal special partitions of the stacked mask vanish, so only
    // the (s, s) terms of the double sum contribute.
    for (int s = 0; s < d.p1; ++s) {
      const VectorXd wrow = wt.row(s).transpose().cwiseProduct(kinv);
      const MatrixXd weight = C_prev.transpose() * wrow.asDiagonal() * C_prev;
      const MatrixXd g = linalg::star(weight, sec, d.k1, d.k1);
      for (int a = 0; a < d.k1; ++a)
        for (int b = 0; b < d.k1; ++b)
          sys(a * d.p1 + s, b * d.p1 + s) += g(a, b) * hinv(s);
    }
  }

  Eigen::FullPivLU<MatrixXd> lu(sys);
  if (!lu.isInvertible() || lu.rcond() < 1e-13) {
    sys += kRidge * MatrixXd::Identity(sys.rows(), sys.cols());
    if (warnings != nullptr)
      warnings->push_back("mstep_R_missing: singular system, ridge added");
  }
  return linalg::unvec(sys.ldlt().solve(rhs), d.p1, d.k1);
}

MatrixXd mstep_C_missing(const MatrixSeries& y, const VectorXd& Hdiag_prev,
                         const MatrixXd& R_new, const VectorXd& Kdiag_prev,
                         const SmootherOutput& smo, std::vector<std::string>* warnings) {
  const int k1 = static_cast<int>(R_new.cols());
  const int k2 = static_cast<int>(std::lround(
      static_cast<double>(smo.f_sm.front().size()) / R_new.cols()));
  const Dims d = dims_of(y, smo, k1, k2);
  const VectorXd kinv = Kdiag_prev.cwiseInverse();
  const VectorXd hinv = Hdiag_prev.cwiseInverse();
  const MatrixXd km = linalg::commutation_matrix(d.k1, d.k2);

  MatrixXd sys = MatrixXd::Zero(d.p2 * d.k2, d.p2 * d.k2);
  VectorXd rhs = VectorXd::Zero(d.p2 * d.k2);
  for (int t = 0; t < d.T; ++t) {
    const MatrixXd wt = y.mask_at(t);
    const MatrixXd yo = y.observed(t);
    const MatrixXd ft = unvec_factor(smo.f_sm[t], d.k1, d.k2);
    const MatrixXd seck = km * second_moment(smo, t) * km.transpose();
    const MatrixXd scaled = wt.cwiseProduct(hinv.asDiagonal() * yo * kinv.asDiagonal());
    rhs += linalg::vec(scaled.transpose() * R_new * ft);
    for (int s = 0; s < d.p2; ++s) {
      const VectorXd wcol = wt.col(s).cwiseProduct(hinv);
      const MatrixXd weight = R_new.transpose() * wcol.asDiagonal() * R_new;
      const MatrixXd g = linalg::star(weight, seck, d.k2, d.k2);
      for (int a = 0; a < d.k2; ++a)
        for (int b = 0; b < d.k2; ++b)
          sys(a * d.p2 + s, b * d.p2 + s) += g(a, b) * kinv(s);
    }
  }

  Eigen::FullPivLU<MatrixXd> lu(sys);
  if (!lu.isInvertible() || lu.rcond() < 1e-13) {
    sys += kRidge * MatrixXd::Identity(sys.rows(), sys.cols());
    if (warnings != nullptr)
      warnings->push_back("mstep_C_missing: singular system, ridge added");
  }
  return linalg::unvec(sys.ldlt().solve(rhs), d.p2, d.k2);
}

std::pair<VectorXd, VectorXd> mstep_HK_missing(const MatrixSeries& y, const VectorXd& Hdiag_prev,
                                               const VectorXd& Kdiag_prev, const MatrixXd& R_new,
                                               const MatrixXd& C_new, const SmootherOutput& smo) {
  const int k1 = static_cast<int>(R_new.cols());
  const int k2 = static_cast<int>(C_new.cols());
  const Dims d = dims_of(y, smo, k1, k2);
  const VectorXd kinv = Kdiag_prev.cwiseInverse();
  const MatrixXd km = linalg::commutation_matrix(d.k1, d.k2);

  VectorXd hacc = VectorXd::Zero(d.p1);
  for (int t = 0; t < d.T; ++t) {
    const MatrixXd wt = y.mask_at(t);
    const MatrixXd yo = y.observed(t);
    const MatrixXd ft = unvec_factor(smo.f_sm[t], d.k1, d.k2);
    const MatrixXd sec = second_moment(smo, t);
    const MatrixXd wp = wt.cwiseProduct(R_new * ft * C_new.transpose());
    hacc += (yo.cwiseProduct(yo) * kinv.asDiagonal()).rowwise().sum();
    hacc -= 2.0 * (yo.cwiseProduct(wp) * kinv.asDiagonal()).rowwise().sum();
    for (int b = 0; b < d.p2; ++b) {
      // row block b of kron(C, R): kron(C.row(b), R)
      MatrixXd gb(d.p1, d.m);
      for (int g = 0; g < d.k2; ++g) gb.middleCols(g * d.k1, d.k1) = C_new(b, g) * R_new;
      const VectorXd diag_b = (gb * sec).cwiseProduct(gb).rowwise().sum();
      hacc += kinv(b) * wt.col(b).cwiseProduct(wt.col(b)).cwiseProduct(diag_b);
    }
    // Masked cells contribute the model-implied variance of the previous fit.
    hacc += Hdiag_prev.cwiseProduct(
        (MatrixXd::Ones(d.p1, d.p2) - wt).rowwise().sum());
  }
  VectorXd hnew = (hacc / (static_cast<double>(d.T) * d.p2)).cwiseMax(kVarFloor);

  const VectorXd hinv_new = hnew.cwiseInverse();
  VectorXd kacc = VectorXd::Zero(d.p2);
  for (int t = 0; t < d.T; ++t) {
    const MatrixXd wt = y.mask_at(t);
    const MatrixXd yo = y.observed(t);
    const MatrixXd ft = unvec_factor(smo.f_sm[t], d.k1, d.k2);
    const MatrixXd seck = km * second_moment(smo, t) * km.transpose();
    const MatrixXd wp = wt.cwiseProduct(R_new * ft * C_new.transpose());
    kacc += (hinv_new.asDiagonal() * yo.cwiseProduct(yo)).colwise().sum().transpose();
    kacc -= 2.0 * (hinv_new.asDiagonal() * yo.cwiseProduct(wp)).colwise().sum().transpose();
    for (int a = 0; a < d.p1; ++a) {
      // row block a of kron(R, C): kron(R.row(a), C)
      MatrixXd ga(d.p2, d.m);
      for (int g = 0; g < d.k1; ++g) ga.middleCols(g * d.k2, d.k2) = R_new(a, g) * C_new;
      const VectorXd diag_a = (ga * seck).cwiseProduct(ga).rowwise().sum();
      const VectorXd wrow = wt.row(a).transpose();
      kacc += hinv_new(a) * wrow.cwiseProduct(wrow).cwiseProduct(diag_a);
    }
    // Imputed second moment from the previous fit, reweighted by the row
    // variances just updated; this keeps the expected log-likelihood
    // gradient exactly zero at the update.
    kacc += Kdiag_prev.cwiseProduct(
        ((MatrixXd::Ones(d.p1, d.p2) - wt).transpose() *
         Hdiag_prev.cwiseProduct(hinv_new)));
  }
  VectorXd knew = (kacc / (static_cast<double>(d.T) * d.p1)).cwiseMax(kVarFloor);
  return {hnew, knew};
}

bool convergence_check(double loglik_n, double loglik_np1, double eps) {
  if (!std::isfinite(loglik_n) || !std::isfinite(loglik_np1))
    throw std::invalid_argument("convergence_check: non-finite log-likelihood");
  const double denom = std::max(1.0, 0.5 * std::abs(loglik_np1 + loglik_n));
  return std::abs(loglik_np1 - loglik_n) / denom < eps;
}

void normalize_idio(DmfmParams& theta) {
  const double mh = theta.Hdiag.mean();
  theta.Hdiag /= mh;
  theta.Kdiag *= mh;
  // The rescale can push a floored diagonal back below the floor when the
  // fit is degenerate (noiseless data); the filter needs it strictly positive.
  theta.Hdiag = theta.Hdiag.cwiseMax(kVarFloor);
  theta.Kdiag = theta.Kdiag.cwiseMax(kVarFloor);
}

namespace {

double rel_change(double l0, double l1) {
  return std::abs(l1 - l0) / std::max(1.0, 0.5 * std::abs(l1 + l0));
}

// Rank-one factorization of a Kronecker-structured square matrix:
// m ~ kron(b, a) with a k1 x k1, b k2 x k2.
std::pair<MatrixXd, MatrixXd> nearest_kron_factors(const MatrixXd& m, int k1, int k2) {
  MatrixXd rearranged(k2 * k2, k1 * k1);
  for (int j = 0; j < k2; ++j)
    for (int i = 0; i < k2; ++i)
      rearranged.row(j * k2 + i) =
          linalg::vec(m.block(i * k1, j * k1, k1, k1)).transpose();
  Eigen::JacobiSVD<MatrixXd> svd(rearranged, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double s = std::sqrt(svd.singularValues()(0));
  MatrixXd a = linalg::unvec(s * svd.matrixV().col(0), k1, k1);
  MatrixXd b = linalg::unvec(s * svd.matrixU().col(0), k2, k2);
  if (a.trace() < 0.0) {
    a = -a;
    b = -b;
  }
  return {a, b};
}

void project_transition(DmfmParams& theta, EmConfig::Mode mode,
                        std::vector<std::string>* warnings) {
  const double cap = (mode == EmConfig::Mode::Levels) ? kLevelsCap : kStationaryCap;
  const double rho = spectral_radius(theta.BA);
  if (rho > cap) {
    theta.BA *= cap / rho;
    if (warnings != nullptr)
      warnings->push_back("transition spectral radius " + std::to_string(rho) +
                          " rescaled to " + std::to_string(cap));
  }
}

}  // namespace

EmReport run_em(const MatrixSeries& y, const EmConfig& cfg, const pe::PeInit& init) {
  y.check_consistent();
  const int m = cfg.k1 * cfg.k2;
  const bool masked = y.has_mask();
  if (masked && !cfg.missing_aware)
    throw std::invalid_argument("run_em: masked input requires missing_aware");

  EmReport rep;
  rep.warnings = init.warnings;

  DmfmParams theta = pe::theta_from_pe(init, cfg.k1, cfg.k2);
  normalize_idio(theta);
  project_transition(theta, cfg.mode, &rep.warnings);
  if (cfg.separate_mar) {
    std::tie(theta.A, theta.B) = nearest_kron_factors(theta.BA, cfg.k1, cfg.k2);
    auto [p0, q0] = nearest_kron_factors(theta.QP, cfg.k1, cfg.k2);
    theta.P = floor_psd(p0, kCovFloor);
    theta.Q = floor_psd(q0, kCovFloor);
    theta.has_separate = true;
    theta.BA = linalg::kron(theta.B, theta.A);
    theta.QP = floor_psd(linalg::kron(theta.Q, theta.P), kCovFloor);
  }

  VectorXd f00 = VectorXd::Zero(m);
  const MatrixXd pi00 = MatrixXd::Identity(m, m);
  kalman::SmootherOutput smo;
  for (int n = 0;; ++n) {
    const auto ss = kalman::build_state_space(theta, f00, pi00);
    smo = kalman::smooth(y, ss);
    rep.loglik_path.push_back(smo.loglik);
    if (n >= 1) {
      rep.delta_path.push_back(rel_change(rep.loglik_path[n - 1], rep.loglik_path[n]));
      if (convergence_check(rep.loglik_path[n - 1], rep.loglik_path[n], cfg.eps)) {
        rep.converged = true;
        rep.n_star = n - 1;
        break;
      }
    }
    if (n == cfg.n_max) break;

    MatrixXd r_new, c_new;
    VectorXd h_new, k_new;
    if (masked) {
      r_new = mstep_R_missing(y, theta.Kdiag, theta.C, theta.Hdiag, smo, &rep.warnings);
      c_new = mstep_C_missing(y, theta.Hdiag, r_new, theta.Kdiag, smo, &rep.warnings);
      std::tie(h_new, k_new) =
          mstep_HK_missing(y, theta.Hdiag, theta.Kdiag, r_new, c_new, smo);
    } else {
      r_new = mstep_R(y, theta.Kdiag, theta.C, smo, &rep.warnings);
      c_new = mstep_C(y, theta.Hdiag, r_new, smo, &rep.warnings);
      h_new = mstep_H(y, theta.Kdiag, r_new, c_new, smo);
      k_new = mstep_K(y, h_new, r_new, c_new, smo);
    }
    theta.R = r_new;
    theta.C = c_new;
    theta.Hdiag = h_new;
    theta.Kdiag = k_new;
    normalize_idio(theta);

    if (cfg.separate_mar) {
      SeparateMar prev{theta.A, theta.B, theta.P, theta.Q};
      const SeparateMar upd = mstep_separate_mar(smo, prev, cfg.k1, cfg.k2, &rep.warnings);
      theta.A = upd.A;
      theta.B = upd.B;
      theta.P = upd.P;
      theta.Q = upd.Q;
      theta.BA = linalg::kron(theta.B, theta.A);
      theta.QP = floor_psd(linalg::kron(theta.Q, theta.P), kCovFloor);
    } else {
      std::tie(theta.BA, theta.QP) = mstep_dynamics(smo, &rep.warnings);
    }
    project_transition(theta, cfg.mode, &rep.warnings);
    f00 = smo.f0_sm;
  }

  rep.theta = theta;
  rep.F_hat.reserve(y.size());
  rep.S_hat.reserve(y.size());
  for (int t = 0; t < y.size(); ++t) {
    rep.F_hat.push_back(linalg::unvec(smo.f_sm[t], cfg.k1, cfg.k2));
    rep.S_hat.push_back(theta.R * rep.F_hat.back() * theta.C.transpose());
  }
  return rep;
}

EmReport run_em(const MatrixSeries& y, const EmConfig& cfg) {
  if (y.has_mask()) {
    if (!cfg.missing_aware)
      throw std::invalid_argument("run_em: masked input requires missing_aware");
    return run_em(y, cfg, pe::balanced_subpanel_init(y, cfg.k1, cfg.k2));
  }
  return run_em(y, cfg, pe::pe_fit(y, cfg.k1, cfg.k2));
}

}  // namespace dmfm::em
