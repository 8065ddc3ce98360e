#include "dmfm/sim.hpp"

#include <cmath>
#include <stdexcept>

#include "dmfm/linalg.hpp"

namespace dmfm::sim {

namespace {

constexpr int kBurnIn = 200;

MatrixXd chol_lower(const MatrixXd& s, const char* what) {
  Eigen::LLT<MatrixXd> llt(s);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument(std::string(what) + ": covariance not positive definite");
  return llt.matrixL();
}

MatrixXd iid_normal(int m, int n, Rng& rng) {
  MatrixXd z(m, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < m; ++i) z(i, j) = rng.normal();
  return z;
}

// Standardized skew-normal entries (slant 1) under an inverse-chi-square
// t mixing with the stated degrees of freedom, rescaled to unit variance.
MatrixXd iid_skew_t(int m, int n, int df, Rng& rng) {
  const double slant_delta = 1.0 / std::sqrt(2.0);
  const double sn_mean = slant_delta * std::sqrt(2.0 / 3.14159265358979323846);
  const double sn_sd = std::sqrt(1.0 - 2.0 * slant_delta * slant_delta / 3.14159265358979323846);
  MatrixXd z(m, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < m; ++i) {
      const double u0 = rng.normal(), u1 = rng.normal();
      const double v = slant_delta * std::abs(u0) +
                       std::sqrt(1.0 - slant_delta * slant_delta) * u1;
      z(i, j) = (v - sn_mean) / sn_sd;
    }
  const double w = static_cast<double>(df) / rng.chi_squared(df);
  const double ew = static_cast<double>(df) / (df - 2.0);
  return std::sqrt(w / ew) * z;
}

MatrixXd draw(Family family, int m, int n, const MatrixXd& Lr, const MatrixXd& Lc, Rng& rng) {
  MatrixXd z = (family == Family::MatrixNormal) ? iid_normal(m, n, rng)
                                                : iid_skew_t(m, n, 4, rng);
  return Lr * z * Lc.transpose();
}

double spectral_radius(const MatrixXd& m) {
  Eigen::EigenSolver<MatrixXd> es(m, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

MatrixXd gen_loadings(int p, int k, Rng& rng) {
  if (k > p) throw std::invalid_argument("gen_loadings: k > p");
  MatrixXd out(p, k);
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < p; ++i) out(i, j) = rng.uniform(-1.0, 1.0);
  return out;
}

std::pair<MatrixXd, MatrixXd> gen_mar_coeffs(int k1, int k2, double mu, Rng& rng) {
  if (!(mu > 0.0 && mu <= 1.0)) throw std::invalid_argument("gen_mar_coeffs: mu must be in (0, 1]");
  auto fill = [&rng](int k) {
    MatrixXd m(k, k);
    for (int j = 0; j < k; ++j)
      for (int i = 0; i < k; ++i)
        m(i, j) = (i == j) ? rng.uniform(0.7, 0.9) : rng.uniform(0.0, 0.5);
    return m;
  };
  MatrixXd a = fill(k1);
  MatrixXd bstar = fill(k2);
  const double top = spectral_radius(linalg::kron(bstar, a));
  MatrixXd b = (mu / top) * bstar;
  return {a, b};
}

IdioCoeffs gen_idio_coeffs(int p1, int p2, double delta, double tau, Rng& rng) {
  if (delta < 0.0 || delta >= 1.0 || tau < 0.0 || tau >= 1.0)
    throw std::invalid_argument("gen_idio_coeffs: delta, tau must be in [0, 1)");
  IdioCoeffs out;
  auto diag_u = [&rng, delta](int p) {
    MatrixXd m = MatrixXd::Zero(p, p);
    for (int i = 0; i < p; ++i) m(i, i) = (delta == 0.0) ? 0.0 : rng.uniform(0.0, delta);
    return m;
  };
  auto banded = [&rng, tau](int p) {
    MatrixXd m(p, p);
    for (int j = 0; j < p; ++j)
      for (int i = 0; i < p; ++i)
        m(i, j) = (i == j) ? rng.uniform(0.7, 1.2) : std::pow(tau, std::abs(i - j));
    return m;
  };
  out.D = diag_u(p1);
  out.G = diag_u(p2);
  out.H = banded(p1);
  out.K = banded(p2);
  return out;
}

MatrixXd sample_matrix_normal(int m, int n, const MatrixXd& Sr, const MatrixXd& Sc, Rng& rng) {
  const MatrixXd lr = chol_lower(Sr, "sample_matrix_normal");
  const MatrixXd lc = chol_lower(Sc, "sample_matrix_normal");
  return draw(Family::MatrixNormal, m, n, lr, lc, rng);
}

MatrixXd sample_matrix_skew_t(int m, int n, const MatrixXd& Sr, const MatrixXd& Sc,
                              int df, Rng& rng) {
  if (df <= 2) throw std::invalid_argument("sample_matrix_skew_t: df must exceed 2");
  const MatrixXd lr = chol_lower(Sr, "sample_matrix_skew_t");
  const MatrixXd lc = chol_lower(Sc, "sample_matrix_skew_t");
  MatrixXd z = iid_skew_t(m, n, df, rng);
  return lr * z * lc.transpose();
}

SimTruth simulate(const DgpConfig& cfg) {
  if (cfg.T < 1 || cfg.p1 < 1 || cfg.p2 < 1 || cfg.k1 < 1 || cfg.k2 < 1)
    throw std::invalid_argument("simulate: dimensions must be positive");
  Rng rng(cfg.seed);

  SimTruth out;
  out.nonstationary = (cfg.mu == 1.0);
  out.R = gen_loadings(cfg.p1, cfg.k1, rng);
  out.C = gen_loadings(cfg.p2, cfg.k2, rng);
  std::tie(out.A, out.B) = gen_mar_coeffs(cfg.k1, cfg.k2, cfg.mu, rng);
  IdioCoeffs idio = gen_idio_coeffs(cfg.p1, cfg.p2, cfg.delta, cfg.tau, rng);
  out.D = idio.D;
  out.G = idio.G;
  out.H = idio.H;
  out.K = idio.K;

  const MatrixXd lh = chol_lower(idio.H, "simulate");
  const MatrixXd lk = chol_lower(idio.K, "simulate");
  const MatrixXd eye1 = MatrixXd::Identity(cfg.k1, cfg.k1);
  const MatrixXd eye2 = MatrixXd::Identity(cfg.k2, cfg.k2);

  MatrixXd f = MatrixXd::Zero(cfg.k1, cfg.k2);
  MatrixXd e = MatrixXd::Zero(cfg.p1, cfg.p2);
  for (int t = 0; t < kBurnIn; ++t) {
    f = out.A * f * out.B.transpose() + draw(cfg.family, cfg.k1, cfg.k2, eye1, eye2, rng);
    e = out.D * e * out.G.transpose() + draw(cfg.family, cfg.p1, cfg.p2, lh, lk, rng);
  }
  if (out.nonstationary) {
    // Restart the unit-root direction at zero; stationary directions keep
    // their burned-in state.
    const MatrixXd phi = linalg::kron(out.B, out.A);
    Eigen::EigenSolver<MatrixXd> es(phi);
    Eigen::Index top = 0;
    es.eigenvalues().cwiseAbs().maxCoeff(&top);
    Eigen::VectorXd v = es.eigenvectors().col(top).real();
    Eigen::EigenSolver<MatrixXd> est(MatrixXd(phi.transpose()));
    Eigen::Index topl = 0;
    est.eigenvalues().cwiseAbs().maxCoeff(&topl);
    Eigen::VectorXd w = est.eigenvectors().col(topl).real();
    w /= w.dot(v);
    VectorXd fv = linalg::vec(f);
    fv -= v * w.dot(fv);
    f = linalg::unvec(fv, cfg.k1, cfg.k2);
  }

  out.F.reserve(cfg.T);
  out.S.reserve(cfg.T);
  out.Y.frames.reserve(cfg.T);
  for (int t = 0; t < cfg.T; ++t) {
    f = out.A * f * out.B.transpose() + draw(cfg.family, cfg.k1, cfg.k2, eye1, eye2, rng);
    e = out.D * e * out.G.transpose() + draw(cfg.family, cfg.p1, cfg.p2, lh, lk, rng);
    out.F.push_back(f);
    out.S.push_back(out.R * f * out.C.transpose());
    out.Y.frames.push_back(out.S.back() + e);
  }

  if (cfg.missing.kind != MissingKind::None)
    out.Y = apply_missing(out.Y, cfg.missing, rng);
  return out;
}

MatrixSeries apply_missing(const MatrixSeries& y, const MissingSpec& spec, Rng& rng) {
  MatrixSeries out = y;
  const int T = y.size();
  const Eigen::Index p1 = y.rows(), p2 = y.cols();
  out.mask.assign(T, MatrixXd::Ones(p1, p2));
  switch (spec.kind) {
    case MissingKind::None:
      out.mask.clear();
      return out;
    case MissingKind::Random:
      for (int t = 0; t < T; ++t)
        for (Eigen::Index j = 0; j < p2; ++j)
          for (Eigen::Index i = 0; i < p1; ++i)
            if (rng.uniform() < spec.pi) out.mask[t](i, j) = 0.0;
      return out;
    case MissingKind::Block: {
      const Eigen::Index half_rows = p1 / 2, half_cols = p2 / 2;
      for (int t = 0; t < T / 2; ++t) {
        if (spec.pi <= 0.25 + 1e-12 && spec.pi >= 0.25 - 1e-12) {
          out.mask[t].block(half_rows, half_cols, p1 - half_rows, p2 - half_cols).setZero();
        } else if (spec.pi <= 0.50 + 1e-12 && spec.pi >= 0.50 - 1e-12) {
          out.mask[t].rightCols(p2 - half_cols).setZero();
        } else {
          throw std::invalid_argument("apply_missing: block pattern defined for pi in {0.25, 0.5}");
        }
      }
      return out;
    }
  }
  throw std::logic_error("apply_missing: unreachable");
}

}  // namespace dmfm::sim
