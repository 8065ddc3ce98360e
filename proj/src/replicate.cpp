#include "dmfm/replicate.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dmfm/io.hpp"
#include "dmfm/pe.hpp"

namespace dmfm::replicate {

sim::DgpConfig Scenario::dgp(std::uint64_t seed) const {
  sim::DgpConfig cfg;
  cfg.T = T;
  cfg.p1 = p1;
  cfg.p2 = p2;
  cfg.k1 = k1;
  cfg.k2 = k2;
  cfg.mu = mu;
  cfg.delta = delta;
  cfg.tau = tau;
  cfg.family = family;
  cfg.missing = missing;
  cfg.seed = seed;
  return cfg;
}

em::EmConfig Scenario::em_config() const {
  em::EmConfig cfg;
  cfg.k1 = k1;
  cfg.k2 = k2;
  cfg.mode = mode;
  cfg.missing_aware = (missing.kind != sim::MissingKind::None);
  cfg.separate_mar = separate_mar;
  return cfg;
}

std::string Scenario::label() const {
  std::ostringstream os;
  os << "mu=" << mu << " delta=" << delta << " tau=" << tau << " family="
     << (family == sim::Family::MatrixNormal ? "N" : "St");
  switch (missing.kind) {
    case sim::MissingKind::None: break;
    case sim::MissingKind::Random: os << " missing=random pi=" << missing.pi; break;
    case sim::MissingKind::Block: os << " missing=block pi=" << missing.pi; break;
  }
  os << " p1=" << p1 << " p2=" << p2 << " T=" << T;
  if (separate_mar) os << " separate_mar=1";
  if (mode == em::EmConfig::Mode::Levels) os << " mode=levels";
  return os.str();
}

ReplicateOutcome run_replicate(const Scenario& scen, std::uint64_t seed) {
  const sim::SimTruth truth = sim::simulate(scen.dgp(seed));
  const bool masked = truth.Y.has_mask();

  const pe::PeInit init = masked ? pe::balanced_subpanel_init(truth.Y, scen.k1, scen.k2)
                                 : pe::pe_fit(truth.Y, scen.k1, scen.k2);

  ReplicateOutcome out;
  out.pe.d_R = metrics::col_space_distance(truth.R, init.R0);
  out.pe.d_C = metrics::col_space_distance(truth.C, init.C0);
  std::vector<Eigen::MatrixXd> s_pe;
  s_pe.reserve(truth.S.size());
  for (size_t t = 0; t < truth.S.size(); ++t)
    s_pe.push_back(init.R0 * init.Ftilde[t] * init.C0.transpose());
  out.pe.mse_S = metrics::mse_signal(truth.S, s_pe);
  if (masked) out.pe.mse_Y0 = metrics::mse_missing(truth.Y, s_pe, truth.Y.mask);

  out.report = em::run_em(truth.Y, scen.em_config(), init);
  out.em.d_R = metrics::col_space_distance(truth.R, out.report.theta.R);
  out.em.d_C = metrics::col_space_distance(truth.C, out.report.theta.C);
  out.em.mse_S = metrics::mse_signal(truth.S, out.report.S_hat);
  if (masked) out.em.mse_Y0 = metrics::mse_missing(truth.Y, out.report.S_hat, truth.Y.mask);
  return out;
}

namespace {

struct Accum {
  double sum = 0.0, sumsq = 0.0;
  int n = 0;
  void add(double x) {
    sum += x;
    sumsq += x * x;
    ++n;
  }
  double mean() const { return sum / n; }
  double sd() const {
    if (n < 2) return 0.0;
    return std::sqrt(std::max(0.0, (sumsq - sum * sum / n) / (n - 1)));
  }
};

}  // namespace

RatioStats run_scenario(const Scenario& scen, int reps, std::uint64_t base_seed, int threads) {
  if (reps < 1) throw std::invalid_argument("run_scenario: replicate count must be positive");
  std::vector<ReplicateOutcome> outcomes(reps);
  const int nthreads = std::max(1, std::min(threads, reps));
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::atomic<bool> failed{false};
  std::string error_msg;
  std::mutex error_mu;
  for (int w = 0; w < nthreads; ++w)
    pool.emplace_back([&]() {
      for (;;) {
        const int r = next.fetch_add(1);
        if (r >= reps || failed.load()) return;
        try {
          outcomes[r] = run_replicate(scen, base_seed + static_cast<std::uint64_t>(r));
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(error_mu);
          error_msg = e.what();
          failed.store(true);
          return;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (failed.load()) throw std::runtime_error("run_scenario: replicate failed: " + error_msg);

  RatioStats stats;
  stats.reps = reps;
  Accum dr, dc, ms, y0;
  const bool masked = scen.missing.kind != sim::MissingKind::None;
  for (const auto& o : outcomes) {
    dr.add(o.em.d_R / o.pe.d_R);
    dc.add(o.em.d_C / o.pe.d_C);
    ms.add(o.em.mse_S / o.pe.mse_S);
    if (masked) y0.add(*o.em.mse_Y0 / *o.pe.mse_Y0);
  }
  stats.dR_mean = dr.mean();
  stats.dR_sd = dr.sd();
  stats.dC_mean = dc.mean();
  stats.dC_sd = dc.sd();
  stats.mseS_mean = ms.mean();
  stats.mseS_sd = ms.sd();
  if (masked) {
    stats.mseY0_mean = y0.mean();
    stats.mseY0_sd = y0.sd();
  }
  return stats;
}

std::vector<Scenario> table_scenarios(const std::string& table_id, int T) {
  std::vector<Scenario> rows;
  const std::vector<std::pair<int, int>> dims = {{20, 20}, {10, 30}};
  auto push = [&rows, T](double mu, double delta, double tau, sim::Family fam,
                         sim::MissingSpec miss, int p1, int p2, bool sep) {
    Scenario s;
    s.mu = mu;
    s.delta = delta;
    s.tau = tau;
    s.family = fam;
    s.missing = miss;
    s.p1 = p1;
    s.p2 = p2;
    s.T = T;
    s.separate_mar = sep;
    s.mode = (mu == 1.0) ? em::EmConfig::Mode::Levels : em::EmConfig::Mode::Stationary;
    rows.push_back(s);
  };
  const sim::MissingSpec none;
  if (table_id == "T1") {
    for (auto [p1, p2] : dims) push(0.7, 0.0, 0.0, sim::Family::MatrixNormal, none, p1, p2, false);
    for (auto [p1, p2] : dims) push(0.7, 0.7, 0.5, sim::Family::MatrixNormal, none, p1, p2, false);
    for (auto [p1, p2] : dims) push(0.7, 0.0, 0.0, sim::Family::MatrixSkewT4, none, p1, p2, false);
    for (auto [p1, p2] : dims) push(0.7, 0.7, 0.5, sim::Family::MatrixSkewT4, none, p1, p2, false);
    for (auto [p1, p2] : dims) push(1.0, 0.0, 0.0, sim::Family::MatrixNormal, none, p1, p2, false);
    for (auto [p1, p2] : dims) push(1.0, 0.7, 0.5, sim::Family::MatrixNormal, none, p1, p2, false);
  } else if (table_id == "T2") {
    for (auto kind : {sim::MissingKind::Random, sim::MissingKind::Block})
      for (auto fam : {sim::Family::MatrixNormal, sim::Family::MatrixSkewT4})
        for (double pi : {0.25, 0.50})
          for (auto [p1, p2] : dims)
            push(0.7, 0.0, 0.0, fam, sim::MissingSpec{kind, pi}, p1, p2, false);
  } else if (table_id == "T3") {
    for (auto [p1, p2] : dims) push(0.7, 0.0, 0.0, sim::Family::MatrixNormal, none, p1, p2, true);
    for (auto [p1, p2] : dims) push(0.7, 0.7, 0.5, sim::Family::MatrixNormal, none, p1, p2, true);
  } else if (table_id == "T4") {
    for (auto fam : {sim::Family::MatrixNormal, sim::Family::MatrixSkewT4})
      for (double pi : {0.25, 0.50})
        for (auto [p1, p2] : dims)
          push(0.7, 0.0, 0.0, fam, sim::MissingSpec{sim::MissingKind::Block, pi}, p1, p2, false);
    for (double pi : {0.25, 0.50})
      for (auto [p1, p2] : dims)
        push(1.0, 0.0, 0.0, sim::Family::MatrixNormal,
             sim::MissingSpec{sim::MissingKind::Block, pi}, p1, p2, false);
  } else {
    throw std::invalid_argument("unknown table id: " + table_id);
  }
  return rows;
}

std::string format_table(const std::string& table_id, const std::vector<Scenario>& rows,
                         const std::vector<RatioStats>& stats, std::uint64_t seed) {
  std::string out = "table " + table_id + '\n';
  out += "seed " + std::to_string(seed) + '\n';
  out += "reps " + std::to_string(stats.empty() ? 0 : stats.front().reps) + '\n';
  out += "columns D_R_mean D_R_sd D_C_mean D_C_sd MSE_S_mean MSE_S_sd";
  const bool masked = !stats.empty() && stats.front().mseY0_mean.has_value();
  if (masked) out += " MSE_Y0_mean MSE_Y0_sd";
  out += '\n';
  for (size_t i = 0; i < rows.size(); ++i) {
    out += "row " + rows[i].label() + " | ";
    const auto& s = stats[i];
    out += io::fmt(s.dR_mean) + ' ' + io::fmt(s.dR_sd) + ' ' + io::fmt(s.dC_mean) + ' ' +
           io::fmt(s.dC_sd) + ' ' + io::fmt(s.mseS_mean) + ' ' + io::fmt(s.mseS_sd);
    if (s.mseY0_mean.has_value())
      out += ' ' + io::fmt(*s.mseY0_mean) + ' ' + io::fmt(*s.mseY0_sd);
    out += '\n';
  }
  return out;
}

}  // namespace dmfm::replicate
