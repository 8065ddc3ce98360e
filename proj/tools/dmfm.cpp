#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <thread>

#include "dmfm/em.hpp"
#include "dmfm/io.hpp"
#include "dmfm/metrics.hpp"
#include "dmfm/pe.hpp"
#include "dmfm/replicate.hpp"
#include "dmfm/sim.hpp"

namespace fs = std::filesystem;
using dmfm::io::fmt;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat config handling: flags override file values, unknown keys rejected.
class Settings {
 public:
  Settings(const std::map<std::string, std::string>& file_kv,
           const std::set<std::string>& allowed)
      : kv_(file_kv) {
    for (const auto& [k, v] : kv_)
      if (allowed.count(k) == 0) throw UsageError("unknown config key: " + k);
  }

  void override_with(const std::string& key, const std::string& value) { kv_[key] = value; }
  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : it->second;
  }
  double num(const std::string& key, double dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw UsageError("config key " + key + " is not numeric");
    return v;
  }
  long integer(const std::string& key, long dflt) const {
    const double v = num(key, static_cast<double>(dflt));
    if (v != std::floor(v)) throw UsageError("config key " + key + " must be an integer");
    return static_cast<long>(v);
  }

 private:
  std::map<std::string, std::string> kv_;
};

dmfm::sim::DgpConfig dgp_from(const Settings& s) {
  dmfm::sim::DgpConfig cfg;
  cfg.T = static_cast<int>(s.integer("T", 100));
  cfg.p1 = static_cast<int>(s.integer("p1", 20));
  cfg.p2 = static_cast<int>(s.integer("p2", 20));
  cfg.k1 = static_cast<int>(s.integer("k1", 2));
  cfg.k2 = static_cast<int>(s.integer("k2", 2));
  cfg.mu = s.num("mu", 0.7);
  cfg.delta = s.num("delta", 0.0);
  cfg.tau = s.num("tau", 0.0);
  const std::string fam = s.str("family", "N");
  if (fam == "N")
    cfg.family = dmfm::sim::Family::MatrixNormal;
  else if (fam == "St")
    cfg.family = dmfm::sim::Family::MatrixSkewT4;
  else
    throw UsageError("family must be N or St");
  const std::string miss = s.str("missing", "none");
  if (miss == "none") {
    cfg.missing.kind = dmfm::sim::MissingKind::None;
  } else {
    cfg.missing.kind = (miss == "random")  ? dmfm::sim::MissingKind::Random
                       : (miss == "block") ? dmfm::sim::MissingKind::Block
                                           : throw UsageError("missing must be none|random|block");
    cfg.missing.pi = s.num("pi", 0.25);
    if (cfg.missing.pi <= 0.0 || cfg.missing.pi >= 1.0)
      throw UsageError("pi must be inside (0, 1)");
  }
  cfg.seed = static_cast<std::uint64_t>(s.integer("seed", 1));
  if (cfg.T < 1 || cfg.p1 < 1 || cfg.p2 < 1) throw UsageError("dimensions must be positive");
  if (cfg.mu <= 0.0 || cfg.mu > 1.0) throw UsageError("mu must be in (0, 1]");
  if (cfg.delta < 0.0 || cfg.delta >= 1.0) throw UsageError("delta must be in [0, 1)");
  if (cfg.tau < 0.0 || cfg.tau >= 1.0) throw UsageError("tau must be in [0, 1)");
  return cfg;
}

void ensure_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw std::runtime_error("cannot create output dir: " + out);
}

int cmd_simulate(const Settings& s, const std::string& out) {
  ensure_out_dir(out);
  const auto cfg = dgp_from(s);
  const auto truth = dmfm::sim::simulate(cfg);
  dmfm::io::write_panel(out + "/panel.txt", truth.Y);
  if (truth.Y.has_mask()) dmfm::io::write_mask(out + "/mask.txt", truth.Y.mask);
  dmfm::io::write_truth(out + "/truth.txt", truth, cfg);
  std::cout << "simulate T=" << cfg.T << " p1=" << cfg.p1 << " p2=" << cfg.p2
            << " mu=" << fmt(cfg.mu) << " delta=" << fmt(cfg.delta) << " tau=" << fmt(cfg.tau)
            << " family=" << (cfg.family == dmfm::sim::Family::MatrixNormal ? "N" : "St")
            << " missing=" << s.str("missing", "none") << " seed=" << cfg.seed << '\n';
  return 0;
}

int cmd_estimate(const Settings& s, const std::string& out) {
  ensure_out_dir(out);
  const std::string panel = s.str("panel", "");
  if (panel.empty()) throw UsageError("estimate requires panel=PATH");
  dmfm::MatrixSeries y = dmfm::io::read_panel(panel);

  dmfm::em::EmConfig cfg;
  cfg.missing_aware = s.str("missing_aware", "false") == "true";
  if (y.has_mask() && !cfg.missing_aware)
    throw UsageError("panel has missing entries; pass --missing-aware to enable imputation");
  if (s.has("k1") && s.has("k2")) {
    cfg.k1 = static_cast<int>(s.integer("k1", 2));
    cfg.k2 = static_cast<int>(s.integer("k2", 2));
  } else {
    const int kmax = static_cast<int>(s.integer("kmax", 8));
    std::tie(cfg.k1, cfg.k2) = dmfm::pe::eigenvalue_ratio_k(y, kmax);
  }
  cfg.eps = s.num("eps", 1e-4);
  cfg.n_max = static_cast<int>(s.integer("n_max", 100));
  const std::string mode = s.str("mode", "stationary");
  if (mode == "levels")
    cfg.mode = dmfm::em::EmConfig::Mode::Levels;
  else if (mode != "stationary")
    throw UsageError("mode must be stationary or levels");
  cfg.separate_mar = s.str("separate_mar", "false") == "true";

  const auto rep = dmfm::em::run_em(y, cfg);
  dmfm::io::write_report(out + "/report.txt", rep);
  dmfm::io::write_loglik_csv(out + "/loglik.csv", rep.loglik_path);
  dmfm::MatrixSeries shat{rep.S_hat, {}};
  dmfm::MatrixSeries fhat{rep.F_hat, {}};
  dmfm::io::write_panel(out + "/S_hat.txt", shat);
  dmfm::io::write_panel(out + "/F_hat.txt", fhat);

  std::cout << "estimate k1=" << cfg.k1 << " k2=" << cfg.k2
            << " converged=" << (rep.converged ? "true" : "false")
            << " passes=" << rep.loglik_path.size()
            << " loglik=" << fmt(rep.loglik_path.back()) << '\n';

  const std::string truth_path = s.str("truth", "");
  if (!truth_path.empty()) {
    const auto tf = dmfm::io::read_truth(truth_path);
    const double dr = dmfm::metrics::col_space_distance(tf.R, rep.theta.R);
    const double dc = dmfm::metrics::col_space_distance(tf.C, rep.theta.C);
    const double ms = dmfm::metrics::mse_signal(tf.S, rep.S_hat);
    std::cout << "metrics D_R=" << fmt(dr) << " D_C=" << fmt(dc) << " MSE_S=" << fmt(ms);
    if (y.has_mask() && !tf.Y.empty()) {
      dmfm::MatrixSeries complete{tf.Y, {}};
      std::cout << " MSE_Y0=" << fmt(dmfm::metrics::mse_missing(complete, rep.S_hat, y.mask));
    }
    std::cout << '\n';
  }
  return 0;
}

int cmd_replicate(const Settings& s, const std::string& out, const std::string& table) {
  ensure_out_dir(out);
  const int reps = static_cast<int>(s.integer("reps", 20));
  if (reps < 1) throw UsageError("reps must be positive");
  const auto seed = static_cast<std::uint64_t>(s.integer("seed", 1));
  const int T = static_cast<int>(s.integer("T", 100));
  int threads = static_cast<int>(s.integer("threads", 0));
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());

  const auto rows = dmfm::replicate::table_scenarios(table, T);
  std::vector<dmfm::replicate::RatioStats> stats;
  stats.reserve(rows.size());
  for (const auto& row : rows) {
    stats.push_back(dmfm::replicate::run_scenario(row, reps, seed, threads));
    std::cout << "done " << row.label() << '\n';
  }
  const std::string text = dmfm::replicate::format_table(table, rows, stats, seed);
  dmfm::io::write_text(out + "/table_" + table + ".txt", text);
  std::cout << text;
  return 0;
}

int cmd_loglik_figure(const Settings& s, const std::string& out) {
  ensure_out_dir(out);
  const int n_max = static_cast<int>(s.integer("n_max", 30));
  const auto seed = static_cast<std::uint64_t>(s.integer("seed", 1));

  auto run_case = [&](double mu, dmfm::em::EmConfig::Mode mode, const std::string& name) {
    dmfm::replicate::Scenario scen;
    scen.mu = mu;
    scen.delta = s.num("delta", 0.7);
    scen.tau = s.num("tau", 0.5);
    scen.p1 = static_cast<int>(s.integer("p1", 20));
    scen.p2 = static_cast<int>(s.integer("p2", 20));
    scen.T = static_cast<int>(s.integer("T", 100));
    scen.mode = mode;
    const auto truth = dmfm::sim::simulate(scen.dgp(seed));
    dmfm::em::EmConfig cfg = scen.em_config();
    cfg.n_max = n_max;
    cfg.eps = 0.0;  // trace the full path
    const auto rep = dmfm::em::run_em(truth.Y, cfg);
    dmfm::io::write_loglik_csv(out + "/loglik_" + name + ".csv", rep.loglik_path);
    std::cout << "loglik_" << name << " passes=" << rep.loglik_path.size() << '\n';
  };
  run_case(0.7, dmfm::em::EmConfig::Mode::Stationary, "stationary");
  run_case(1.0, dmfm::em::EmConfig::Mode::Levels, "levels");
  return 0;
}

const std::set<std::string> kSimKeys = {"T",     "p1",  "p2",    "k1",   "k2",  "mu",
                                        "delta", "tau", "family", "missing", "pi", "seed"};
const std::set<std::string> kEstKeys = {"panel", "truth", "k1",   "k2",   "kmax",
                                        "eps",   "n_max", "mode", "seed", "missing_aware",
                                        "separate_mar"};
const std::set<std::string> kRepKeys = {"reps", "seed", "T", "threads"};
const std::set<std::string> kFigKeys = {"T", "p1", "p2", "delta", "tau", "n_max", "seed"};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic matrix factor model estimation toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", table = "T1", mode;
  long seed = -1, reps = -1, k1 = -1, k2 = -1;
  bool missing_aware = false, separate_mar = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "flat key = value config file");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--out", out_dir, "output directory");
  };
  auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic panel");
  add_common(sim_cmd);
  auto* est_cmd = app.add_subcommand("estimate", "fit the model to a panel file");
  add_common(est_cmd);
  std::string panel_path, truth_path;
  est_cmd->add_option("--panel", panel_path, "panel file to estimate");
  est_cmd->add_option("--truth", truth_path, "truth sidecar for metric printout");
  est_cmd->add_option("--mode", mode, "stationary|levels");
  est_cmd->add_option("--k1", k1, "row factor count");
  est_cmd->add_option("--k2", k2, "column factor count");
  est_cmd->add_flag("--missing-aware", missing_aware, "enable missing-data updates");
  est_cmd->add_flag("--separate-mar", separate_mar, "estimate the MAR factors separately");
  auto* rep_cmd = app.add_subcommand("replicate", "Monte Carlo ratio tables");
  add_common(rep_cmd);
  rep_cmd->add_option("--table", table, "T1|T2|T3|T4");
  rep_cmd->add_option("--reps", reps, "replicates per row");
  auto* fig_cmd = app.add_subcommand("loglik-figure", "per-iteration log-likelihood traces");
  add_common(fig_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    std::map<std::string, std::string> file_kv;
    if (!config_path.empty()) file_kv = dmfm::io::read_config_file(config_path);

    if (app.got_subcommand(sim_cmd)) {
      Settings s(file_kv, kSimKeys);
      if (seed >= 0) s.override_with("seed", std::to_string(seed));
      return cmd_simulate(s, out_dir);
    }
    if (app.got_subcommand(est_cmd)) {
      Settings s(file_kv, kEstKeys);
      if (seed >= 0) s.override_with("seed", std::to_string(seed));
      if (!panel_path.empty()) s.override_with("panel", panel_path);
      if (!truth_path.empty()) s.override_with("truth", truth_path);
      if (!mode.empty()) s.override_with("mode", mode);
      if (k1 >= 0) s.override_with("k1", std::to_string(k1));
      if (k2 >= 0) s.override_with("k2", std::to_string(k2));
      if (missing_aware) s.override_with("missing_aware", "true");
      if (separate_mar) s.override_with("separate_mar", "true");
      return cmd_estimate(s, out_dir);
    }
    if (app.got_subcommand(rep_cmd)) {
      Settings s(file_kv, kRepKeys);
      if (seed >= 0) s.override_with("seed", std::to_string(seed));
      if (reps >= 0) s.override_with("reps", std::to_string(reps));
      return cmd_replicate(s, out_dir, table);
    }
    if (app.got_subcommand(fig_cmd)) {
      Settings s(file_kv, kFigKeys);
      if (seed >= 0) s.override_with("seed", std::to_string(seed));
      return cmd_loglik_figure(s, out_dir);
    }
  } catch (const UsageError& e) {
    std::cerr << "ERROR usage " << e.what() << '\n';
    return 2;
  } catch (const dmfm::kalman::NumericalError& e) {
    std::cerr << "ERROR numeric " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "ERROR runtime " << e.what() << '\n';
    return 3;
  }
  return 2;
}
