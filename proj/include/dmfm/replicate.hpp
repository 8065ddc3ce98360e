#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dmfm/em.hpp"
#include "dmfm/metrics.hpp"
#include "dmfm/sim.hpp"

namespace dmfm::replicate {

struct Scenario {
  double mu = 0.7, delta = 0.0, tau = 0.0;
  sim::Family family = sim::Family::MatrixNormal;
  sim::MissingSpec missing;
  int p1 = 20, p2 = 20, T = 100;
  int k1 = 2, k2 = 2;
  em::EmConfig::Mode mode = em::EmConfig::Mode::Stationary;
  bool separate_mar = false;

  sim::DgpConfig dgp(std::uint64_t seed) const;
  em::EmConfig em_config() const;
  std::string label() const;
};

struct RatioStats {
  int reps = 0;
  double dR_mean = 0.0, dR_sd = 0.0;
  double dC_mean = 0.0, dC_sd = 0.0;
  double mseS_mean = 0.0, mseS_sd = 0.0;
  std::optional<double> mseY0_mean, mseY0_sd;
};

struct ReplicateOutcome {
  metrics::MetricSet pe;
  metrics::MetricSet em;
  em::EmReport report;
};

// One simulate -> (projected pre-estimate, EM) -> metrics pass.
ReplicateOutcome run_replicate(const Scenario& scen, std::uint64_t seed);

// Mean and standard deviation of the per-replicate EM/PE metric ratios.
// Replicate r uses seed base_seed + r; results merge in replicate order,
// so output does not depend on the thread count.
RatioStats run_scenario(const Scenario& scen, int reps, std::uint64_t base_seed, int threads);

// Scenario rows of the desk-scale replication tables T1-T4.
std::vector<Scenario> table_scenarios(const std::string& table_id, int T);

std::string format_table(const std::string& table_id, const std::vector<Scenario>& rows,
                         const std::vector<RatioStats>& stats, std::uint64_t seed);

}  // namespace dmfm::replicate
