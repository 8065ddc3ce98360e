#pragma once

#include <map>
#include <string>
#include <vector>

#include "dmfm/em.hpp"
#include "dmfm/series.hpp"
#include "dmfm/sim.hpp"

namespace dmfm::io {

// Shortest round-trippable decimal form.
std::string fmt(double x);

// Panel format: first line "T p1 p2", then T blocks of p1 lines with p2
// whitespace-separated values; missing entries written as NA.
void write_panel(const std::string& path, const MatrixSeries& y);
MatrixSeries read_panel(const std::string& path);

// Same layout with 0/1 entries.
void write_mask(const std::string& path, const std::vector<Eigen::MatrixXd>& mask);
std::vector<Eigen::MatrixXd> read_mask(const std::string& path);

// Flat key/value header plus labelled CSV sections (R, C, S, and the
// complete panel when a mask is present).
void write_truth(const std::string& path, const sim::SimTruth& truth, const sim::DgpConfig& cfg);
struct TruthFile {
  std::map<std::string, std::string> header;
  Eigen::MatrixXd R, C;
  std::vector<Eigen::MatrixXd> S;
  std::vector<Eigen::MatrixXd> Y;  // empty unless the panel was masked
};
TruthFile read_truth(const std::string& path);

void write_report(const std::string& path, const em::EmReport& rep);
void write_loglik_csv(const std::string& path, const std::vector<double>& loglik);

// Flat "key = value" config text; '#' starts a comment. serialize_config
// emits keys sorted so parse/serialize round-trips exactly.
std::map<std::string, std::string> parse_config(const std::string& text);
std::string serialize_config(const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> read_config_file(const std::string& path);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace dmfm::io
