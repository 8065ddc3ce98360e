#include "dmfm/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace dmfm::io {

namespace {

void append_matrix(std::string& out, const Eigen::MatrixXd& m,
                   const Eigen::MatrixXd* mask = nullptr) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out += ' ';
      if (mask != nullptr && (*mask)(i, j) <= 0.5)
        out += "NA";
      else
        out += fmt(m(i, j));
    }
    out += '\n';
  }
}

std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> toks;
  std::string t;
  while (is >> t) toks.push_back(t);
  return toks;
}

Eigen::MatrixXd read_matrix(std::istream& in, Eigen::Index rows, Eigen::Index cols,
                            Eigen::MatrixXd* mask) {
  Eigen::MatrixXd m(rows, cols);
  if (mask != nullptr) *mask = Eigen::MatrixXd::Ones(rows, cols);
  std::string line;
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("panel: truncated file");
    const auto toks = tokenize(line);
    if (static_cast<Eigen::Index>(toks.size()) != cols)
      throw std::runtime_error("panel: wrong number of columns");
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (toks[j] == "NA") {
        if (mask == nullptr) throw std::runtime_error("panel: unexpected NA");
        m(i, j) = std::numeric_limits<double>::quiet_NaN();
        (*mask)(i, j) = 0.0;
      } else {
        m(i, j) = std::stod(toks[j]);
      }
    }
  }
  return m;
}

}  // namespace

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void write_panel(const std::string& path, const MatrixSeries& y) {
  std::string out = std::to_string(y.size()) + ' ' + std::to_string(y.rows()) + ' ' +
                    std::to_string(y.cols()) + '\n';
  for (int t = 0; t < y.size(); ++t)
    append_matrix(out, y.frames[t], y.has_mask() ? &y.mask[t] : nullptr);
  write_text(path, out);
}

MatrixSeries read_panel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open panel file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("panel: empty file");
  const auto hdr = tokenize(line);
  if (hdr.size() != 3) throw std::runtime_error("panel: header must be 'T p1 p2'");
  const int T = std::stoi(hdr[0]);
  const Eigen::Index p1 = std::stoi(hdr[1]), p2 = std::stoi(hdr[2]);

  MatrixSeries y;
  bool any_missing = false;
  std::vector<Eigen::MatrixXd> masks;
  for (int t = 0; t < T; ++t) {
    Eigen::MatrixXd mask;
    y.frames.push_back(read_matrix(in, p1, p2, &mask));
    any_missing = any_missing || (mask.array() < 0.5).any();
    masks.push_back(std::move(mask));
  }
  if (any_missing) y.mask = std::move(masks);
  return y;
}

void write_mask(const std::string& path, const std::vector<Eigen::MatrixXd>& mask) {
  if (mask.empty()) throw std::invalid_argument("write_mask: empty mask");
  std::string out = std::to_string(mask.size()) + ' ' + std::to_string(mask.front().rows()) +
                    ' ' + std::to_string(mask.front().cols()) + '\n';
  for (const auto& m : mask) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (j > 0) out += ' ';
        out += (m(i, j) > 0.5) ? '1' : '0';
      }
      out += '\n';
    }
  }
  write_text(path, out);
}

std::vector<Eigen::MatrixXd> read_mask(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mask file: " + path);
  std::string line;
  std::getline(in, line);
  const auto hdr = tokenize(line);
  if (hdr.size() != 3) throw std::runtime_error("mask: header must be 'T p1 p2'");
  const int T = std::stoi(hdr[0]);
  const Eigen::Index p1 = std::stoi(hdr[1]), p2 = std::stoi(hdr[2]);
  std::vector<Eigen::MatrixXd> mask;
  for (int t = 0; t < T; ++t) mask.push_back(read_matrix(in, p1, p2, nullptr));
  return mask;
}

void write_truth(const std::string& path, const sim::SimTruth& truth, const sim::DgpConfig& cfg) {
  std::string out;
  out += "T " + std::to_string(cfg.T) + '\n';
  out += "p1 " + std::to_string(cfg.p1) + '\n';
  out += "p2 " + std::to_string(cfg.p2) + '\n';
  out += "k1 " + std::to_string(cfg.k1) + '\n';
  out += "k2 " + std::to_string(cfg.k2) + '\n';
  out += "mu " + fmt(cfg.mu) + '\n';
  out += "delta " + fmt(cfg.delta) + '\n';
  out += "tau " + fmt(cfg.tau) + '\n';
  out += std::string("family ") + (cfg.family == sim::Family::MatrixNormal ? "N" : "St") + '\n';
  switch (cfg.missing.kind) {
    case sim::MissingKind::None: out += "missing none\n"; break;
    case sim::MissingKind::Random: out += "missing random\npi " + fmt(cfg.missing.pi) + '\n'; break;
    case sim::MissingKind::Block: out += "missing block\npi " + fmt(cfg.missing.pi) + '\n'; break;
  }
  out += "seed " + std::to_string(cfg.seed) + '\n';
  out += std::string("nonstationary ") + (truth.nonstationary ? "true" : "false") + '\n';

  out += "section R " + std::to_string(truth.R.rows()) + ' ' + std::to_string(truth.R.cols()) + '\n';
  append_matrix(out, truth.R);
  out += "section C " + std::to_string(truth.C.rows()) + ' ' + std::to_string(truth.C.cols()) + '\n';
  append_matrix(out, truth.C);
  out += "section S " + std::to_string(cfg.T * cfg.p1) + ' ' + std::to_string(cfg.p2) + '\n';
  for (const auto& s : truth.S) append_matrix(out, s);
  if (truth.Y.has_mask()) {
    out += "section Y " + std::to_string(cfg.T * cfg.p1) + ' ' + std::to_string(cfg.p2) + '\n';
    for (const auto& f : truth.Y.frames) append_matrix(out, f);
  }
  write_text(path, out);
}

TruthFile read_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open truth file: " + path);
  TruthFile tf;
  std::string line;
  while (std::getline(in, line)) {
    const auto toks = tokenize(line);
    if (toks.empty()) continue;
    if (toks[0] == "section") {
      if (toks.size() != 4) throw std::runtime_error("truth: malformed section header");
      const Eigen::Index rows = std::stol(toks[2]), cols = std::stol(toks[3]);
      Eigen::MatrixXd block = read_matrix(in, rows, cols, nullptr);
      const int p1 = std::stoi(tf.header.at("p1"));
      if (toks[1] == "R") {
        tf.R = block;
      } else if (toks[1] == "C") {
        tf.C = block;
      } else if (toks[1] == "S" || toks[1] == "Y") {
        std::vector<Eigen::MatrixXd> frames;
        for (Eigen::Index off = 0; off < rows; off += p1)
          frames.push_back(block.middleRows(off, p1));
        if (toks[1] == "S")
          tf.S = std::move(frames);
        else
          tf.Y = std::move(frames);
      } else {
        throw std::runtime_error("truth: unknown section " + toks[1]);
      }
    } else if (toks.size() >= 2) {
      tf.header[toks[0]] = toks[1];
    }
  }
  return tf;
}

void write_report(const std::string& path, const em::EmReport& rep) {
  std::string out;
  out += std::string("converged ") + (rep.converged ? "true" : "false") + '\n';
  out += "n_star " + std::to_string(rep.n_star) + '\n';
  out += "smoother_passes " + std::to_string(rep.loglik_path.size()) + '\n';
  out += "final_loglik " + fmt(rep.loglik_path.back()) + '\n';
  out += "p1 " + std::to_string(rep.theta.p1()) + '\n';
  out += "p2 " + std::to_string(rep.theta.p2()) + '\n';
  out += "k1 " + std::to_string(rep.theta.k1()) + '\n';
  out += "k2 " + std::to_string(rep.theta.k2()) + '\n';
  for (const auto& w : rep.warnings) out += "warning " + w + '\n';
  auto sec = [&out](const std::string& name, const Eigen::MatrixXd& m) {
    out += "section " + name + ' ' + std::to_string(m.rows()) + ' ' +
           std::to_string(m.cols()) + '\n';
    append_matrix(out, m);
  };
  sec("R", rep.theta.R);
  sec("C", rep.theta.C);
  sec("Hdiag", rep.theta.Hdiag);
  sec("Kdiag", rep.theta.Kdiag);
  sec("BA", rep.theta.BA);
  sec("QP", rep.theta.QP);
  if (rep.theta.has_separate) {
    sec("A", rep.theta.A);
    sec("B", rep.theta.B);
    sec("P", rep.theta.P);
    sec("Q", rep.theta.Q);
  }
  write_text(path, out);
}

void write_loglik_csv(const std::string& path, const std::vector<double>& loglik) {
  std::string out = "iteration,loglik\n";
  for (size_t i = 0; i < loglik.size(); ++i)
    out += std::to_string(i) + ',' + fmt(loglik[i]) + '\n';
  write_text(path, out);
}

std::map<std::string, std::string> parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (!tokenize(line).empty())
        throw std::runtime_error("config: line " + std::to_string(lineno) + " has no '='");
      continue;
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return (a == std::string::npos) ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) throw std::runtime_error("config: empty key on line " + std::to_string(lineno));
    kv[key] = val;
  }
  return kv;
}

std::string serialize_config(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + '\n';
  return out;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  return parse_config(read_text(path));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace dmfm::io
