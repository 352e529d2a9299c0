#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nonrev/errors.hpp"

namespace nonrev::io {

// Shortest round-trip representation; empty for NaN so absent values stay blank.
inline std::string num(double x) {
  if (std::isnan(x)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// ---------------------------------------------------------------------------
// Matrices: first line n, then n rows of n entries.

inline void write_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("write_matrix: matrix must be square");
  os << m.rows() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << (j ? " " : "") << num(m(i, j));
    os << '\n';
  }
}

inline Eigen::MatrixXd read_matrix(std::istream& is) {
  long n = 0;
  if (!(is >> n) || n <= 0) throw ConfigError("matrix file: bad dimension line");
  Eigen::MatrixXd m(n, n);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j)
      if (!(is >> m(i, j))) throw ConfigError("matrix file: expected " + std::to_string(n * n) + " entries");
  std::string rest;
  if (is >> rest) throw ConfigError("matrix file: trailing content '" + rest + "'");
  return m;
}

inline Eigen::MatrixXd load_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open matrix file " + path);
  return read_matrix(in);
}

// ---------------------------------------------------------------------------
// Result rows

struct ResultRow {
  std::string experiment;
  std::string case_id;
  double lambda = std::nan("");  // blank when the row has no discount
  double value = 0.0;
  double se = 0.0;  // 0 for exact values
  std::optional<double> oracle;
  bool pass = true;
};

inline const char* results_header() { return "experiment,case,lambda,value,se,oracle,pass"; }

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

inline void write_results(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << results_header() << '\n';
  for (const auto& r : rows)
    os << csv_field(r.experiment) << ',' << csv_field(r.case_id) << ',' << num(r.lambda) << ',' << num(r.value) << ','
       << num(r.se) << ',' << (r.oracle ? num(*r.oracle) : "") << ',' << (r.pass ? "true" : "false") << '\n';
}

// Per-replicate summaries of Monte Carlo chains.
struct ChainRow {
  std::string experiment;
  double lambda = 0.0;
  double estimate = 0.0;
  double se = 0.0;
  int replicates = 0;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
};

inline void write_chain_rows(std::ostream& os, const std::vector<ChainRow>& rows) {
  os << "experiment,lambda,estimate,se,replicates,steps,seed\n";
  for (const auto& r : rows)
    os << csv_field(r.experiment) << ',' << num(r.lambda) << ',' << num(r.estimate) << ',' << num(r.se) << ','
       << r.replicates << ',' << r.steps << ',' << r.seed << '\n';
}

// Writes through a binary stream so that line endings stay LF on every platform.
template <class Fn>
void write_file(const std::string& path, Fn&& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  body(out);
  if (!out) throw ConfigError("write failed for " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Target specs such as "gaussian(1.5)", "double-well(0.25,1)", "ring(1,2,3,2,1)".

struct TargetSpec {
  std::string name;
  std::vector<double> args;
};

inline TargetSpec parse_target(const std::string& text) {
  auto open = text.find('(');
  if (open == std::string::npos || text.empty() || text.back() != ')')
    throw ConfigError("target '" + text + "': expected name(arg, ...)");
  TargetSpec t{text.substr(0, open), {}};
  std::string inner = text.substr(open + 1, text.size() - open - 2);
  std::stringstream ss(inner);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw ConfigError("target '" + text + "': bad number '" + tok + "'");
    }
    if (tok.find_first_not_of(" \t", used) != std::string::npos)
      throw ConfigError("target '" + text + "': bad number '" + tok + "'");
    t.args.push_back(v);
  }
  if (t.name.empty()) throw ConfigError("target '" + text + "': missing name");
  return t;
}

}  // namespace nonrev::io
