#pragma once

#include "planval/tabular/mdp.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iosfwd>
#include <sstream>
#include <string>

namespace planval::tabular {

namespace detail {

inline std::string format17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_double(const std::string& token, int line) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0')
    throw ConfigError("mdp text: bad number '" + token + "' on line " + std::to_string(line));
  return v;
}

}  // namespace detail

/// Text form: `tabular-mdp v1 <n_states> <n_actions> <gamma>`, then one line `s a r p_0 ... p_{n-1}` per pair.
inline void write_mdp(std::ostream& out, const TabularMDP<double>& mdp) {
  out << "tabular-mdp v1 " << mdp.n_states() << ' ' << mdp.n_actions() << ' ' << detail::format17(mdp.gamma())
      << '\n';
  for (Index s = 0; s < mdp.n_states(); ++s) {
    for (Index a = 0; a < mdp.n_actions(); ++a) {
      out << s << ' ' << a << ' ' << detail::format17(mdp.reward(s, a));
      const auto row = mdp.next(s, a);
      for (Index j = 0; j < row.size(); ++j) out << ' ' << detail::format17(row(j));
      out << '\n';
    }
  }
}

inline TabularMDP<double> read_mdp(std::istream& in) {
  std::string line;
  int line_no = 1;
  if (!std::getline(in, line)) throw ConfigError("mdp text: empty input");
  std::istringstream header(line);
  std::string magic, version;
  Index ns = 0, na = 0;
  std::string gamma_tok;
  if (!(header >> magic >> version >> ns >> na >> gamma_tok) || magic != "tabular-mdp" || version != "v1")
    throw ConfigError("mdp text: expected header 'tabular-mdp v1 <n_states> <n_actions> <gamma>'");
  if (ns <= 0 || na <= 0) throw ConfigError("mdp text: state and action counts must be positive");
  const double gamma = detail::parse_double(gamma_tok, line_no);
  Eigen::MatrixXd transition = Eigen::MatrixXd::Constant(ns * na, ns, -1.0);
  Eigen::MatrixXd reward(ns, na);
  std::vector<bool> seen(static_cast<std::size_t>(ns * na), false);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    Index s = -1, a = -1;
    std::string tok;
    if (!(row >> s >> a) || s < 0 || s >= ns || a < 0 || a >= na)
      throw ConfigError("mdp text: bad state/action index on line " + std::to_string(line_no));
    if (!(row >> tok)) throw ConfigError("mdp text: missing reward on line " + std::to_string(line_no));
    reward(s, a) = detail::parse_double(tok, line_no);
    for (Index j = 0; j < ns; ++j) {
      if (!(row >> tok)) throw ConfigError("mdp text: missing probability on line " + std::to_string(line_no));
      transition(s * na + a, j) = detail::parse_double(tok, line_no);
    }
    if (row >> tok) throw ConfigError("mdp text: trailing tokens on line " + std::to_string(line_no));
    seen[static_cast<std::size_t>(s * na + a)] = true;
  }
  for (bool b : seen)
    if (!b) throw ConfigError("mdp text: missing (state, action) rows");
  return {std::move(transition), std::move(reward), gamma};
}

inline TabularMDP<double> load_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open MDP file " + path);
  return read_mdp(in);
}

inline void save_mdp(const std::string& path, const TabularMDP<double>& mdp) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write MDP file " + path);
  write_mdp(out, mdp);
}

}  // namespace planval::tabular
