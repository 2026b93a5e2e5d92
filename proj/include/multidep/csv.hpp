#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "multidep/statistics.hpp"

namespace multidep {

// malformed or non-numeric input data, as opposed to a bad configuration
struct CsvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CsvTable {
  std::vector<std::string> header;  // empty when the file starts with numbers
  Eigen::MatrixXd values;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

inline bool parse_number(const std::string& token, double& out) {
  if (token.empty()) return false;
  const char* begin = token.data();
  const char* end = begin + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace detail

// Strict comma-separated numbers, decimal point only. A header row is
// detected by a non-numeric cell in the first line.
inline CsvTable read_csv(std::istream& in) {
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && detail::trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw CsvError("empty input");

  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty())
      throw CsvError("line " + std::to_string(i + 1) + ": empty line");
    rows.push_back(detail::split_fields(lines[i]));
  }

  CsvTable table;
  std::size_t first = 0;
  double probe = 0.0;
  for (const std::string& cell : rows[0])
    if (!detail::parse_number(cell, probe)) {
      table.header = rows[0];
      first = 1;
      break;
    }

  const std::size_t cols = rows[0].size();
  const std::size_t data_rows = rows.size() - first;
  if (data_rows < 2) throw CsvError("need at least two data rows");

  table.values.resize(static_cast<Eigen::Index>(data_rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = first; r < rows.size(); ++r) {
    const std::size_t line_no = r + 1;
    if (rows[r].size() != cols)
      throw CsvError("line " + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                     " fields, got " + std::to_string(rows[r].size()));
    for (std::size_t c = 0; c < cols; ++c) {
      double v = 0.0;
      if (!detail::parse_number(rows[r][c], v))
        throw CsvError("line " + std::to_string(line_no) + ", column " + std::to_string(c + 1) +
                       ": not a number: '" + rows[r][c] + "'");
      if (!std::isfinite(v))
        throw CsvError("line " + std::to_string(line_no) + ", column " + std::to_string(c + 1) +
                       ": non-finite value");
      table.values(static_cast<Eigen::Index>(r - first), static_cast<Eigen::Index>(c)) = v;
    }
  }
  return table;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open " + path);
  return read_csv(in);
}

// column ranges, 1-based and inclusive; each group is one variable
struct VariableSpec {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> groups;

  Eigen::Index max_column() const {
    Eigen::Index m = 0;
    for (const auto& g : groups) m = std::max(m, g.second);
    return m;
  }
};

inline VariableSpec parse_variable_spec(const std::string& text) {
  VariableSpec spec;
  std::stringstream in(text);
  std::string token;
  std::size_t index = 0;
  while (std::getline(in, token, ',')) {
    ++index;
    token = detail::trim(token);
    const std::string where = " in group " + std::to_string(index) + " ('" + token + "')";
    std::size_t dash = token.find('-');
    auto parse_index = [&](const std::string& part) {
      long v = 0;
      const char* begin = part.data();
      const char* end = begin + part.size();
      auto [ptr, ec] = std::from_chars(begin, end, v);
      if (ec != std::errc() || ptr != end || part.empty())
        throw std::invalid_argument("expected column index" + where);
      if (v < 1) throw std::invalid_argument("column indices are 1-based" + where);
      return static_cast<Eigen::Index>(v);
    };
    Eigen::Index lo = parse_index(token.substr(0, dash));
    Eigen::Index hi = dash == std::string::npos ? lo : parse_index(token.substr(dash + 1));
    if (hi < lo) throw std::invalid_argument("reversed range" + where);
    spec.groups.emplace_back(lo, hi);
  }
  if (spec.groups.empty()) throw std::invalid_argument("empty variable specification");

  auto sorted = spec.groups;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i].first <= sorted[i - 1].second)
      throw std::invalid_argument("overlapping ranges " + std::to_string(sorted[i - 1].first) +
                                  "-" + std::to_string(sorted[i - 1].second) + " and " +
                                  std::to_string(sorted[i].first) + "-" +
                                  std::to_string(sorted[i].second));
  return spec;
}

// Cuts the table into one observation block per group. Exponents: empty
// means 1 everywhere, a single value is broadcast, otherwise one per group.
inline Dataset dataset_from_table(const CsvTable& table, const VariableSpec& spec,
                                  const std::vector<double>& betas = {}) {
  if (spec.max_column() > table.values.cols())
    throw std::invalid_argument("column " + std::to_string(spec.max_column()) +
                                " out of range (file has " + std::to_string(table.values.cols()) +
                                " columns)");
  if (!betas.empty() && betas.size() != 1 && betas.size() != spec.groups.size())
    throw std::invalid_argument("need one exponent per variable, got " +
                                std::to_string(betas.size()) + " for " +
                                std::to_string(spec.groups.size()) + " variables");

  Dataset d;
  for (std::size_t i = 0; i < spec.groups.size(); ++i) {
    const auto& [lo, hi] = spec.groups[i];
    d.blocks.push_back(table.values.middleCols(lo - 1, hi - lo + 1));
    PsiFunction psi;
    if (!betas.empty()) psi.beta = betas.size() == 1 ? betas[0] : betas[i];
    validate(psi);
    d.psis.push_back(psi);
  }
  return d;
}

}  // namespace multidep
