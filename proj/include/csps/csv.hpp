#pragma once

// Minimal comma-separated table I/O: header row, no quoting, '.' decimals.

#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "csps/error.hpp"

namespace csps {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return static_cast<int>(k);
    return -1;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    const auto cell = line.substr(start, comma == std::string_view::npos ? line.size() - start
                                                                         : comma - start);
    cells.emplace_back(trim(cell));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

}  // namespace detail

inline std::optional<double> parse_number(std::string_view s) {
  s = detail::trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline CsvTable read_csv(std::istream& in, const std::string& source = "<stream>") {
  CsvTable t;
  std::string line;
  bool have_header = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_line(line);
    if (!have_header) {
      if (!cells.empty() && cells[0].rfind("\xEF\xBB\xBF", 0) == 0) cells[0].erase(0, 3);
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size())
      throw ValidationError(source + ": line " + std::to_string(line_no) + " has " +
                            std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw ValidationError(source + ": empty file");
  return t;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  return read_csv(in, path);
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// Writes `values` with a leading label column.
inline void write_matrix_csv(std::ostream& os, const std::vector<std::string>& header,
                             const std::vector<std::string>& row_labels,
                             const Eigen::MatrixXd& values) {
  for (std::size_t k = 0; k < header.size(); ++k) os << (k ? "," : "") << header[k];
  os << '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    os << row_labels[static_cast<std::size_t>(r)];
    for (Eigen::Index k = 0; k < values.cols(); ++k) os << ',' << format_number(values(r, k));
    os << '\n';
  }
}

inline void write_matrix_csv_file(const std::string& path, const std::vector<std::string>& header,
                                  const std::vector<std::string>& row_labels,
                                  const Eigen::MatrixXd& values) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  write_matrix_csv(out, header, row_labels, values);
}

// Reads a file produced by write_matrix_csv: drops the label column.
inline Eigen::MatrixXd read_matrix_csv_file(const std::string& path) {
  const CsvTable t = read_csv_file(path);
  const int cols = static_cast<int>(t.header.size()) - 1;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows.size()), cols);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (int k = 0; k < cols; ++k) {
      const auto v = parse_number(t.rows[r][k + 1]);
      if (!v)
        throw ValidationError(path + ": non-numeric value at row " + std::to_string(r + 1) +
                              ", column '" + t.header[k + 1] + "'");
      m(static_cast<Eigen::Index>(r), k) = *v;
    }
  }
  return m;
}

}  // namespace csps
