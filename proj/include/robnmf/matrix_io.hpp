#pragma once

// Dense matrices as CSV: one row per line, comma-separated, full double precision.

#include <cctype>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "types.hpp"

namespace robnmf {

inline void write_matrix_csv(std::ostream& out, const Matrix& m) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      out << m(r, c);
    }
    out << '\n';
  }
}

inline void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw ParseError(path.string() + ": cannot open for writing");
  write_matrix_csv(out, m);
}

inline Matrix read_matrix_csv(std::istream& in, const std::string& source = "<stream>") {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t used = 0;
      double x = 0;
      try {
        x = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
      if (cell.empty() || used != cell.size())
        throw ParseError(source + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      row.push_back(x);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError(source + ":" + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return Matrix();
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

inline Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open");
  return read_matrix_csv(in, path.string());
}

}  // namespace robnmf
