#include "opinf/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "opinf/error.hpp"

namespace opinf {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_cell(const std::string& cell, const std::filesystem::path& path, std::size_t row,
                  std::size_t col) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc() || ptr != last) {
    fail_io("parse error in " + path.string() + " at row " + std::to_string(row) + ", col " +
            std::to_string(col) + ": '" + cell + "' is not a number");
  }
  return v;
}

Matrix parse_rows(std::istream& in, const std::filesystem::path& path, std::size_t first_row,
                  std::size_t expected_cols) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t row = first_row;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    if (expected_cols == 0) expected_cols = cells.size();
    if (cells.size() != expected_cols) {
      fail_io("parse error in " + path.string() + " at row " + std::to_string(row) + ", col " +
              std::to_string(std::min(cells.size(), expected_cols) + 1) + ": expected " +
              std::to_string(expected_cols) + " fields, found " + std::to_string(cells.size()));
    }
    std::vector<double> values(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) values[c] = parse_cell(cells[c], path, row, c + 1);
    rows.push_back(std::move(values));
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(expected_cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < expected_cols; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

void write_rows(std::ostream& out, const Matrix& rows) {
  std::string line;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    line.clear();
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      if (j > 0) line += ',';
      line += format_double(rows(i, j));
    }
    line += '\n';
    out << line;
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_io("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail_io("parse error in " + path.string() + " at row 1, col 1: empty file");
  CsvTable table;
  table.header = split(line);
  table.rows = parse_rows(in, path, 1, table.header.size());
  if (table.rows.rows() == 0) fail_io("parse error in " + path.string() + ": no data rows");
  return table;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const Matrix& rows) {
  std::ofstream out(path);
  if (!out) fail_io("cannot write " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  write_rows(out, rows);
  if (!out) fail_io("write failed for " + path.string());
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_io("cannot open " + path.string());
  return parse_rows(in, path, 0, 0);
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) fail_io("cannot write " + path.string());
  write_rows(out, m);
  if (!out) fail_io("write failed for " + path.string());
}

}  // namespace opinf
