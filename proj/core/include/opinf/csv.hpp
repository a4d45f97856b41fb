#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "opinf/types.hpp"

namespace opinf {

struct CsvTable {
  std::vector<std::string> header;
  Matrix rows;
};

/// Reads a CSV with one header line followed by numeric rows.
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const Matrix& rows);

/// Header-less numeric matrix payloads (operators, bases).
Matrix read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);

/// Shortest text that parses back to the same double (17 significant digits).
std::string format_double(double v);

}  // namespace opinf
