// Deterministic text formatting and small CSV helpers.  All floating-point
// output goes through format_double so repeated runs produce byte-identical
// files.
#pragma once

#include <string>
#include <vector>

namespace nearid {

// Round-trip-exact decimal rendering of a double ("%.17g").
std::string format_double(double v);

// Join cells with commas and a trailing newline.  Cells must not contain
// commas or newlines (all our tables are numeric plus simple labels).
std::string csv_row(const std::vector<std::string>& cells);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

// Parse a numeric CSV with one header row; lines starting with '#' are
// metadata and skipped.  Throws std::runtime_error on malformed input or
// non-numeric data cells.
CsvTable parse_csv(const std::string& text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace nearid
