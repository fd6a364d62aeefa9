#pragma once

#include <string>
#include <vector>

namespace bhport {

struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // each row sized like header
};

// Comma-separated reader; trims trailing CR, skips blank lines, requires every
// row to match the header width. No quoting support (schemas never need it).
CsvTable read_csv(const std::string& path);

// Parses a numeric cell; empty means missing only where the caller allows it.
double parse_double_cell(const std::string& cell, const std::string& file,
                         std::size_t row, const std::string& column);

// Shortest round-trip decimal formatting (reparsing reproduces the bits).
std::string format_double(double v);

// Months are held as year*12 + (month-1); text form is YYYY-MM.
int parse_month(const std::string& text, const std::string& file, std::size_t row);
std::string format_month(int month_index);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace bhport
