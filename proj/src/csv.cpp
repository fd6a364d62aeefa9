#include "bhport/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bhport/errors.hpp"

namespace bhport {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  out.push_back(field);
  for (auto& f : out) {
    while (!f.empty() && (f.back() == '\r' || f.back() == ' ' || f.back() == '\t'))
      f.pop_back();
    std::size_t start = 0;
    while (start < f.size() && (f[start] == ' ' || f[start] == '\t')) ++start;
    if (start > 0) f.erase(0, start);
  }
  return out;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  CsvTable table;
  table.path = path;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_line(line);
    if (table.header.empty()) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size())
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(table.header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    table.rows.push_back(std::move(fields));
  }
  if (table.header.empty()) throw DataError(path + ": missing header row");
  return table;
}

double parse_double_cell(const std::string& cell, const std::string& file,
                         std::size_t row, const std::string& column) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end)
    throw DataError(file + ": row " + std::to_string(row) + ", column '" + column +
                    "': non-numeric cell '" + cell + "'");
  return value;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

int parse_month(const std::string& text, const std::string& file, std::size_t row) {
  // YYYY-MM, 4-digit year, 2-digit month in 01..12.
  auto fail = [&]() -> int {
    throw DataError(file + ": row " + std::to_string(row) + ": bad date '" + text +
                    "' (expected YYYY-MM)");
  };
  if (text.size() != 7 || text[4] != '-') return fail();
  for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u})
    if (text[i] < '0' || text[i] > '9') return fail();
  int year = std::stoi(text.substr(0, 4));
  int month = std::stoi(text.substr(5, 2));
  if (month < 1 || month > 12) return fail();
  return year * 12 + (month - 1);
}

std::string format_month(int month_index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d", month_index / 12,
                month_index % 12 + 1);
  return std::string(buf);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out << content;
  if (!out) throw DataError("failed writing file: " + path);
}

}  // namespace bhport
