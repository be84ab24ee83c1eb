#include "mfamd/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "mfamd/errors.hpp"

namespace mfamd {

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::vector<std::string> row;
  std::string cell;
  bool in_quotes = false;
  bool row_started = false;
  char c;
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {           // escaped quote
          in.get();
          cell.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        cell.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_started = true;
        break;
      case ',':
        row.push_back(std::move(cell));
        cell.clear();
        row_started = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_started || !cell.empty() || !row.empty()) {
          row.push_back(std::move(cell));
          cell.clear();
          table.push_back(std::move(row));
          row.clear();
        }
        row_started = false;
        break;
      default:
        cell.push_back(c);
        row_started = true;
    }
  }
  if (in_quotes) throw IoError("csv: unterminated quoted cell");
  if (row_started || !cell.empty() || !row.empty()) {
    row.push_back(std::move(cell));
    table.push_back(std::move(row));
  }
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_csv(in);
}

namespace {

bool needs_quoting(const std::string& s) {
  return s.find_first_of(",\"\r\n") != std::string::npos;
}

}  // namespace

void write_csv(std::ostream& out, const CsvTable& table) {
  for (const auto& row : table) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      if (needs_quoting(row[i])) {
        out << '"';
        for (char c : row[i]) {
          if (c == '"') out << '"';
          out << c;
        }
        out << '"';
      } else {
        out << row[i];
      }
    }
    out << '\n';
  }
}

void write_csv_file(const std::string& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_csv(out, table);
  if (!out) throw IoError("write failed: " + path);
}

std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v,
                               std::chars_format::general, 17);
  (void)ec;
  return std::string(buf, p);
}

}  // namespace mfamd
