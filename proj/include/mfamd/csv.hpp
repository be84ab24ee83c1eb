#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mfamd {

// RFC 4180 style tables: comma separated, double-quote quoting with "" as the
// embedded quote, optional CRLF line ends. Every record keeps its cells as
// raw strings; the data module does all typing.
using CsvTable = std::vector<std::vector<std::string>>;

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

void write_csv(std::ostream& out, const CsvTable& table);
void write_csv_file(const std::string& path, const CsvTable& table);

// Formats a double with enough digits to round-trip.
std::string format_double(double v);

}  // namespace mfamd
