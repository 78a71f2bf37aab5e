#pragma once

#include <string>
#include <vector>

namespace metboost {

// Minimal RFC-4180 table: quoted fields, embedded commas/newlines, CRLF.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 if absent
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text, const std::string& what = "csv");

std::string csv_quote(const std::string& field);
void write_csv(const CsvTable& t, const std::string& path);

// %.17g formatting: round-trips doubles exactly through strtod.
std::string format_double(double v);

}  // namespace metboost
