#ifndef POCUS_CSV_HPP
#define POCUS_CSV_HPP

#include <string>
#include <vector>

namespace pocus {

// Minimal RFC-4180-style comma-separated values. Fields containing commas,
// quotes, or newlines are quoted on write and unquoted on read.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column, or -1.
  int column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);

std::string csv_escape(const std::string& field);
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace pocus

#endif  // POCUS_CSV_HPP
