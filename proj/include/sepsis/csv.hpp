#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace sepsis {

// A parsed delimited table. Fields may be double-quoted (RFC-4180 style,
// "" escapes a quote, quoted fields may span lines). `line` is the 1-based
// source line a row started on, for error reporting.
struct CsvRow {
  std::vector<std::string> fields;
  std::size_t line = 0;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<CsvRow> rows;

  // Column index by header name; throws IngestError when absent.
  std::size_t column(const std::string& name, const std::string& file_label) const;
};

CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text, const std::string& file_label);

std::string csv_escape(const std::string& field);
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace sepsis
