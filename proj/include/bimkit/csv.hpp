#ifndef BIMKIT_CSV_HPP
#define BIMKIT_CSV_HPP

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bimkit {

// Minimal RFC 4180-style CSV: comma delimiter, double-quote quoting with ""
// escapes, CR/LF tolerant, UTF-8 passthrough.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // Physical 1-based line number where each row starts (header is line 1);
  // quoted fields may span lines, so this is not simply row index + 2.
  std::vector<size_t> row_lines;

  // Column index by header name, -1 when absent.
  int column(std::string_view name) const;
};

CsvTable parse_csv_text(std::string_view text);
CsvTable read_csv(const std::string& path);  // throws IoError

// Strict finite-double parse of a whole (whitespace-trimmed) field.
std::optional<double> csv_parse_double(std::string_view field);

std::string csv_escape(std::string_view field);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace bimkit

#endif
