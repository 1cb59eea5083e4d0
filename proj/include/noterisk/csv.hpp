#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace noterisk {

using CsvRow = std::vector<std::string>;

struct CsvTable {
  CsvRow header;
  std::vector<CsvRow> rows;  // every row has header.size() cells
};

// RFC 4180 subset: comma separator, double-quote quoting with "" escapes,
// LF or CRLF line endings. Throws DataError naming the 1-based line on a
// ragged row or an unterminated quote.
CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);

std::string csv_escape(std::string_view field);
std::string csv_line(const CsvRow& cells);

// Shortest decimal string that parses back to the same double.
std::string format_real(double value);

// Full-string numeric parse; nullopt when the text is not a finite number.
std::optional<double> parse_real(std::string_view text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace noterisk
