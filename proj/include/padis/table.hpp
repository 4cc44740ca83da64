#pragma once

// Result tables and the CSV dialect used for every file the tools emit:
// comma separated, '.' decimal point, LF line endings, one header row,
// doubles at 15 significant digits. Fields containing a comma, quote or
// newline are double-quoted with inner quotes doubled.

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace padis {

using Cell = std::variant<std::string, double, std::int64_t>;

struct ResultTable {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  /// Decimal places per column in markdown output; -1 uses a default of 4.
  std::vector<int> markdown_precision;

  void add_row(std::vector<Cell> row);
};

enum class TableFormat { csv, markdown };

std::string format_csv_double(double v);
std::string to_csv(const ResultTable& table);
std::string to_markdown(const ResultTable& table);

/// Writes the table; throws Error on I/O failure.
void export_results(const ResultTable& table, const std::filesystem::path& path, TableFormat format);

/// Parses a CSV document into header + rows of strings.
struct CsvDocument {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
CsvDocument parse_csv(const std::string& text);

std::string read_text_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace padis
