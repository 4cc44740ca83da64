#include "padis/table.hpp"

#include "padis/core.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace padis {

void ResultTable::add_row(std::vector<Cell> row) {
  if (row.size() != columns.size())
    throw DomainError("ResultTable: row has " + std::to_string(row.size()) + " fields, expected " +
                      std::to_string(columns.size()));
  rows.push_back(std::move(row));
}

std::string format_csv_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

namespace {

std::string quote_csv(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string cell_csv(const Cell& c) {
  if (const auto* s = std::get_if<std::string>(&c)) return quote_csv(*s);
  if (const auto* d = std::get_if<double>(&c)) return format_csv_double(*d);
  return std::to_string(std::get<std::int64_t>(c));
}

std::string cell_markdown(const Cell& c, int precision) {
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  if (const auto* d = std::get_if<double>(&c)) {
    if (std::isinf(*d)) return *d > 0 ? "inf" : "-inf";
    if (std::isnan(*d)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision < 0 ? 4 : precision, *d);
    return buf;
  }
  return std::to_string(std::get<std::int64_t>(c));
}

}  // namespace

std::string to_csv(const ResultTable& table) {
  std::string out;
  for (std::size_t i = 0; i < table.columns.size(); ++i)
    out += (i ? "," : "") + quote_csv(table.columns[i]);
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + cell_csv(row[i]);
    out += '\n';
  }
  return out;
}

std::string to_markdown(const ResultTable& table) {
  std::string out = "|";
  for (const auto& c : table.columns) out += " " + c + " |";
  out += "\n|";
  for (std::size_t i = 0; i < table.columns.size(); ++i) out += " --- |";
  out += '\n';
  for (const auto& row : table.rows) {
    out += "|";
    for (std::size_t i = 0; i < row.size(); ++i) {
      const int prec = i < table.markdown_precision.size() ? table.markdown_precision[i] : -1;
      out += " " + cell_markdown(row[i], prec) + " |";
    }
    out += '\n';
  }
  return out;
}

void export_results(const ResultTable& table, const std::filesystem::path& path, TableFormat format) {
  write_text_file(path, format == TableFormat::csv ? to_csv(table) : to_markdown(table));
}

CsvDocument parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
      any = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        fields.push_back(std::move(field));
        records.push_back(std::move(fields));
      }
      fields.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (in_quotes) throw FormatError("csv: unterminated quoted field");
  if (any || !field.empty()) {
    fields.push_back(std::move(field));
    records.push_back(std::move(fields));
  }
  CsvDocument doc;
  if (records.empty()) return doc;
  doc.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != doc.header.size())
      throw FormatError("csv: row " + std::to_string(r) + " has " +
                        std::to_string(records[r].size()) + " fields, header has " +
                        std::to_string(doc.header.size()));
    doc.rows.push_back(std::move(records[r]));
  }
  return doc;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw Error("cannot create directory for " + path.string() + ": " + ec.message());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace padis
