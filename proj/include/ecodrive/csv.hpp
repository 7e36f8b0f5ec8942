#pragma once

#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ecodrive {

class CsvError : public std::runtime_error {
 public:
  CsvError(const std::string& file, std::size_t line, std::size_t column, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " +
                           what),
        line_(line),
        column_(column) {}

  [[nodiscard]] std::size_t line() const { return line_; }
  [[nodiscard]] std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Numeric CSV with a mandatory header. Empty cells are kept as nullopt.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::optional<double>>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line per row
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

[[nodiscard]] inline CsvTable parse_csv(std::istream& in, const std::string& name,
                                        const std::vector<std::string>& expected_header) {
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty() || line[0] == '#') continue;
    const auto cells = detail::split(line);
    if (!have_header) {
      for (const auto c : cells) table.header.emplace_back(c);
      if (!expected_header.empty() && table.header != expected_header) {
        std::string want;
        for (const auto& h : expected_header) want += (want.empty() ? "" : ",") + h;
        throw CsvError(name, lineno, 1, "expected header '" + want + "'");
      }
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size())
      throw CsvError(name, lineno, std::min(cells.size(), table.header.size()) + 1,
                     "expected " + std::to_string(table.header.size()) + " fields, got " +
                         std::to_string(cells.size()));
    std::vector<std::optional<double>> row;
    row.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto cell = cells[c];
      if (cell.empty()) {
        row.emplace_back();
        continue;
      }
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (ec != std::errc() || ptr != cell.data() + cell.size())
        throw CsvError(name, lineno, c + 1, "not a number: '" + std::string(cell) + "'");
      row.emplace_back(value);
    }
    table.rows.push_back(std::move(row));
    table.line_numbers.push_back(lineno);
  }
  if (!have_header) throw CsvError(name, lineno, 1, "missing header");
  return table;
}

[[nodiscard]] inline CsvTable read_csv(const std::string& path,
                                       const std::vector<std::string>& expected_header = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_csv(in, path, expected_header);
}

}  // namespace ecodrive
