#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "cfrobust/error.hpp"

namespace cfrobust::csv {

using Row = std::vector<std::string>;

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

// Splits one logical record. Handles double-quoted fields with "" escapes;
// whitespace around unquoted fields is trimmed.
inline Row split_line(std::string_view line, char sep = ',') {
  Row out;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
      was_quoted = true;
      field.clear();
    } else if (c == sep) {
      out.emplace_back(was_quoted ? field : std::string(trim(field)));
      field.clear();
      was_quoted = false;
    } else {
      field.push_back(c);
    }
  }
  out.emplace_back(was_quoted ? field : std::string(trim(field)));
  return out;
}

// Reads all non-blank records. Throws IoError on an unterminated quote.
inline std::vector<Row> read_all(std::istream& in, char sep = ',') {
  std::vector<Row> rows;
  std::string line;
  std::string pending;
  while (std::getline(in, line)) {
    if (!pending.empty()) {
      pending += '\n';
      pending += line;
    } else {
      pending = line;
    }
    std::size_t quotes = 0;
    for (char c : pending) quotes += (c == '"');
    if (quotes % 2 != 0) continue;
    if (!trim(pending).empty()) rows.push_back(split_line(pending, sep));
    pending.clear();
  }
  if (!pending.empty()) throw IoError("csv: unterminated quoted field");
  return rows;
}

inline std::vector<Row> read_file(const std::string& path, char sep = ',') {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);
  return read_all(in, sep);
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    if (s == "NaN" || s == "nan") return std::numeric_limits<double>::quiet_NaN();
    return std::nullopt;
  }
  return v;
}

/// Shortest round-trip representation; "NaN" for undefined values.
inline std::string format(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline void write_row(std::ostream& out, const Row& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out << ',';
    out << quote_if_needed(row[i]);
  }
  out << '\n';
}

}  // namespace cfrobust::csv
