#pragma once

// Shared text scheme for learned tables:
//
//   # key = value          (metadata header, one line per entry)
//   state-key<TAB>action-key<TAB>value
//
// Rows are sorted by (state-key, action-key). Values are printed in the
// shortest form that parses back to the identical double.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <tuple>
#include <utility>
#include <vector>

namespace hmrl {

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  if (res.ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("not a number: '" + std::string(s) + "'");
  }
  return v;
}

inline long long parse_int(std::string_view s) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("not an integer: '" + std::string(s) + "'");
  }
  return v;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

using Metadata = std::vector<std::pair<std::string, std::string>>;

struct TableRow {
  std::string state;
  std::string action;
  double value = 0.0;
};

struct TableText {
  Metadata header;
  std::vector<TableRow> rows;
};

inline void write_table_text(std::ostream& os, TableText text) {
  std::sort(text.rows.begin(), text.rows.end(), [](const TableRow& a, const TableRow& b) {
    return std::tie(a.state, a.action) < std::tie(b.state, b.action);
  });
  for (const auto& [k, v] : text.header) os << "# " << k << " = " << v << '\n';
  for (const auto& r : text.rows) {
    os << r.state << '\t' << r.action << '\t' << format_double(r.value) << '\n';
  }
}

inline TableText read_table_text(std::istream& is) {
  TableText text;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.starts_with("# ")) {
      const std::string_view body = std::string_view(line).substr(2);
      const auto eq = body.find(" = ");
      if (eq == std::string_view::npos) {
        throw std::runtime_error("table: malformed header at line " + std::to_string(line_no));
      }
      text.header.emplace_back(std::string(body.substr(0, eq)), std::string(body.substr(eq + 3)));
      continue;
    }
    const auto fields = split(line, '\t');
    if (fields.size() != 3) {
      throw std::runtime_error("table: expected 3 tab-separated fields at line " + std::to_string(line_no));
    }
    const double v = parse_double(fields[2]);
    if (!std::isfinite(v)) throw std::runtime_error("table: non-finite value at line " + std::to_string(line_no));
    text.rows.push_back({std::string(fields[0]), std::string(fields[1]), v});
  }
  return text;
}

inline const std::string* find_meta(const Metadata& meta, std::string_view key) {
  for (const auto& [k, v] : meta) {
    if (k == key) return &v;
  }
  return nullptr;
}

}  // namespace hmrl
