#pragma once

#include "grou/core.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

namespace grou {

/// Missing values (e.g. the sd of a single path) are std::monostate.
using Cell = std::variant<std::monostate, double, std::int64_t, std::string>;

/// Named-column table. `group_columns` identify a row in the long format.
struct ResultTable {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  std::vector<std::string> group_columns;

  void add_row(std::vector<Cell> row) {
    if (row.size() != columns.size()) {
      throw Error(ErrorCode::BadDimension, "row has " + std::to_string(row.size()) + " cells for " +
                                               std::to_string(columns.size()) + " columns");
    }
    rows.push_back(std::move(row));
  }

  std::size_t column(const std::string& name) const {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (columns[c] == name) return c;
    }
    throw Error(ErrorCode::ConfigError, "no column '" + name + "'");
  }

  /// Numeric cell value; NaN for missing or text cells.
  double number(std::size_t row, const std::string& name) const {
    const Cell& c = rows.at(row)[column(name)];
    if (const auto* d = std::get_if<double>(&c)) return *d;
    if (const auto* i = std::get_if<std::int64_t>(&c)) return static_cast<double>(*i);
    return std::nan("");
  }

  std::string text(std::size_t row, const std::string& name) const {
    const Cell& c = rows.at(row)[column(name)];
    if (const auto* s = std::get_if<std::string>(&c)) return *s;
    return {};
  }
};

/// Optional number: NaN becomes the missing marker.
inline Cell num(double v) {
  if (std::isnan(v)) return std::monostate{};
  return v;
}

inline Cell count(std::int64_t v) { return v; }

namespace detail {

inline std::string format_cell(const Cell& c) {
  struct Visitor {
    std::string operator()(std::monostate) const { return "NA"; }
    std::string operator()(double v) const {
      if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.10g", v);
      return buf;
    }
    std::string operator()(std::int64_t v) const { return std::to_string(v); }
    std::string operator()(const std::string& s) const { return s; }
  };
  return std::visit(Visitor{}, c);
}

/// RFC 4180 quoting.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace detail

inline void write_csv(std::ostream& out, const ResultTable& t) {
  for (std::size_t c = 0; c < t.columns.size(); ++c) out << (c ? "," : "") << detail::csv_field(t.columns[c]);
  out << "\r\n";
  for (const auto& row : t.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << detail::csv_field(detail::format_cell(row[c]));
    out << "\r\n";
  }
}

/// Plot-ready long format: one (variable, value, group) line per numeric
/// non-group cell; group joins the group columns as name=value pairs.
inline void write_long_csv(std::ostream& out, const ResultTable& t) {
  out << "variable,value,group\r\n";
  std::vector<std::size_t> group_idx;
  for (const auto& g : t.group_columns) group_idx.push_back(t.column(g));
  for (const auto& row : t.rows) {
    std::string group;
    for (const std::size_t g : group_idx) {
      if (!group.empty()) group += ';';
      group += t.columns[g] + "=" + detail::format_cell(row[g]);
    }
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (std::find(group_idx.begin(), group_idx.end(), c) != group_idx.end()) continue;
      if (std::holds_alternative<std::string>(row[c])) continue;
      out << detail::csv_field(t.columns[c]) << ',' << detail::format_cell(row[c]) << ',' << detail::csv_field(group)
          << "\r\n";
    }
  }
}

inline void write_text_file(const std::filesystem::path& file, const std::string& content) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write '" + file.string() + "'");
  out << content;
}

inline void write_table_files(const std::filesystem::path& dir, const std::string& stem, const ResultTable& t,
                              bool with_long = true) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / (stem + ".csv"), std::ios::binary);
    if (!out) throw Error(ErrorCode::ConfigError, "cannot write into '" + dir.string() + "'");
    write_csv(out, t);
  }
  if (with_long) {
    std::ofstream out(dir / (stem + "_long.csv"), std::ios::binary);
    write_long_csv(out, t);
  }
}

}  // namespace grou
