#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "adqc/util.hpp"

namespace adqc {

// RFC 4180 parser: quoted fields may contain commas, doubled quotes and
// newlines. Accepts both \n and \r\n records. Fully empty lines are skipped.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool row_started = false;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
    row_started = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        in_quotes = true;
        row_started = true;
        break;
      case ',':
        end_field();
        row_started = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_row();
        break;
      case '\n':
        end_row();
        break;
      default:
        field.push_back(ch);
        row_started = true;
        break;
    }
  }
  if (in_quotes) throw ValidationError("csv: unterminated quoted field");
  if (row_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

inline std::string csv_field(std::string_view v) {
  bool needs_quotes = v.find_first_of(",\"\n\r") != std::string_view::npos;
  if (!needs_quotes) return std::string(v);
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += csv_field(fields[i]);
  }
  out.push_back('\n');
  return out;
}

}  // namespace adqc
