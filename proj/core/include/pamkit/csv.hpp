#pragma once

#include <cstdio>
#include <string>
#include <vector>

namespace pamkit {

/// Quotes a CSV field when it contains a comma, quote, or newline; internal
/// quotes are doubled (RFC 4180). Fields without special characters pass
/// through unchanged.
inline std::string csv_escape(const std::string& field) {
  bool needs_quotes = false;
  for (char c : field) {
    if (c == ',' || c == '"' || c == '\n' || c == '\r') {
      needs_quotes = true;
      break;
    }
  }
  if (!needs_quotes) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

/// Splits one CSV line into fields, honoring quoted fields with doubled
/// quotes. Embedded newlines are not supported (no writer here emits them).
inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c == '\r') {
      // tolerate CRLF line endings
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

/// Shortest round-trippable decimal form of a double (%.17g).
inline std::string csv_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace pamkit
