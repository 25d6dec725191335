#pragma once

#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "alnid/errors.hpp"

namespace alnid::csv {

/// Plain comma-separated rows. Fields must not contain commas, quotes or
/// newlines (none of the emitted reports need them), so no quoting layer.
inline void write_row(std::ostream& os, std::span<const std::string> fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const std::string& f = fields[i];
    if (f.find_first_of(",\"\n\r") != std::string::npos)
      throw Error("csv: field contains a separator: '" + f + "'");
    if (i) os << ',';
    os << f;
  }
  os << '\n';
}

inline std::vector<std::string> split_row(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      return out;
    }
    out.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

/// Reads all rows; blank lines are skipped.
inline std::vector<std::vector<std::string>> read(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::string_view view = line;
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (view.empty()) continue;
    rows.push_back(split_row(view));
  }
  return rows;
}

}  // namespace alnid::csv
