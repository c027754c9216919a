#pragma once

// Minimal CSV output: comma delimiter, dot decimal, LF endings. Doubles use
// the shortest representation that round-trips.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "mfl/errors.hpp"

namespace mfl {

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc{}) throw FormatError("cannot format number");
  return std::string(buf, res.ptr);
}

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path)
      : os_(path, std::ios::binary | std::ios::trunc), path_(path) {
    if (!os_) throw FormatError("cannot open " + path.string() + " for writing");
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) os_ << ',';
      os_ << csv_escape(cells[i]);
    }
    os_ << '\n';
    if (!os_) throw FormatError("failed writing " + path_.string());
  }

 private:
  std::ofstream os_;
  std::filesystem::path path_;
};

}  // namespace mfl
