#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace gbm::csv {

/// Plain comma-separated fields (no quoting); surrounding whitespace and a
/// trailing '\r' are trimmed.
std::vector<std::string> split(std::string_view line);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column, or -1.
  int column(std::string_view name) const;
};

/// Reads a header line plus rows; every row must have the header's width.
Table read(const std::filesystem::path& path);

/// Shortest decimal that round-trips the double.
std::string format_double(double v);

}  // namespace gbm::csv
