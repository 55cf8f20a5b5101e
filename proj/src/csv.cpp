#include "gbm/csv.hpp"

#include <array>
#include <charconv>
#include <fstream>

#include "gbm/error.hpp"

namespace gbm::csv {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

int Table::column(std::string_view name) const {
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k] == name) return static_cast<int>(k);
  }
  return -1;
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  Table t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw Error(Errc::malformed_header, path.string() + ":" + std::to_string(lineno) +
                                              ": expected " + std::to_string(t.header.size()) +
                                              " fields");
    }
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw Error(Errc::malformed_header, path.string() + ": missing header");
  return t;
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

}  // namespace gbm::csv
