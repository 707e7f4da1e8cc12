#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace moralprobe::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  std::ptrdiff_t column(std::string_view name) const;
};

// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF tolerated.
// Embedded newlines inside quotes are not supported.
std::vector<std::string> split_line(std::string_view line, char delim);
Table read(const std::filesystem::path& path, char delim = ',');
Table parse(std::string_view text, char delim = ',');

std::string quote(std::string_view field, char delim = ',');
std::string join(const std::vector<std::string>& fields, char delim = ',');

}  // namespace moralprobe::csv
