#include "moralprobe/csv.hpp"

#include "moralprobe/error.hpp"

#include <fstream>
#include <sstream>

namespace moralprobe::csv {

std::ptrdiff_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<std::ptrdiff_t>(i);
  }
  return -1;
}

std::vector<std::string> split_line(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
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
    } else if (c == delim) {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  out.push_back(std::move(field));
  return out;
}

Table parse(std::string_view text, char delim) {
  Table t;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool have_header = false;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    auto fields = split_line(line, delim);
    if (!have_header) {
      // Strip a UTF-8 byte-order mark.
      if (!fields.empty() && fields[0].rfind("\xEF\xBB\xBF", 0) == 0) fields[0].erase(0, 3);
      t.header = std::move(fields);
      have_header = true;
    } else {
      if (fields.size() != t.header.size()) {
        throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                              std::to_string(t.header.size()) + " fields, found " +
                              std::to_string(fields.size()));
      }
      t.rows.push_back(std::move(fields));
      t.line_numbers.push_back(line_no);
    }
    if (end == text.size()) break;
  }
  if (!have_header) throw ValidationError("delimited input is empty (no header row)");
  return t;
}

Table read(const std::filesystem::path& path, char delim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str(), delim);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string quote(std::string_view field, char delim) {
  if (field.find_first_of(std::string{delim, '"', '\n', '\r'}) == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string join(const std::vector<std::string>& fields, char delim) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(delim);
    out += quote(fields[i], delim);
  }
  return out;
}

}  // namespace moralprobe::csv
