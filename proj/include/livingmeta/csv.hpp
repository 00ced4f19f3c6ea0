#ifndef LIVINGMETA_CSV_HPP
#define LIVINGMETA_CSV_HPP

#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "livingmeta/common.hpp"

namespace livingmeta::csv {

// RFC-4180-ish: quoted fields, embedded commas and doubled quotes. Rejects
// malformed rows with the 1-based line number so import errors are actionable.
inline std::vector<std::string> parse_line(const std::string& line,
                                           std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      if (!cur.empty())
        fail_validation("line " + std::to_string(line_no) +
                        ": quote inside unquoted field");
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (in_quotes)
    fail_validation("line " + std::to_string(line_no) +
                    ": unterminated quoted field");
  fields.push_back(cur);
  return fields;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index by case-insensitive name; -1 when absent.
  int column(const std::string& name) const {
    std::string want = to_lower(name);
    for (std::size_t i = 0; i < header.size(); ++i)
      if (to_lower(trim(header[i])) == want) return static_cast<int>(i);
    return -1;
  }
};

inline Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_validation("cannot open file: " + path);
  Table t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = parse_line(line, line_no);
    if (t.header.empty()) {
      t.header = std::move(fields);
    } else {
      if (fields.size() != t.header.size())
        fail_validation("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(t.header.size()) + " fields, got " +
                        std::to_string(fields.size()));
      t.rows.push_back(std::move(fields));
    }
  }
  return t;
}

inline std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

class Writer {
 public:
  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << quote(fields[i]);
    }
    out_ << '\n';
  }

  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

}  // namespace livingmeta::csv

#endif
