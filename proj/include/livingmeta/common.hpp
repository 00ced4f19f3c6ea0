#ifndef LIVINGMETA_COMMON_HPP
#define LIVINGMETA_COMMON_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace livingmeta {

// Failure categories map 1:1 to CLI exit codes so scripts can branch on them.
enum class ErrorKind : int {
  usage = 1,
  validation = 2,
  convergence = 3,
  integrity = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_validation(const std::string& msg) {
  throw Error(ErrorKind::validation, msg);
}
[[noreturn]] inline void fail_convergence(const std::string& msg) {
  throw Error(ErrorKind::convergence, msg);
}
[[noreturn]] inline void fail_integrity(const std::string& msg) {
  throw Error(ErrorKind::integrity, msg);
}
[[noreturn]] inline void fail_usage(const std::string& msg) {
  throw Error(ErrorKind::usage, msg);
}

// ---------------------------------------------------------------------------
// Calendar dates. Hand-rolled on purpose: we only need parse/compare/format
// and day-level validation, and the fixture carries dates in two notations.

struct Date {
  int year = 0;
  int month = 0;  // 1..12
  int day = 0;    // 1..31

  auto operator<=>(const Date&) const = default;

  bool valid() const {
    if (year < 1 || month < 1 || month > 12 || day < 1) return false;
    static const int dim[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    int d = dim[month - 1];
    if (month == 2 &&
        (year % 4 == 0 && (year % 100 != 0 || year % 400 == 0)))
      d = 29;
    return day <= d;
  }

  std::string iso() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
    return buf;
  }

  // "MM/YY" as used in version labels.
  std::string month_year() const {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%02d/%02d", month, year % 100);
    return buf;
  }
};

// Accepts "YYYY-MM-DD" and "DD.MM.YYYY".
inline Date parse_date(std::string_view s) {
  Date d;
  int a = 0, b = 0, c = 0;
  if (s.size() == 10 && s[4] == '-' && s[7] == '-' &&
      std::sscanf(std::string(s).c_str(), "%d-%d-%d", &a, &b, &c) == 3) {
    d = {a, b, c};
  } else if (s.size() == 10 && s[2] == '.' && s[5] == '.' &&
             std::sscanf(std::string(s).c_str(), "%d.%d.%d", &a, &b, &c) == 3) {
    d = {c, b, a};
  } else {
    fail_validation("unparseable date: '" + std::string(s) + "'");
  }
  if (!d.valid())
    fail_validation("invalid calendar date: '" + std::string(s) + "'");
  return d;
}

inline std::optional<Date> try_parse_date(std::string_view s) {
  try {
    return parse_date(s);
  } catch (const Error&) {
    return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// Small string helpers.

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

inline std::string trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t p = s.find(sep, start);
    if (p == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, p - start));
    start = p + 1;
  }
  return out;
}

// Case-folded, punctuation-stripped form used as the dedup key for titles.
inline std::string normalize_title(std::string_view title) {
  std::string out;
  out.reserve(title.size());
  bool pending_space = false;
  for (unsigned char c : title) {
    if (std::isalnum(c)) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_space = true;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic number formatting for CSV/report output.

// Shortest representation that round-trips a double exactly.
inline std::string fmt_full(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  double back = std::strtod(buf, nullptr);
  if (back == x) {
    for (int prec = 1; prec < 17; ++prec) {
      char probe[32];
      std::snprintf(probe, sizeof probe, "%.*g", prec, x);
      if (std::strtod(probe, nullptr) == x) return probe;
    }
  }
  return buf;
}

inline std::string fmt_fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

}  // namespace livingmeta

#endif
