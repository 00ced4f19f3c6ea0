#ifndef LIVINGMETA_CONFIG_HPP
#define LIVINGMETA_CONFIG_HPP

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "livingmeta/common.hpp"

namespace livingmeta {

// Flat "key = value" configuration, '#' comments. Carries prior overrides,
// sensitivity grids, and schedule metadata for the CLI.
class Config {
 public:
  static Config from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail_validation("cannot open config file: " + path);
    Config cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      std::string t = trim(line);
      if (t.empty()) continue;
      auto eq = t.find('=');
      if (eq == std::string::npos)
        fail_validation(path + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
      std::string key = trim(t.substr(0, eq));
      std::string val = trim(t.substr(eq + 1));
      if (key.empty())
        fail_validation(path + ":" + std::to_string(line_no) + ": empty key");
      cfg.values_[key] = val;
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    char* end = nullptr;
    double v = std::strtod(it->second.c_str(), &end);
    if (end == it->second.c_str() || *end != '\0')
      fail_validation("config key '" + key + "': not a number: " + it->second);
    return v;
  }

  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    for (const auto& part : split(it->second, ',')) {
      std::string p = trim(part);
      if (p.empty()) continue;
      char* end = nullptr;
      double v = std::strtod(p.c_str(), &end);
      if (end == p.c_str() || *end != '\0')
        fail_validation("config key '" + key + "': not a number: " + p);
      out.push_back(v);
    }
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace livingmeta

#endif
