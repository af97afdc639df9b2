#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace psaem {

// Flat INI-style configuration: [section] headers, key = value lines, '#'
// comments. Keys are stored as "section.key". Values stay strings until a
// typed accessor is called; every accessor failure names the offending key.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str());
  }

  static Config from_string(const std::string& text) {
    Config cfg;
    std::stringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw std::runtime_error("config: malformed section at line " + std::to_string(lineno));
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("config: expected key = value at line " + std::to_string(lineno));
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw std::runtime_error("config: empty key at line " + std::to_string(lineno));
      cfg.values_[section.empty() ? key : section + "." + key] = value;
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw std::runtime_error("config: missing key '" + key + "'");
    return it->second;
  }
  std::string get_str(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key) const { return parse_double(key, get_str(key)); }
  double get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }

  std::int64_t get_int(const std::string& key) const { return parse_int(key, get_str(key)); }
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
  }

  std::vector<double> get_doubles(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(get_str(key));
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(parse_double(key, trim(cell)));
    return out;
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  // Serializes back to the file format, grouped by section; the result parses
  // to an identical configuration, which is what makes manifests re-runnable.
  std::string to_string() const {
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> by_section;
    for (const auto& [full, value] : values_) {
      const auto dot = full.find('.');
      if (dot == std::string::npos)
        by_section[""].emplace_back(full, value);
      else
        by_section[full.substr(0, dot)].emplace_back(full.substr(dot + 1), value);
    }
    std::string out;
    for (const auto& [section, kvs] : by_section) {
      if (!section.empty()) out += "[" + section + "]\n";
      for (const auto& [k, v] : kvs) out += k + " = " + v + "\n";
    }
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }
  static double parse_double(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      const double x = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw std::runtime_error("config: key '" + key + "' is not a number: '" + v + "'");
    }
  }
  static std::int64_t parse_int(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      const long long x = std::stoll(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::exception&) {
      throw std::runtime_error("config: key '" + key + "' is not an integer: '" + v + "'");
    }
  }

  std::map<std::string, std::string> values_;
};

}  // namespace psaem
