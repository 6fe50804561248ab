#pragma once

// Flat "dotted.key = value" configuration text.
//
//   # comment
//   dataset.kind = blobs
//   discrim.a    = 0.27

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "discrim/errors.hpp"

namespace discrim {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string part;
  std::stringstream in(s);
  while (std::getline(in, part, sep)) parts.push_back(trim(part));
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw NumericError("cannot format number");
  return {buf, end};
}

class ConfigMap {
 public:
  static ConfigMap parse(const std::string& text, const std::string& origin = "<config>") {
    ConfigMap out;
    std::stringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
      ++number;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(origin + ":" + std::to_string(number) + ": expected key = value");
      }
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(number) + ": empty key");
      out.values_[key] = trim(line.substr(eq + 1));
    }
    return out;
  }

  static ConfigMap load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), path.string());
  }

  bool contains(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set(const std::string& key, double value) { values_[key] = format_double(value); }
  void erase(const std::string& key) { values_.erase(key); }

  std::string get(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_double(key, it->second);
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::int64_t v = 0;
    const auto& s = it->second;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size()) {
      throw ConfigError(key + ": expected an integer, got '" + s + "'");
    }
    return v;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + it->second + "'");
  }

  static double parse_double(const std::string& key, const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected a number, got '" + s + "'");
    }
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  std::string to_text() const {
    std::string out;
    for (const auto& [key, value] : values_) out += key + " = " + value + "\n";
    return out;
  }

  bool operator==(const ConfigMap&) const = default;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace discrim
