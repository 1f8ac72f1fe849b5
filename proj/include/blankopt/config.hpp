#pragma once

#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "blankopt/vec2.hpp"

namespace blankopt {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Line-oriented `key = value` text with `[section]` headers, `;` or `#`
// comments. Keys are addressed as "section.key".
class Config {
 public:
  Config() = default;
  static Config from_file(const std::filesystem::path& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  Vec2 get_vec2(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;

  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;

  void set(const std::string& key, const std::string& value);

  // Canonical text: sections and keys sorted, whitespace normalised.
  std::string canonical() const;
  // FNV-1a 64 of canonical(), as 16 hex digits.
  std::string hash() const;

  std::vector<std::string> sections() const;
  Config section(const std::string& name) const;

 private:
  boost::property_tree::ptree tree_;
};

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace blankopt
