#include "blankopt/config.hpp"

#include <boost/property_tree/ini_parser.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace blankopt {

namespace pt = boost::property_tree;

namespace {

// The ini parser only understands ';' comments; strip '#' comments and
// trailing inline comments before handing the text over.
std::string strip_comments(const std::string& text) {
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    const auto cut = line.find_first_of(";#");
    if (cut != std::string::npos) line.erase(cut);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    out << line << '\n';
  }
  return out.str();
}

std::vector<double> split_numbers(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': '" + value + "' is not a number list");
    }
  }
  return out;
}

}  // namespace

Config Config::from_string(const std::string& text) {
  Config c;
  std::istringstream in(strip_comments(text));
  try {
    pt::ini_parser::read_ini(in, c.tree_);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return c;
}

Config Config::from_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return from_string(ss.str());
}

bool Config::has(const std::string& key) const { return tree_.get_child_optional(key).has_value(); }

std::string Config::get_string(const std::string& key) const {
  auto v = tree_.get_optional<std::string>(key);
  if (!v) throw ConfigError("missing config key '" + key + "'");
  return *v;
}

double Config::get_double(const std::string& key) const {
  const auto v = split_numbers(key, get_string(key));
  if (v.size() != 1) throw ConfigError("config key '" + key + "' expects one number");
  return v[0];
}

long long Config::get_int(const std::string& key) const {
  const double d = get_double(key);
  if (d != static_cast<double>(static_cast<long long>(d)))
    throw ConfigError("config key '" + key + "' expects an integer");
  return static_cast<long long>(d);
}

bool Config::get_bool(const std::string& key) const {
  const std::string s = get_string(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("config key '" + key + "' expects a boolean, got '" + s + "'");
}

Vec2 Config::get_vec2(const std::string& key) const {
  const auto v = split_numbers(key, get_string(key));
  if (v.size() != 2) throw ConfigError("config key '" + key + "' expects two numbers");
  return {v[0], v[1]};
}

std::vector<double> Config::get_doubles(const std::string& key) const {
  return split_numbers(key, get_string(key));
}

std::vector<int> Config::get_ints(const std::string& key) const {
  std::vector<int> out;
  for (double d : get_doubles(key)) {
    if (d != static_cast<double>(static_cast<int>(d)))
      throw ConfigError("config key '" + key + "' expects integers");
    out.push_back(static_cast<int>(d));
  }
  return out;
}

double Config::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}
long long Config::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}
bool Config::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}
std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

void Config::set(const std::string& key, const std::string& value) { tree_.put(key, value); }

std::string Config::canonical() const {
  std::map<std::string, std::map<std::string, std::string>> sorted;
  for (const auto& [sec, child] : tree_) {
    auto& m = sorted[sec];
    for (const auto& [k, v] : child) {
      std::istringstream in(v.data());
      std::string tok, joined;
      while (in >> tok) joined += (joined.empty() ? "" : " ") + tok;
      m[k] = joined;
    }
  }
  std::string out;
  for (const auto& [sec, m] : sorted) {
    out += "[" + sec + "]\n";
    for (const auto& [k, v] : m) out += k + " = " + v + "\n";
  }
  return out;
}

std::string Config::hash() const { return hex64(fnv1a64(canonical())); }

std::vector<std::string> Config::sections() const {
  std::vector<std::string> out;
  for (const auto& kv : tree_) out.push_back(kv.first);
  return out;
}

Config Config::section(const std::string& name) const {
  Config c;
  if (auto child = tree_.get_child_optional(name)) c.tree_.add_child(name, *child);
  return c;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace blankopt
