#include "souf/config_file.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>

namespace souf {

namespace {

std::string full_key(const std::string& section, const std::string& key) {
  return "[" + section + "]." + key;
}

double to_double(const std::string& section, const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("config value " + full_key(section, key) + " = '" + v + "' is not a number",
                      key);
  return out;
}

std::int64_t to_int(const std::string& section, const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(
        "config value " + full_key(section, key) + " = '" + v + "' is not an integer", key);
  return out;
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  ConfigFile cfg;
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) throw ConfigError("config key '" + section + "' is outside any section");
    for (const auto& [key, value] : body) cfg.values_[section][key] = value.get_value<std::string>();
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  return raw(section, key).has_value();
}

std::optional<std::string> ConfigFile::raw(const std::string& section,
                                           const std::string& key) const {
  auto s = values_.find(section);
  if (s == values_.end()) return std::nullopt;
  auto k = s->second.find(key);
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

void ConfigFile::set(const std::string& section, const std::string& key,
                     const std::string& value) {
  values_[section][key] = value;
}

std::string ConfigFile::require_string(const std::string& section, const std::string& key) const {
  auto v = raw(section, key);
  if (!v) throw ConfigError("missing config key " + full_key(section, key), key);
  return *v;
}

double ConfigFile::require_double(const std::string& section, const std::string& key) const {
  return to_double(section, key, require_string(section, key));
}

std::int64_t ConfigFile::require_int(const std::string& section, const std::string& key) const {
  return to_int(section, key, require_string(section, key));
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) const {
  return raw(section, key).value_or(fallback);
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
  auto v = raw(section, key);
  return v ? to_double(section, key, *v) : fallback;
}

std::int64_t ConfigFile::get_int(const std::string& section, const std::string& key,
                                 std::int64_t fallback) const {
  auto v = raw(section, key);
  return v ? to_int(section, key, *v) : fallback;
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  auto v = raw(section, key);
  if (!v) return fallback;
  std::string s = *v;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  throw ConfigError("[" + section + "]." + key + " is not a boolean: '" + *v + "'", key);
}

std::string ConfigFile::canonical() const {
  std::string out;
  for (const auto& [section, body] : values_)
    for (const auto& [key, value] : body) out += section + "." + key + "=" + value + "\n";
  return out;
}

std::uint64_t ConfigFile::hash() const { return fnv1a(canonical()); }

std::string ConfigFile::to_text() const {
  std::string out;
  for (const auto& [section, body] : values_) {
    out += "[" + section + "]\n";
    for (const auto& [key, value] : body) out += key + " = " + value + "\n";
    out += "\n";
  }
  return out;
}

}  // namespace souf
