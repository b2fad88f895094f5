#pragma once

// Flat sectioned key-value config files:
//
//   [data]
//   num_classes = 4
//   shift_kind = color-invert
//
// Missing required keys raise ConfigError carrying the key name.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <boost/property_tree/ptree.hpp>

#include "souf/common.hpp"

namespace souf {

class ConfigFile {
 public:
  ConfigFile() = default;
  static ConfigFile load(const std::filesystem::path& path);
  static ConfigFile parse(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  std::optional<std::string> raw(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, const std::string& value);

  std::string require_string(const std::string& section, const std::string& key) const;
  double require_double(const std::string& section, const std::string& key) const;
  std::int64_t require_int(const std::string& section, const std::string& key) const;

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& section, const std::string& key,
                       std::int64_t fallback) const;
  /// Accepts true/false, yes/no, on/off, 1/0.
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

  /// Canonical "section.key=value" lines, sorted; independent of file key order.
  std::string canonical() const;
  /// FNV-1a of `canonical()`.
  std::uint64_t hash() const;

  std::string to_text() const;

 private:
  // section -> key -> value; std::map keeps canonical order.
  std::map<std::string, std::map<std::string, std::string>> values_;
};

}  // namespace souf
